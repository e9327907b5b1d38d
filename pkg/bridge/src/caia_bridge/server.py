"""HTTP server implementing the black-box oracle protocol around a model.

Endpoints (bodies are JSON):
  GET  /v1/metadata          -> {"num_classes", "name", "input_size"}
  POST /v1/logits            -> {"logits": [[f64 x num_classes], ...]} pre-softmax
  POST /v1/attribute_scores  -> {"scores": [[f64 x k], ...]} softmax rows
Errors: 400 malformed body or wrong content type, 422 undecodable image,
500 model failure; all with {"error": "..."} bodies.
"""

from __future__ import annotations

import json
import logging
import threading
from base64 import b64decode
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .config import BridgeConfig
from .models import Model, UndecodableImageError, build_model

logger = logging.getLogger(__name__)


class _BridgeHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):
        logger.debug("%s - %s", self.address_string(), fmt % args)

    def _send_json(self, status: int, obj) -> None:
        body = json.dumps(obj).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        config: BridgeConfig = self.server.config
        model: Model = self.server.model
        if self.path != "/v1/metadata":
            self._send_json(400, {"error": f"unknown path {self.path}"})
            return
        self._send_json(
            200,
            {
                "num_classes": model.num_classes,
                "name": model.name,
                "input_size": [config.preprocess.height, config.preprocess.width],
            },
        )

    def _read_images(self, body) -> list[bytes]:
        images = body.get("images")
        if not isinstance(images, list) or not images:
            raise ValueError("body must carry a non-empty 'images' list")
        try:
            return [b64decode(img, validate=True) for img in images]
        except Exception:
            raise UndecodableImageError("image payload is not valid base64") from None

    def do_POST(self):
        config: BridgeConfig = self.server.config
        model: Model = self.server.model
        content_type = self.headers.get("Content-Type", "")
        if not content_type.startswith("application/json"):
            self._send_json(
                400, {"error": f"content type must be application/json, got '{content_type}'"}
            )
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            body = json.loads(self.rfile.read(length))
        except (json.JSONDecodeError, ValueError):
            self._send_json(400, {"error": "malformed JSON body"})
            return

        try:
            if self.path == "/v1/logits":
                if config.mode == "attribute_scores":
                    self._send_json(400, {"error": "bridge is not serving logits"})
                    return
                images = self._read_images(body)
                rows = model.logits(images)
                self._send_json(200, {"logits": rows.tolist()})
            elif self.path == "/v1/attribute_scores":
                if config.mode == "logits":
                    self._send_json(
                        400, {"error": "bridge is not serving attribute scores"}
                    )
                    return
                values = body.get("values")
                if not isinstance(values, list) or len(values) < 2:
                    self._send_json(400, {"error": "body needs a 'values' list (k >= 2)"})
                    return
                images = self._read_images(body)
                rows = model.attribute_scores(images, k=len(values))
                self._send_json(200, {"scores": rows.tolist()})
            else:
                self._send_json(400, {"error": f"unknown path {self.path}"})
        except ValueError as exc:
            self._send_json(400, {"error": str(exc)})
        except UndecodableImageError as exc:
            self._send_json(422, {"error": str(exc)})
        except Exception as exc:
            logger.exception("bridge inference failure")
            self._send_json(500, {"error": str(exc)})


class BridgeServer:
    """A running bridge; context manager shuts it down."""

    def __init__(self, config: BridgeConfig):
        host, _, port_text = config.bind.partition(":")
        port = int(port_text) if port_text else 0
        self._httpd = ThreadingHTTPServer((host or "127.0.0.1", port), _BridgeHandler)
        self._httpd.config = config
        self._httpd.model = build_model(config)
        self._started = False
        self._thread = threading.Thread(
            target=self._httpd.serve_forever, name="caia-bridge", daemon=True
        )

    @property
    def address(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "BridgeServer":
        if not self._started:
            self._started = True
            self._thread.start()
        return self

    def shutdown(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        self._thread.join(timeout=5)

    def join(self) -> None:
        self._thread.join()

    def __enter__(self) -> "BridgeServer":
        return self.start()

    def __exit__(self, *exc):
        self.shutdown()


def serve_bridge(config: BridgeConfig) -> BridgeServer:
    """Build the model and start serving; returns the running server."""
    return BridgeServer(config).start()
