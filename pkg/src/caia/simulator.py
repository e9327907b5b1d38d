"""Synthetic target model for desk-scale verification of the attack.

The simulator realizes the core leakage hypothesis directly: a class's logit
is higher on inputs that share its hidden attribute value. Each logit is

    logit[y] = b_y + mu * 1[value == truth(y)] + d_(tuple,value) + eps_(y,tuple,value)

where ``b_y`` is a fixed per-class base offset, ``mu`` is the attribute-match
bonus (the signal), ``d`` is a per-(tuple, value) confounder shared across
all classes (models generation artifacts entangled with the edit, e.g. a
gray-hair edit also aging the face), and ``eps`` is i.i.d. noise.

Every draw comes from a counter-based generator keyed by
(seed, stream, tuple_id, value), so logits are a pure function of the
scenario config and the query: serving is stateless, request order is
irrelevant, and regeneration is bitwise identical.

``serve`` exposes a scenario through the oracle HTTP protocol. In simulator
mode the base64 "images" carry UTF-8 payloads ``"<tuple_id>/<value>"``
instead of PNG bytes; the metadata name field advertises this as
``"caia-sim/1"``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
from base64 import b64decode
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np

from .core import AttackTuple, AttributeSpace, LogitBatch
from .errors import ConfigurationError, DomainError

logger = logging.getLogger(__name__)

SIMULATOR_NAME = "caia-sim/1"
SIMULATOR_INPUT_SIZE = (224, 224)

# Stub confidence for /v1/attribute_scores: softmax of this logit on the
# intended value, 0 elsewhere. Clears the usual tau=0.6 for k up to 11.
_SCORE_SHARPNESS = 2.5


@dataclass(frozen=True)
class ScenarioConfig:
    """Parameters of one synthetic scenario.

    ``mu`` is the attribute-match logit bonus, ``sigma`` the per-image noise
    std, ``sigma_c`` the per-(tuple, value) confounder std, ``base_std`` the
    spread of fixed per-class base logits. ``num_classes`` must be divisible
    by the number of attribute values so ground truth is balanced.
    """

    num_classes: int
    attribute: AttributeSpace
    mu: float
    sigma: float
    sigma_c: float
    base_std: float
    num_tuples: int
    seed: int

    def __post_init__(self):
        k = self.attribute.k
        if self.num_classes < k or self.num_classes % k != 0:
            raise ConfigurationError(
                f"num_classes={self.num_classes} must be a positive multiple "
                f"of k={k} for balanced ground truth"
            )
        if self.num_tuples < 1:
            raise ConfigurationError(f"num_tuples must be >= 1, got {self.num_tuples}")
        for field_name in ("mu", "sigma", "sigma_c", "base_std"):
            if getattr(self, field_name) < 0:
                raise ConfigurationError(f"{field_name} must be >= 0")


class Scenario:
    """A realized scenario: balanced ground truth plus the fixed base logits.

    All other randomness (confounders, noise) is drawn lazily per query from
    keyed streams, so two Scenario objects built from equal configs behave
    bitwise identically.
    """

    def __init__(self, config: ScenarioConfig):
        self.config = config
        k = config.attribute.k
        assignment = np.arange(config.num_classes) % k  # round-robin
        perm = _keyed_rng(config.seed, "ground-truth").permutation(config.num_classes)
        self.truth_indices = assignment[perm]
        self.base = _keyed_rng(config.seed, "base").normal(
            0.0, config.base_std, config.num_classes
        )

    @property
    def attribute(self) -> AttributeSpace:
        return self.config.attribute

    @property
    def num_classes(self) -> int:
        return self.config.num_classes

    def ground_truth(self) -> dict[int, str]:
        values = self.config.attribute.values
        return {
            class_id: values[idx] for class_id, idx in enumerate(self.truth_indices)
        }

    def tuple_ids(self) -> list[str]:
        width = max(5, len(str(self.config.num_tuples - 1)))
        return [f"t{i:0{width}d}" for i in range(self.config.num_tuples)]

    def attack_tuples(self) -> list[AttackTuple]:
        """Attack-set tuples whose image references are simulator payloads."""
        values = self.config.attribute.values
        return [
            AttackTuple(tuple_id=tid, images={v: f"{tid}/{v}" for v in values})
            for tid in self.tuple_ids()
        ]


def _keyed_rng(seed: int, stream: str, *parts: str) -> np.random.Generator:
    """Counter-based generator keyed by (seed, stream, parts).

    Philox keyed through a 128-bit hash of the label: stateless, order
    independent, stable across runs and platforms.
    """
    label = "\x1f".join([str(seed), stream, *parts]).encode("utf-8")
    key = int.from_bytes(hashlib.blake2b(label, digest_size=16).digest(), "little")
    return np.random.Generator(np.random.Philox(key=key))


def generate_scenario(config: ScenarioConfig) -> Scenario:
    """Build the scenario for a config; bitwise reproducible."""
    return Scenario(config)


def simulate_logits(scenario: Scenario, tuple_id: str, value: str) -> np.ndarray:
    """Logit vector over all classes for one (tuple, value) query.

    Pure function of (config, tuple_id, value); repeated calls are bitwise
    identical.
    """
    config = scenario.config
    if value not in config.attribute.values:
        raise DomainError(
            f"value '{value}' not in attribute '{config.attribute.name}'"
        )
    idx = config.attribute.values.index(value)
    confounder = float(
        _keyed_rng(config.seed, "confounder", tuple_id, value).normal(0.0, config.sigma_c)
    )
    noise = _keyed_rng(config.seed, "noise", tuple_id, value).normal(
        0.0, config.sigma, config.num_classes
    )
    match = (scenario.truth_indices == idx).astype(np.float64)
    return scenario.base + config.mu * match + confounder + noise


def tuple_logit_matrix(scenario: Scenario, tuple_id: str) -> np.ndarray:
    """Stack simulate_logits over all values: shape (k, num_classes)."""
    return np.stack(
        [simulate_logits(scenario, tuple_id, v) for v in scenario.attribute.values]
    )


def attribute_score_vector(space: AttributeSpace, value: str) -> np.ndarray:
    """Deterministic stub softmax scores: confident in the intended value."""
    if value not in space.values:
        raise DomainError(f"value '{value}' not in attribute '{space.name}'")
    logits = np.zeros(space.k)
    logits[space.values.index(value)] = _SCORE_SHARPNESS
    e = np.exp(logits)
    return e / e.sum()


def parse_payload(payload: bytes, space: AttributeSpace) -> tuple[str, str]:
    """Split a simulator payload ``b"<tuple_id>/<value>"``; raise DomainError if malformed."""
    try:
        text = payload.decode("utf-8")
    except UnicodeDecodeError:
        raise DomainError("payload is not UTF-8") from None
    if "/" not in text:
        raise DomainError(f"payload '{text}' is not of the form <tuple_id>/<value>")
    tuple_id, value = text.rsplit("/", 1)
    if value not in space.values:
        raise DomainError(f"payload value '{value}' not in attribute space")
    return tuple_id, value


class SimulatorLogitProvider:
    """In-process oracle over a scenario, for direct library use."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.num_classes = scenario.num_classes

    def fetch(self, requests) -> LogitBatch:
        if not requests:
            raise ConfigurationError("empty request list")
        rows = [
            simulate_logits(self.scenario, r.tuple_id, r.value) for r in requests
        ]
        keys = tuple((r.tuple_id, r.value) for r in requests)
        return LogitBatch(keys=keys, matrix=np.stack(rows))

    def attribute_scores(self, images: list[str]) -> np.ndarray:
        space = self.scenario.attribute
        rows = []
        for ref in images:
            _, value = parse_payload(ref.encode("utf-8"), space)
            rows.append(attribute_score_vector(space, value))
        return np.stack(rows)


def load_scenario_config(path: str | Path) -> ScenarioConfig:
    """Read a scenario config JSON file (fields mirror ScenarioConfig)."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    try:
        attr = raw["attribute"]
        space = AttributeSpace(
            name=attr["name"],
            values=tuple(attr["values"]),
            prompts=attr.get("prompts"),
        )
        return ScenarioConfig(
            num_classes=int(raw["num_classes"]),
            attribute=space,
            mu=float(raw["mu"]),
            sigma=float(raw["sigma"]),
            sigma_c=float(raw["sigma_c"]),
            base_std=float(raw["base_std"]),
            num_tuples=int(raw["num_tuples"]),
            seed=int(raw["seed"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"invalid scenario config {path}: {exc}") from exc


def save_scenario_config(path: str | Path, config: ScenarioConfig) -> None:
    doc = {
        "num_classes": config.num_classes,
        "attribute": {
            "name": config.attribute.name,
            "values": list(config.attribute.values),
        },
        "mu": config.mu,
        "sigma": config.sigma,
        "sigma_c": config.sigma_c,
        "base_std": config.base_std,
        "num_tuples": config.num_tuples,
        "seed": config.seed,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


class _SimulatorHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):  # route request noise to debug logging
        logger.debug("%s - %s", self.address_string(), fmt % args)

    def _send_json(self, status: int, obj) -> None:
        body = json.dumps(obj).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _read_body(self):
        length = int(self.headers.get("Content-Length", "0"))
        return json.loads(self.rfile.read(length))

    def do_GET(self):
        scenario: Scenario = self.server.scenario
        if self.path != "/v1/metadata":
            self._send_json(400, {"error": f"unknown path {self.path}"})
            return
        self._send_json(
            200,
            {
                "num_classes": scenario.num_classes,
                "name": SIMULATOR_NAME,
                "input_size": list(SIMULATOR_INPUT_SIZE),
            },
        )

    def do_POST(self):
        scenario: Scenario = self.server.scenario
        try:
            body = self._read_body()
        except (json.JSONDecodeError, ValueError):
            self._send_json(400, {"error": "malformed JSON body"})
            return
        try:
            if self.path == "/v1/logits":
                self._handle_logits(scenario, body)
            elif self.path == "/v1/attribute_scores":
                self._handle_scores(scenario, body)
            else:
                self._send_json(400, {"error": f"unknown path {self.path}"})
        except DomainError as exc:
            self._send_json(422, {"error": str(exc)})
        except Exception as exc:  # pragma: no cover - defensive 500
            logger.exception("simulator failure")
            self._send_json(500, {"error": str(exc)})

    def _decode_images(self, body) -> list[bytes]:
        images = body.get("images")
        if not isinstance(images, list) or not images:
            raise ValueError("body must carry a non-empty 'images' list")
        try:
            return [b64decode(img, validate=True) for img in images]
        except Exception:
            raise DomainError("image payload is not valid base64") from None

    def _handle_logits(self, scenario: Scenario, body):
        try:
            payloads = self._decode_images(body)
        except ValueError as exc:
            self._send_json(400, {"error": str(exc)})
            return
        rows = []
        for payload in payloads:
            tuple_id, value = parse_payload(payload, scenario.attribute)
            rows.append(simulate_logits(scenario, tuple_id, value).tolist())
        self._send_json(200, {"logits": rows})

    def _handle_scores(self, scenario: Scenario, body):
        space = scenario.attribute
        if body.get("attribute") != space.name:
            self._send_json(
                400, {"error": f"unknown attribute {body.get('attribute')!r}"}
            )
            return
        requested = body.get("values")
        if not isinstance(requested, list) or set(requested) != set(space.values):
            self._send_json(400, {"error": "values do not match the scenario attribute"})
            return
        try:
            payloads = self._decode_images(body)
        except ValueError as exc:
            self._send_json(400, {"error": str(exc)})
            return
        rows = []
        for payload in payloads:
            _, value = parse_payload(payload, space)
            scores = attribute_score_vector(space, value)
            # respond in the caller's requested value order
            reorder = [space.values.index(v) for v in requested]
            rows.append(scores[reorder].tolist())
        self._send_json(200, {"scores": rows})


class SimulatorServer:
    """A running simulator oracle; use as a context manager in tests."""

    def __init__(self, scenario: Scenario, host: str = "127.0.0.1", port: int = 0):
        self._httpd = ThreadingHTTPServer((host, port), _SimulatorHandler)
        self._httpd.scenario = scenario
        self._started = False
        self._thread = threading.Thread(
            target=self._httpd.serve_forever, name="caia-sim", daemon=True
        )

    @property
    def address(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "SimulatorServer":
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

    def __enter__(self) -> "SimulatorServer":
        return self.start()

    def __exit__(self, *exc):
        self.shutdown()


def serve(scenario: Scenario, bind_address: str = "127.0.0.1:0") -> SimulatorServer:
    """Start serving a scenario over the oracle HTTP protocol.

    ``bind_address`` is ``"host:port"``; port 0 picks an ephemeral port.
    Returns the started server; call ``.shutdown()`` when done.
    """
    host, _, port_text = bind_address.partition(":")
    try:
        port = int(port_text) if port_text else 0
    except ValueError:
        raise ConfigurationError(f"invalid bind address '{bind_address}'") from None
    return SimulatorServer(scenario, host=host or "127.0.0.1", port=port).start()
