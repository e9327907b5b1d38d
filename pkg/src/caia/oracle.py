"""Uniform black-box access to target-model logits and attribute scores.

Three interchangeable providers sit behind one interface: pre-recorded
logits from a JSON Lines file, a remote HTTP oracle, and the in-process
simulator. For a fixed underlying model they return identical batches for
identical requests, in request order, regardless of internal batching or
concurrency — the attack math never knows which transport it is using.

Logit file format (JSON Lines):
    {"format": "caia-logits/1", "num_classes": <int>}          <- header
    {"tuple_id": "...", "value": "...", "logits": [<f64>...]}  <- per record
"""

from __future__ import annotations

import json
import logging
import time
from base64 import b64encode
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import requests as _requests

from .core import LogitBatch, LogitRecord, LogitRequest
from .errors import (
    ConfigurationError,
    MissingRecordError,
    ProtocolError,
    TransportError,
)
from .simulator import (
    SIMULATOR_INPUT_SIZE,
    SIMULATOR_NAME,
    SimulatorLogitProvider,
    generate_scenario,
    load_scenario_config,
)

logger = logging.getLogger(__name__)

LOGIT_FILE_FORMAT = "caia-logits/1"

ORACLE_KINDS = ("file", "http", "simulator")


@dataclass
class OracleDescriptor:
    """Where an oracle lives and how to talk to it.

    ``locator`` is a JSONL path (file), base URL (http), or scenario config
    path (simulator). ``num_classes`` may be left unset and cached from
    :func:`metadata`. ``payload`` controls how the http provider turns image
    references into wire bytes: ``"file"`` reads the referenced path,
    ``"inline"`` sends ``"<tuple_id>/<value>"`` (the simulator convention),
    ``"auto"`` picks inline iff the server's metadata name is the simulator.
    """

    kind: str
    locator: str
    num_classes: int | None = None
    batch_size: int = 64
    payload: str = "auto"

    def __post_init__(self):
        if self.kind not in ORACLE_KINDS:
            raise ConfigurationError(
                f"oracle kind '{self.kind}' not one of {ORACLE_KINDS}"
            )
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.num_classes is not None and self.num_classes < 2:
            raise ConfigurationError(
                f"num_classes must be >= 2, got {self.num_classes}"
            )
        if self.payload not in ("auto", "file", "inline"):
            raise ConfigurationError(f"payload mode '{self.payload}' unknown")


@dataclass(frozen=True)
class OracleMetadata:
    num_classes: int
    name: str
    input_size: tuple[int, int] | None = None


class InMemoryLogitProvider:
    """Logit oracle over a fixed set of records; backs the file provider.

    Rows are aligned to requests by explicit (tuple_id, value) keys rather
    than positional trust — logit files are hand-editable.
    """

    def __init__(
        self,
        records: Iterable[LogitRecord],
        num_classes: int,
        name: str = "caia-memory",
    ):
        if num_classes < 1:
            raise ConfigurationError(f"num_classes must be >= 1, got {num_classes}")
        self.num_classes = num_classes
        self.name = name
        self._rows: dict[tuple[str, str], np.ndarray] = {}
        for rec in records:
            key = (rec.tuple_id, rec.value)
            if key in self._rows:
                raise ConfigurationError(
                    f"duplicate logit record for tuple '{rec.tuple_id}' "
                    f"value '{rec.value}'"
                )
            if rec.logits.shape != (num_classes,):
                raise ProtocolError(
                    f"record {key} has {rec.logits.shape[0] if rec.logits.ndim == 1 else rec.logits.shape} "
                    f"logits, expected {num_classes}"
                )
            if not np.isfinite(rec.logits).all():
                raise ProtocolError(f"record {key} contains non-finite logits")
            self._rows[key] = rec.logits

    def metadata(self) -> OracleMetadata:
        return OracleMetadata(self.num_classes, self.name)

    def fetch(self, requests: Sequence[LogitRequest]) -> LogitBatch:
        if not requests:
            raise ConfigurationError("empty request list")
        missing = [
            (r.tuple_id, r.value)
            for r in requests
            if (r.tuple_id, r.value) not in self._rows
        ]
        if missing:
            raise MissingRecordError(
                f"no logit record for keys {missing[:5]}"
                + (f" (+{len(missing) - 5} more)" if len(missing) > 5 else ""),
                keys=missing,
            )
        keys = tuple((r.tuple_id, r.value) for r in requests)
        matrix = np.stack([self._rows[key] for key in keys])
        return LogitBatch(keys=keys, matrix=matrix)


def read_logit_file(path: str | Path) -> InMemoryLogitProvider:
    """Load a caia-logits/1 JSONL file into an in-memory provider."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        header_line = fh.readline()
        if not header_line.strip():
            raise ConfigurationError(f"{path}: missing header line")
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: unparseable header: {exc}") from exc
        if header.get("format") != LOGIT_FILE_FORMAT:
            raise ConfigurationError(
                f"{path}: format {header.get('format')!r} is not '{LOGIT_FILE_FORMAT}'"
            )
        if "num_classes" not in header:
            raise ConfigurationError(f"{path}: header lacks num_classes")
        num_classes = int(header["num_classes"])
        records = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                records.append(
                    LogitRecord(
                        tuple_id=raw["tuple_id"],
                        value=raw["value"],
                        logits=np.asarray(raw["logits"], dtype=np.float64),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ConfigurationError(f"{path}:{lineno}: bad record: {exc}") from exc
    return InMemoryLogitProvider(
        records, num_classes, name=header.get("name", f"caia-file:{path.name}")
    )


def write_logit_file(
    path: str | Path,
    records: Iterable[LogitRecord],
    num_classes: int,
    name: str | None = None,
) -> int:
    """Write records in the caia-logits/1 JSONL format; returns record count."""
    header: dict = {"format": LOGIT_FILE_FORMAT, "num_classes": num_classes}
    if name:
        header["name"] = name
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        for rec in records:
            if rec.logits.shape != (num_classes,):
                raise ProtocolError(
                    f"record ({rec.tuple_id}, {rec.value}) has wrong width"
                )
            fh.write(
                json.dumps(
                    {
                        "tuple_id": rec.tuple_id,
                        "value": rec.value,
                        "logits": rec.logits.tolist(),
                    }
                )
                + "\n"
            )
            count += 1
    return count


class HttpLogitProvider:
    """Client for the oracle HTTP protocol with batching and retries.

    Requests are split into ``batch_size`` chunks with at most
    ``max_inflight`` concurrently dispatched; responses are reassembled in
    request order before returning. Connection-level failures are retried
    ``retries`` times with exponential backoff starting at ``backoff``
    seconds, then the batch fails with a TransportError (the attack skips
    the affected tuples whole).
    """

    def __init__(
        self,
        base_url: str,
        batch_size: int = 64,
        max_inflight: int = 4,
        timeout: float = 30.0,
        retries: int = 3,
        backoff: float = 0.1,
        payload: str = "auto",
        session: _requests.Session | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.batch_size = batch_size
        self.max_inflight = max_inflight
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self._session = session or _requests.Session()
        meta = self._fetch_metadata()
        self.num_classes = meta.num_classes
        self._meta = meta
        if payload == "auto":
            payload = "inline" if meta.name.startswith("caia-sim") else "file"
        self._payload = payload

    # -- transport ---------------------------------------------------------

    def _request(self, method: str, path: str, body=None):
        url = self.base_url + path
        last_exc: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                resp = self._session.request(
                    method, url, json=body, timeout=self.timeout
                )
            except (_requests.ConnectionError, _requests.Timeout) as exc:
                last_exc = exc
                if attempt < self.retries:
                    time.sleep(self.backoff * (2**attempt))
                continue
            if resp.status_code != 200:
                try:
                    detail = resp.json().get("error", resp.text)
                except ValueError:
                    detail = resp.text
                raise ProtocolError(f"{url} returned {resp.status_code}: {detail}")
            try:
                return resp.json()
            except ValueError as exc:
                raise ProtocolError(f"{url} returned unparseable JSON: {exc}") from exc
        raise TransportError(
            f"{url} unreachable after {self.retries} retries: {last_exc}",
            retries=self.retries,
        )

    def _fetch_metadata(self) -> OracleMetadata:
        raw = self._request("GET", "/v1/metadata")
        try:
            size = raw.get("input_size")
            return OracleMetadata(
                num_classes=int(raw["num_classes"]),
                name=str(raw.get("name", "")),
                input_size=tuple(int(x) for x in size) if size else None,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed metadata response: {raw!r}") from exc

    def metadata(self) -> OracleMetadata:
        return self._meta

    # -- payload encoding ----------------------------------------------------

    def _encode_image(self, request: LogitRequest) -> str:
        if self._payload == "inline":
            raw = f"{request.tuple_id}/{request.value}".encode("utf-8")
        else:
            try:
                raw = Path(request.image).read_bytes()
            except OSError as exc:
                raise ConfigurationError(
                    f"cannot read image '{request.image}': {exc}"
                ) from exc
        return b64encode(raw).decode("ascii")

    def _encode_reference(self, ref: str) -> str:
        if self._payload == "inline":
            return b64encode(ref.encode("utf-8")).decode("ascii")
        try:
            return b64encode(Path(ref).read_bytes()).decode("ascii")
        except OSError as exc:
            raise ConfigurationError(f"cannot read image '{ref}': {exc}") from exc

    # -- batched fetch -------------------------------------------------------

    def fetch(self, requests: Sequence[LogitRequest]) -> LogitBatch:
        if not requests:
            raise ConfigurationError("empty request list")
        images = [self._encode_image(r) for r in requests]
        chunks = [
            images[i : i + self.batch_size]
            for i in range(0, len(images), self.batch_size)
        ]

        def post(chunk):
            return self._request("POST", "/v1/logits", {"images": chunk})

        if len(chunks) == 1:
            responses = [post(chunks[0])]
        else:
            with ThreadPoolExecutor(max_workers=self.max_inflight) as pool:
                # submission order == chunk order; gather preserves it
                responses = list(pool.map(post, chunks))

        rows: list[list[float]] = []
        for raw in responses:
            batch_rows = raw.get("logits")
            if not isinstance(batch_rows, list):
                raise ProtocolError(f"logits response lacks 'logits': {raw!r}")
            rows.extend(batch_rows)
        if len(rows) != len(requests):
            raise ProtocolError(
                f"oracle returned {len(rows)} rows for {len(requests)} requests"
            )
        matrix = np.asarray(rows, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[1] != self.num_classes:
            raise ProtocolError(
                f"row length {matrix.shape} does not match metadata "
                f"num_classes={self.num_classes}"
            )
        keys = tuple((r.tuple_id, r.value) for r in requests)
        return LogitBatch(keys=keys, matrix=matrix)

    def attribute_scores(
        self, attribute_name: str, values: Sequence[str], images: Sequence[str]
    ) -> np.ndarray:
        if not images:
            raise ConfigurationError("empty request list")
        encoded = [self._encode_reference(ref) for ref in images]
        rows: list[list[float]] = []
        for i in range(0, len(encoded), self.batch_size):
            raw = self._request(
                "POST",
                "/v1/attribute_scores",
                {
                    "attribute": attribute_name,
                    "values": list(values),
                    "images": encoded[i : i + self.batch_size],
                },
            )
            chunk = raw.get("scores")
            if not isinstance(chunk, list):
                raise ProtocolError(f"scores response lacks 'scores': {raw!r}")
            rows.extend(chunk)
        matrix = np.asarray(rows, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape != (len(images), len(values)):
            raise ProtocolError(f"scores shape {matrix.shape} malformed")
        _check_probability_rows(matrix)
        return matrix


def _check_probability_rows(matrix: np.ndarray) -> None:
    if not np.isfinite(matrix).all():
        raise ProtocolError("score rows contain non-finite entries")
    sums = matrix.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > 1e-6)
    if bad.size:
        raise ProtocolError(
            f"score rows {bad[:5].tolist()} sum outside 1 +/- 1e-6"
        )


def open_oracle(descriptor: OracleDescriptor):
    """Build the provider a descriptor points at.

    Returns an object with ``num_classes``, ``fetch(requests)`` and
    ``metadata()``; enforces descriptor/provider class-count agreement.
    """
    if descriptor.kind == "file":
        provider = read_logit_file(descriptor.locator)
    elif descriptor.kind == "simulator":
        scenario = generate_scenario(load_scenario_config(descriptor.locator))
        provider = SimulatorLogitProvider(scenario)
    else:
        provider = HttpLogitProvider(
            descriptor.locator,
            batch_size=descriptor.batch_size,
            payload=descriptor.payload,
        )
    if (
        descriptor.num_classes is not None
        and provider.num_classes != descriptor.num_classes
    ):
        raise ProtocolError(
            f"descriptor expects {descriptor.num_classes} classes but the "
            f"oracle reports {provider.num_classes}"
        )
    descriptor.num_classes = provider.num_classes
    return provider


def metadata(descriptor: OracleDescriptor) -> OracleMetadata:
    """Probe an oracle's metadata, caching num_classes into the descriptor."""
    provider = open_oracle(descriptor)
    if hasattr(provider, "metadata"):
        return provider.metadata()
    return OracleMetadata(
        provider.num_classes, SIMULATOR_NAME, SIMULATOR_INPUT_SIZE
    )


def fetch_logits(
    descriptor: OracleDescriptor, requests: Sequence[LogitRequest]
) -> LogitBatch:
    """One-shot fetch through a descriptor; rows in request order."""
    return open_oracle(descriptor).fetch(requests)


def fetch_attribute_scores(
    descriptor: OracleDescriptor, attribute, images: Sequence[str]
) -> np.ndarray:
    """Fetch attribute-classifier softmax rows for image references.

    Rows are length k in ``attribute.values`` order and must sum to
    1 +/- 1e-6 each.
    """
    if not images:
        raise ConfigurationError("empty request list")
    provider = open_oracle(descriptor)
    if isinstance(provider, HttpLogitProvider):
        return provider.attribute_scores(attribute.name, attribute.values, images)
    if isinstance(provider, SimulatorLogitProvider):
        matrix = provider.attribute_scores(list(images))
        _check_probability_rows(matrix)
        return matrix
    raise ConfigurationError(
        f"oracle kind '{descriptor.kind}' does not serve attribute scores"
    )
