"""NDJSON export of reports and monitoring stats to a file or an HTTP ingest endpoint."""

from __future__ import annotations

import json
import logging
import os
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

log = logging.getLogger(__name__)

EVENT_TYPES = ("run_report", "segment_stats", "probe_result", "monitor_tick")


class ExportError(Exception):
    def __init__(self, message, delivered: int = 0, dead_letter: Optional[Path] = None):
        super().__init__(message)
        self.delivered = delivered
        self.dead_letter = dead_letter


@dataclass(frozen=True)
class ExportEnvelope:
    event_type: str
    at: float
    payload: dict

    def __post_init__(self):
        if self.event_type not in EVENT_TYPES:
            raise ValueError(f"unknown event type {self.event_type!r}")

    def to_line(self) -> str:
        return json.dumps(
            {"event_type": self.event_type, "at": self.at, "payload": self.payload},
            sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False,
        )

    @classmethod
    def from_dict(cls, d):
        return cls(d["event_type"], float(d["at"]), d["payload"])


def parse_ndjson(text: str) -> list:
    # split on "\n" only: str.splitlines would also break on U+2028 and friends inside strings
    return [ExportEnvelope.from_dict(json.loads(line)) for line in text.split("\n") if line.strip()]


def to_ndjson(events) -> str:
    return "".join(e.to_line() + "\n" for e in events)


@dataclass(frozen=True)
class ExportSink:
    kind: str  # "file" | "http"
    target: str
    batch_size: int = 100
    auth_token_env: Optional[str] = None
    max_attempts: int = 4
    backoff_s: float = 0.5
    timeout_s: float = 10.0
    dead_letter: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("file", "http"):
            raise ValueError(f"sink kind must be file|http, got {self.kind!r}")
        if self.batch_size < 1 or self.max_attempts < 1:
            raise ValueError("batch_size and max_attempts must be >= 1")

    @property
    def dead_letter_path(self) -> Path:
        if self.dead_letter:
            return Path(self.dead_letter)
        if self.kind == "file":
            return Path(str(self.target) + ".dead")
        return Path("xferbench-dead-letter.ndjson")

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class DeliveryResult:
    delivered: int
    attempts: int


def _append(path: Path, body: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(body)
        fh.flush()
        os.fsync(fh.fileno())


def http_post(url: str, body: bytes, headers: dict, timeout: float) -> int:
    req = urllib.request.Request(url, data=body, headers=headers, method="POST")
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return resp.status
    except urllib.error.HTTPError as exc:
        return exc.code


def export_batch(sink: ExportSink, events, *, post: Callable = http_post,
                 sleep: Callable = time.sleep) -> DeliveryResult:
    """Deliver ``events`` in chunks of ``sink.batch_size``.

    HTTP chunks are retried with exponential backoff. When a chunk still
    fails, it and every later chunk go to the dead-letter file and
    ``ExportError`` is raised.
    """
    events = list(events)
    if not events:
        raise ValueError("no events to export")
    chunks = [events[i:i + sink.batch_size] for i in range(0, len(events), sink.batch_size)]
    delivered = attempts = 0
    for idx, chunk in enumerate(chunks):
        body = to_ndjson(chunk)
        if sink.kind == "file":
            _append(Path(sink.target), body)
            attempts += 1
            delivered += len(chunk)
            continue
        headers = {"Content-Type": "application/x-ndjson"}
        if sink.auth_token_env:
            token = os.environ.get(sink.auth_token_env)
            if token:
                headers["Authorization"] = f"Bearer {token}"
        last = None
        for attempt in range(sink.max_attempts):
            attempts += 1
            try:
                status = post(sink.target, body.encode("utf-8"), headers, sink.timeout_s)
                last = f"HTTP {status}"
            except (OSError, TimeoutError) as exc:
                status, last = None, f"{type(exc).__name__}: {exc}"
            if status is not None and 200 <= status < 300:
                delivered += len(chunk)
                break
            if attempt + 1 < sink.max_attempts:
                sleep(sink.backoff_s * 2 ** attempt)
        else:
            rest = [e for c in chunks[idx:] for e in c]
            dead = sink.dead_letter_path
            _append(dead, to_ndjson(rest))
            log.error("export to %s failed (%s); %d events dead-lettered to %s", sink.target, last, len(rest), dead)
            raise ExportError(f"delivery failed after {sink.max_attempts} attempts: {last}", delivered, dead)
    return DeliveryResult(delivered, attempts)


class Exporter:
    """Serializes delivery per sink so event order is preserved."""

    def __init__(self, sink: ExportSink, **kw):
        self.sink = sink
        self._kw = kw
        self._lock = threading.Lock()

    def send(self, events) -> DeliveryResult:
        with self._lock:
            return export_batch(self.sink, events, **self._kw)
