"""Benchmark execution through pluggable transfer backends, log parsing and aggregation."""

from __future__ import annotations

import hashlib
import logging
import math
import os
import shutil
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Protocol

from xferbench.model import (
    BenchmarkAggregates,
    BenchmarkRun,
    TimeWindow,
    TransferFailure,
    TransferRecord,
    speed_from,
)

log = logging.getLogger(__name__)


class BenchmarkError(Exception):
    pass


class BackendUnavailable(BenchmarkError):
    def __init__(self, detail: str = ""):
        msg = "backend unavailable"
        super().__init__(f"{msg}: {detail}" if detail else msg)


class EmptyRun(BenchmarkError):
    """Raised when every transfer of a run failed. Carries what was observed."""

    def __init__(self, window: TimeWindow, failures: tuple, run_id: str):
        super().__init__("empty run")
        self.window = window
        self.failures = failures
        self.run_id = run_id


class TransferFailed(Exception):
    pass


class LogParseError(ValueError):
    pass


@dataclass(frozen=True)
class FileSpec:
    file_name: str
    size_gb: float


@dataclass(frozen=True)
class BenchmarkSpec:
    backend_name: str
    files: tuple
    repetitions: int = 1
    source_id: str = "source"
    dest_pool: tuple = ()

    def __post_init__(self):
        if not self.files:
            raise ValueError("benchmark spec needs at least one file")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")

    @classmethod
    def from_dict(cls, d):
        files = tuple(
            FileSpec(f["file_name"], float(f["size_gb"])) if isinstance(f, dict) else FileSpec(f[0], float(f[1]))
            for f in d["files"]
        )
        return cls(
            backend_name=d["backend_name"],
            files=files,
            repetitions=int(d.get("repetitions", 1)),
            source_id=d.get("source_id", "source"),
            dest_pool=tuple(d.get("dest_pool", ())),
        )

    def to_dict(self):
        return {
            "backend_name": self.backend_name,
            "files": [{"file_name": f.file_name, "size_gb": f.size_gb} for f in self.files],
            "repetitions": self.repetitions,
            "source_id": self.source_id,
            "dest_pool": list(self.dest_pool),
        }


class TransferBackend(Protocol):
    """What ``run_benchmark`` needs from a transfer tool.

    ``transfer`` returns a complete record or raises ``TransferFailed``;
    it never yields a partial record. ``now`` is the backend's clock, used
    for the run window. ``serial_only`` backends refuse parallel runs.
    """

    name: str
    serial_only: bool

    def available(self) -> bool: ...

    def now(self) -> float: ...

    def transfer(self, file: FileSpec, dest_pool: tuple) -> TransferRecord: ...


# Log grammar: FILE <name> SIZE_GB <d> DEST <host> SECONDS <d> CHECKSUM <ok|fail> TS <epoch>
_LOG_KEYS = ("FILE", "SIZE_GB", "DEST", "SECONDS", "CHECKSUM", "TS")


@dataclass
class TransferLog:
    lines: list = field(default_factory=list)

    @classmethod
    def read(cls, path) -> "TransferLog":
        return cls(Path(path).read_text(encoding="utf-8").splitlines())

    def write(self, path):
        Path(path).write_text("".join(line + "\n" for line in self.lines), encoding="utf-8")


@dataclass
class ParsedLog:
    records: list
    rejects: list  # (line_number, line, reason), 1-based line numbers


def format_log_line(rec: TransferRecord) -> str:
    for token in (rec.file_name, rec.dest_host):
        if not token or any(c.isspace() for c in token):
            raise ValueError(f"log token {token!r} must be non-empty and contain no whitespace")
    return (
        f"FILE {rec.file_name} SIZE_GB {rec.size_gb!r} DEST {rec.dest_host} "
        f"SECONDS {rec.duration_s!r} CHECKSUM {'ok' if rec.checksum_ok else 'fail'} TS {rec.started_at!r}"
    )


def serialize_transfer_log(records: Iterable[TransferRecord]) -> TransferLog:
    return TransferLog([format_log_line(r) for r in records])


def _finite(text: str, what: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise LogParseError(f"{what} is not a number: {text!r}") from None
    if not math.isfinite(value):
        raise LogParseError(f"{what} is not finite")
    return value


def parse_log_line(line: str) -> TransferRecord:
    tokens = line.split()
    if len(tokens) != 2 * len(_LOG_KEYS):
        raise LogParseError(f"expected {2 * len(_LOG_KEYS)} tokens, got {len(tokens)}")
    fields = {}
    for i, key in enumerate(_LOG_KEYS):
        if tokens[2 * i] != key:
            raise LogParseError(f"expected keyword {key}, got {tokens[2 * i]!r}")
        fields[key] = tokens[2 * i + 1]
    size = _finite(fields["SIZE_GB"], "SIZE_GB")
    seconds = _finite(fields["SECONDS"], "SECONDS")
    ts = _finite(fields["TS"], "TS")
    if size <= 0:
        raise LogParseError("size must be > 0 for a completed transfer")
    if seconds <= 0:
        raise LogParseError("duration must be > 0")
    checksum = fields["CHECKSUM"]
    if checksum not in ("ok", "fail"):
        raise LogParseError(f"checksum must be ok|fail, got {checksum!r}")
    return TransferRecord(
        file_name=fields["FILE"],
        size_gb=size,
        duration_s=seconds,
        speed_mb_s=speed_from(size, seconds),
        dest_host=fields["DEST"],
        checksum_ok=checksum == "ok",
        started_at=ts,
    )


def parse_transfer_log(log_: TransferLog) -> ParsedLog:
    """Parse one record per well-formed line; collect the rest as rejects."""
    records, rejects = [], []
    for lineno, line in enumerate(log_.lines, start=1):
        if not line.strip():
            continue
        try:
            records.append(parse_log_line(line))
        except LogParseError as exc:
            rejects.append((lineno, line, str(exc)))
    if not records:
        raise LogParseError("unparseable log")
    return ParsedLog(records, rejects)


def compute_aggregates(records: Iterable[TransferRecord]) -> BenchmarkAggregates:
    records = list(records)
    if not records:
        raise ValueError("cannot aggregate an empty record list")
    speeds = [r.speed_mb_s for r in records]
    freq = Counter(r.dest_host for r in records)
    return BenchmarkAggregates(
        bandwidth_mb_s=math.fsum(speeds) / len(speeds),
        transfer_time_s=math.fsum(r.duration_s for r in records),
        dest_host_frequency=dict(sorted(freq.items())),
        total_size_gb=math.fsum(r.size_gb for r in records),
        per_file_speeds=tuple(speeds),
    )


def make_run_id(backend_name: str, window_start: float, spec: BenchmarkSpec, tag: str = "") -> str:
    digest = hashlib.sha1(repr((backend_name, tag, window_start, spec.to_dict())).encode()).hexdigest()[:10]
    return f"{backend_name}-{window_start:.0f}-{digest}"


def run_benchmark(
    spec: BenchmarkSpec,
    backend: TransferBackend,
    parallelism: int = 1,
    log_path=None,
    run_id: Optional[str] = None,
) -> BenchmarkRun:
    """Transfer every file ``spec.repetitions`` times and return the scored-later run.

    Transfers go in (repetition, file) order. Failed transfers become
    ``TransferFailure`` entries rather than records.
    """
    if not backend.available():
        raise BackendUnavailable(backend.name)
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    if parallelism > 1 and getattr(backend, "serial_only", False):
        raise ValueError(f"backend {backend.name} only supports serial transfers")

    jobs = [(rep, f) for rep in range(spec.repetitions) for f in spec.files]
    start = backend.now()
    rid = run_id or make_run_id(backend.name, start, spec, getattr(backend, "run_tag", ""))

    def attempt(job):
        rep, f = job
        try:
            return backend.transfer(f, spec.dest_pool)
        except TransferFailed as exc:
            log.warning("transfer of %s (rep %d) failed: %s", f.file_name, rep, exc)
            return TransferFailure(f.file_name, rep, str(exc))

    if parallelism == 1:
        outcomes = [attempt(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            outcomes = list(pool.map(attempt, jobs))
    end = backend.now()
    window = TimeWindow(start, end)

    records = tuple(o for o in outcomes if isinstance(o, TransferRecord))
    failures = tuple(o for o in outcomes if isinstance(o, TransferFailure))
    if log_path is not None:
        serialize_transfer_log(records).write(log_path)
    if not records:
        raise EmptyRun(window, failures, rid)
    return BenchmarkRun(
        run_id=rid,
        backend_name=backend.name,
        window=window,
        records=records,
        aggregates=compute_aggregates(records),
        failures=failures,
    )


class LocalCopyBackend:
    """Copies files from a local source directory into destination directories.

    Each entry of the destination pool is a subdirectory of ``dest_root``;
    one is chosen per file, round-robin. Size is taken from disk, so the
    ``size_gb`` in the spec is only informational. Safe for parallel use.
    """

    serial_only = False

    def __init__(self, src_dir, dest_root, name="local", verify_checksum=True):
        self.name = name
        self.src_dir = Path(src_dir)
        self.dest_root = Path(dest_root)
        self.verify_checksum = verify_checksum
        self._counter = 0

    def available(self) -> bool:
        return self.src_dir.is_dir()

    def now(self) -> float:
        return time.time()

    def transfer(self, file: FileSpec, dest_pool: tuple) -> TransferRecord:
        src = self.src_dir / file.file_name
        if not src.is_file():
            raise TransferFailed(f"missing source file {src}")
        pool = list(dest_pool) or ["default"]
        host = pool[self._counter % len(pool)]
        self._counter += 1
        dest_dir = self.dest_root / host
        dest_dir.mkdir(parents=True, exist_ok=True)
        started = time.time()
        t0 = time.perf_counter()
        try:
            shutil.copyfile(src, dest_dir / file.file_name)
        except OSError as exc:
            raise TransferFailed(str(exc)) from exc
        elapsed = max(time.perf_counter() - t0, 1e-9)
        ok = True
        if self.verify_checksum:
            ok = _sha256(src) == _sha256(dest_dir / file.file_name)
        size_gb = os.path.getsize(src) / 1e9
        if size_gb <= 0:
            raise TransferFailed(f"{src} is empty")
        return TransferRecord.build(file.file_name, size_gb, elapsed, host, ok, started)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
