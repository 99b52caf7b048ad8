"""Shared domain types: score levels, time windows, transfer records and metric series.

Every type serializes to a plain JSON-compatible dict via ``to_dict`` and
rebuilds via ``from_dict``. Field names are snake_case; enums serialize to
their string value.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

GB_TO_MB = 1000.0
SPEED_RTOL = 1e-6


class ScoreLevel(str, enum.Enum):
    OK = "OK"
    WARNING = "WARNING"
    CRITICAL = "CRITICAL"

    @property
    def rank(self) -> int:
        return _LEVEL_RANK[self]

    def __lt__(self, other):
        if not isinstance(other, ScoreLevel):
            return NotImplemented
        return self.rank < other.rank

    def __le__(self, other):
        if not isinstance(other, ScoreLevel):
            return NotImplemented
        return self.rank <= other.rank

    def __gt__(self, other):
        if not isinstance(other, ScoreLevel):
            return NotImplemented
        return self.rank > other.rank

    def __ge__(self, other):
        if not isinstance(other, ScoreLevel):
            return NotImplemented
        return self.rank >= other.rank


_LEVEL_RANK = {ScoreLevel.OK: 0, ScoreLevel.WARNING: 1, ScoreLevel.CRITICAL: 2}


class SegmentRole(str, enum.Enum):
    SOURCE = "SOURCE"
    NETWORK = "NETWORK"
    DESTINATION = "DESTINATION"


class Unit(str, enum.Enum):
    GB = "GB"
    GBPS = "GBps"
    PERCENT = "percent"
    COUNT = "count"
    LOAD = "load"


def worst_of(levels: Iterable[ScoreLevel]) -> ScoreLevel:
    """Return the most severe level in ``levels``."""
    levels = list(levels)
    if not levels:
        raise ValueError("no levels to aggregate")
    return max(levels, key=lambda lv: lv.rank)


@dataclass(frozen=True)
class TimeWindow:
    start: float
    end: float

    def __post_init__(self):
        if not (self.start <= self.end):
            raise ValueError(f"window start {self.start} is after end {self.end}")

    @property
    def length(self) -> float:
        return self.end - self.start

    def padded(self, pad_s: float) -> "TimeWindow":
        return TimeWindow(self.start - pad_s, self.end + pad_s)

    def to_dict(self):
        return {"start": self.start, "end": self.end}

    @classmethod
    def from_dict(cls, d):
        return cls(start=float(d["start"]), end=float(d["end"]))


def window_contains(w: TimeWindow, t: float) -> bool:
    return w.start <= t <= w.end


def speed_from(size_gb: float, duration_s: float) -> float:
    return size_gb * GB_TO_MB / duration_s


def sample_mean_std(values) -> tuple:
    """Mean and n-1 standard deviation; the std of a single value is 0.

    Uses the corrected two-pass form: the rounding error of the mean is
    measured and removed from the sum of squares, which matters when the
    spread is tiny relative to the magnitude.
    """
    n = len(values)
    if n == 0:
        raise ValueError("no values")
    # fsum / n can land one ulp outside the data range; pull it back in
    mean = min(max(math.fsum(values) / n, min(values)), max(values))
    if n == 1:
        return mean, 0.0
    dev = [v - mean for v in values]
    drift = math.fsum(dev)
    var = (math.fsum(d * d for d in dev) - drift * drift / n) / (n - 1)
    return mean, math.sqrt(max(var, 0.0))


@dataclass(frozen=True)
class TransferRecord:
    file_name: str
    size_gb: float
    duration_s: float
    speed_mb_s: float
    dest_host: str
    checksum_ok: bool
    started_at: float

    def __post_init__(self):
        if self.size_gb < 0:
            raise ValueError("size_gb must be >= 0")
        if not self.duration_s > 0:
            raise ValueError("duration_s must be > 0")
        if self.speed_mb_s < 0:
            raise ValueError("speed_mb_s must be >= 0")
        expected = speed_from(self.size_gb, self.duration_s)
        if not math.isclose(self.speed_mb_s, expected, rel_tol=SPEED_RTOL, abs_tol=0.0):
            raise ValueError(
                f"speed {self.speed_mb_s} MB/s inconsistent with "
                f"{self.size_gb} GB over {self.duration_s} s"
            )

    @classmethod
    def build(cls, file_name, size_gb, duration_s, dest_host, checksum_ok, started_at):
        """Construct a record with speed derived from size and duration."""
        if not duration_s > 0:
            raise ValueError("duration_s must be > 0")
        return cls(
            file_name=file_name,
            size_gb=size_gb,
            duration_s=duration_s,
            speed_mb_s=speed_from(size_gb, duration_s),
            dest_host=dest_host,
            checksum_ok=checksum_ok,
            started_at=started_at,
        )

    def to_dict(self):
        return {
            "file_name": self.file_name,
            "size_gb": self.size_gb,
            "duration_s": self.duration_s,
            "speed_mb_s": self.speed_mb_s,
            "dest_host": self.dest_host,
            "checksum_ok": self.checksum_ok,
            "started_at": self.started_at,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            file_name=d["file_name"],
            size_gb=float(d["size_gb"]),
            duration_s=float(d["duration_s"]),
            speed_mb_s=float(d["speed_mb_s"]),
            dest_host=d["dest_host"],
            checksum_ok=bool(d["checksum_ok"]),
            started_at=float(d["started_at"]),
        )


@dataclass(frozen=True)
class BenchmarkAggregates:
    bandwidth_mb_s: float
    transfer_time_s: float
    dest_host_frequency: dict
    total_size_gb: float
    per_file_speeds: tuple

    @property
    def overall_rate_mb_s(self) -> float:
        """Total bytes over total transfer time, the alternative reading of bandwidth."""
        return self.total_size_gb * GB_TO_MB / self.transfer_time_s

    def to_dict(self):
        return {
            "bandwidth_mb_s": self.bandwidth_mb_s,
            "transfer_time_s": self.transfer_time_s,
            "overall_rate_mb_s": self.overall_rate_mb_s,
            "dest_host_frequency": dict(sorted(self.dest_host_frequency.items())),
            "total_size_gb": self.total_size_gb,
            "per_file_speeds": list(self.per_file_speeds),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            bandwidth_mb_s=float(d["bandwidth_mb_s"]),
            transfer_time_s=float(d["transfer_time_s"]),
            dest_host_frequency={k: int(v) for k, v in d["dest_host_frequency"].items()},
            total_size_gb=float(d["total_size_gb"]),
            per_file_speeds=tuple(float(x) for x in d["per_file_speeds"]),
        )


@dataclass(frozen=True)
class TransferFailure:
    file_name: str
    repetition: int
    reason: str

    def to_dict(self):
        return {"file_name": self.file_name, "repetition": self.repetition, "reason": self.reason}

    @classmethod
    def from_dict(cls, d):
        return cls(d["file_name"], int(d["repetition"]), d["reason"])


@dataclass(frozen=True)
class BenchmarkRun:
    run_id: str
    backend_name: str
    window: TimeWindow
    records: tuple
    aggregates: Optional[BenchmarkAggregates]
    failures: tuple = ()
    level: Optional[ScoreLevel] = None

    def __post_init__(self):
        for rec in self.records:
            if not window_contains(self.window, rec.started_at):
                raise ValueError(f"record {rec.file_name} started outside the run window")

    @property
    def completed(self) -> bool:
        return bool(self.records)

    def with_level(self, level: ScoreLevel) -> "BenchmarkRun":
        return BenchmarkRun(
            run_id=self.run_id,
            backend_name=self.backend_name,
            window=self.window,
            records=self.records,
            aggregates=self.aggregates,
            failures=self.failures,
            level=level,
        )

    def to_dict(self):
        return {
            "run_id": self.run_id,
            "backend_name": self.backend_name,
            "window": self.window.to_dict(),
            "window_length_s": self.window.length,
            "aggregates": self.aggregates.to_dict() if self.aggregates else None,
            "records": [r.to_dict() for r in self.records],
            "failures": [f.to_dict() for f in self.failures],
            "level": self.level.value if self.level else None,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            run_id=d["run_id"],
            backend_name=d["backend_name"],
            window=TimeWindow.from_dict(d["window"]),
            records=tuple(TransferRecord.from_dict(r) for r in d["records"]),
            aggregates=BenchmarkAggregates.from_dict(d["aggregates"]) if d.get("aggregates") else None,
            failures=tuple(TransferFailure.from_dict(f) for f in d.get("failures", [])),
            level=ScoreLevel(d["level"]) if d.get("level") else None,
        )


def _check_sample_range(unit: Unit, value: float):
    if math.isnan(value):
        raise ValueError("sample value is NaN")
    if unit is Unit.PERCENT and not (0.0 <= value <= 100.0):
        raise ValueError(f"percent value {value} outside [0, 100]")
    if unit in (Unit.LOAD, Unit.COUNT) and value < 0:
        raise ValueError(f"{unit.value} value {value} is negative")


@dataclass(frozen=True)
class MetricSample:
    at: float
    value: float
    unit: Unit

    def __post_init__(self):
        _check_sample_range(Unit(self.unit), self.value)

    def to_dict(self):
        return {"at": self.at, "value": self.value, "unit": self.unit.value}

    @classmethod
    def from_dict(cls, d):
        return cls(at=float(d["at"]), value=float(d["value"]), unit=Unit(d["unit"]))


@dataclass(frozen=True)
class MetricSeries:
    segment_id: str
    metric_name: str
    samples: tuple = field(default_factory=tuple)

    def __post_init__(self):
        prev = None
        for s in self.samples:
            if prev is not None and not s.at > prev.at:
                raise ValueError(f"{self.metric_name}: sample timestamps not strictly increasing")
            if prev is not None and s.unit != prev.unit:
                raise ValueError(f"{self.metric_name}: mixed units in one series")
            prev = s

    @property
    def unit(self) -> Optional[Unit]:
        return self.samples[0].unit if self.samples else None

    @property
    def values(self) -> list:
        return [s.value for s in self.samples]

    def within(self, w: TimeWindow) -> "MetricSeries":
        kept = tuple(s for s in self.samples if window_contains(w, s.at))
        return MetricSeries(self.segment_id, self.metric_name, kept)

    def to_dict(self):
        return {
            "segment_id": self.segment_id,
            "metric_name": self.metric_name,
            "samples": [s.to_dict() for s in self.samples],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["segment_id"], d["metric_name"], tuple(MetricSample.from_dict(s) for s in d["samples"]))
