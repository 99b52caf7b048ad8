"""Environment metric collectors, per-segment statistics and destination reweighting."""

from __future__ import annotations

import json
import logging
import math
import threading
import urllib.error
import urllib.parse
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from xferbench.model import (
    MetricSample,
    MetricSeries,
    ScoreLevel,
    SegmentRole,
    TimeWindow,
    Unit,
    sample_mean_std,
    window_contains,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MetricCatalogEntry:
    metric_name: str
    unit: Unit
    direction: Optional[str] = None


def _entries(*rows):
    return {r[0]: MetricCatalogEntry(*r) for r in rows}


METRIC_CATALOG = _entries(
    ("gb_in", Unit.GB, "in"),
    ("gb_out", Unit.GB, "out"),
    ("gbps_in", Unit.GBPS, "in"),
    ("gbps_out", Unit.GBPS, "out"),
    ("utilization_in_pct", Unit.PERCENT, "in"),
    ("utilization_out_pct", Unit.PERCENT, "out"),
    ("errors_in", Unit.COUNT, "in"),
    ("errors_out", Unit.COUNT, "out"),
    ("buffer_discards", Unit.COUNT, None),
    ("cpu_load", Unit.LOAD, None),
    ("cpu_utilization_pct", Unit.PERCENT, None),
    ("mem_free_gb", Unit.GB, None),
    ("mem_available_gb", Unit.GB, None),
    ("disk_utilization_pct", Unit.PERCENT, None),
)

ROUTER_METRICS = (
    "gb_in", "gb_out", "gbps_in", "gbps_out",
    "utilization_in_pct", "utilization_out_pct", "errors_in", "errors_out",
)
HOST_METRICS = ("cpu_load", "cpu_utilization_pct", "mem_free_gb", "mem_available_gb", "disk_utilization_pct")


def default_catalog(role: SegmentRole) -> tuple:
    return HOST_METRICS if role is SegmentRole.DESTINATION else ROUTER_METRICS


class CollectorUnavailable(Exception):
    pass


@dataclass(frozen=True)
class CollectorStatus:
    available: bool
    reason: Optional[str] = None

    @classmethod
    def unavailable(cls, reason: str) -> "CollectorStatus":
        return cls(False, reason)

    def to_dict(self):
        return {"status": "AVAILABLE" if self.available else "UNAVAILABLE", "reason": self.reason}

    @classmethod
    def from_dict(cls, d):
        return cls(d["status"] == "AVAILABLE", d.get("reason"))


AVAILABLE = CollectorStatus(True)


class Collector:
    """Base class for anything that yields metric series for one segment.

    Subclasses implement ``fetch`` and raise ``CollectorUnavailable`` (or an
    ``OSError``) when they cannot answer. ``concurrent_safe`` states whether
    one instance tolerates concurrent ``fetch`` calls; when it is False the
    base class serializes calls with a lock.
    """

    concurrent_safe = True

    def __init__(self, segment_id: str, role: SegmentRole, catalog=None, host: Optional[str] = None):
        self.segment_id = segment_id
        self.role = SegmentRole(role)
        self.catalog = tuple(catalog) if catalog else default_catalog(self.role)
        unknown = [m for m in self.catalog if m not in METRIC_CATALOG]
        if unknown:
            raise ValueError(f"{segment_id}: metrics not in catalog: {unknown}")
        # destination end-systems name the host their stats belong to
        self.host = host
        self._lock = threading.Lock()

    def fetch(self, window: TimeWindow) -> list:
        raise NotImplementedError

    def locked_fetch(self, window: TimeWindow) -> list:
        if self.concurrent_safe:
            return self.fetch(window)
        with self._lock:
            return self.fetch(window)

    def __repr__(self):
        return f"{type(self).__name__}({self.segment_id!r}, {self.role.value})"


def fetch_window(c: Collector, w: TimeWindow) -> Union[list, CollectorStatus]:
    """Query one collector for ``w``; either all its series or an UNAVAILABLE status."""
    try:
        series = c.locked_fetch(w)
    except CollectorUnavailable as exc:
        return CollectorStatus.unavailable(str(exc))
    except (OSError, TimeoutError, ValueError) as exc:
        log.warning("collector %s failed: %s", c.segment_id, exc)
        return CollectorStatus.unavailable(f"{type(exc).__name__}: {exc}")
    out = []
    for s in series:
        if s.metric_name not in c.catalog:
            return CollectorStatus.unavailable(f"metric {s.metric_name} outside declared catalog")
        s = s.within(w)
        if s.samples:
            out.append(s)
    return out


@dataclass(frozen=True)
class MetricStats:
    mean: float
    std: float
    min: float
    max: float
    count: int

    def to_dict(self):
        return {"mean": self.mean, "std": self.std, "min": self.min, "max": self.max, "count": self.count}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["mean"]), float(d["std"]), float(d["min"]), float(d["max"]), int(d["count"]))


@dataclass(frozen=True)
class SegmentStats:
    segment_id: str
    role: Optional[SegmentRole]
    metrics: dict = field(default_factory=dict)
    level: Optional[ScoreLevel] = None

    def __post_init__(self):
        for name, m in self.metrics.items():
            if not (m.min <= m.mean <= m.max):
                raise ValueError(f"{self.segment_id}/{name}: mean outside [min, max]")

    def with_level(self, level: ScoreLevel) -> "SegmentStats":
        return SegmentStats(self.segment_id, self.role, self.metrics, level)

    def to_dict(self):
        return {
            "segment_id": self.segment_id,
            "role": self.role.value if self.role else None,
            "metrics": {k: v.to_dict() for k, v in sorted(self.metrics.items())},
            "level": self.level.value if self.level else None,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            segment_id=d["segment_id"],
            role=SegmentRole(d["role"]) if d.get("role") else None,
            metrics={k: MetricStats.from_dict(v) for k, v in d["metrics"].items()},
            level=ScoreLevel(d["level"]) if d.get("level") else None,
        )


def _clamp(x, lo, hi):
    return min(max(x, lo), hi)


def series_stats(values) -> MetricStats:
    n = len(values)
    if n == 0:
        raise ValueError("empty series")
    lo, hi = min(values), max(values)
    mean, std = sample_mean_std(values)
    return MetricStats(mean, std, lo, hi, n)


def compute_segment_stats(series, role: Optional[SegmentRole] = None) -> SegmentStats:
    series = list(series)
    if not series:
        raise ValueError("no metrics")
    segment_ids = {s.segment_id for s in series}
    if len(segment_ids) != 1:
        raise ValueError(f"series span several segments: {sorted(segment_ids)}")
    metrics = {}
    for s in series:
        if s.metric_name in metrics:
            raise ValueError(f"duplicate series for metric {s.metric_name}")
        if not s.samples:
            raise ValueError(f"series {s.metric_name} is empty")
        metrics[s.metric_name] = series_stats(s.values)
    return SegmentStats(segment_ids.pop(), SegmentRole(role) if role else None, metrics)


def reweight_destination_stats(per_host: dict, freq: dict, segment_id: str = "dest.weighted") -> SegmentStats:
    """Combine per-host stats weighted by how many files each host received.

    Per metric the combined mean is the weighted mean of host means, and the
    combined variance is the law-of-total-variance mix of host variances and
    the spread of host means. Hosts that received no files are ignored.
    A metric missing on some hosts is combined over the hosts that have it.
    """
    weights = {h: n for h, n in freq.items() if n > 0}
    if not weights:
        raise ValueError("host frequency total must be > 0")
    for h in weights:
        if h not in per_host:
            raise ValueError(f"no stats for destination host {h}")
    names = sorted({m for h in weights for m in per_host[h].metrics})
    combined = {}
    for name in names:
        hosts = [h for h in sorted(weights) if name in per_host[h].metrics]
        total = math.fsum(weights[h] for h in hosts)
        parts = [(weights[h], per_host[h].metrics[name]) for h in hosts]
        means = [m.mean for _, m in parts]
        variances = [m.std * m.std for _, m in parts]
        # both are convex combinations, so clamping only removes rounding drift
        mean = _clamp(math.fsum(f * m.mean for f, m in parts) / total, min(means), max(means))
        within = _clamp(math.fsum(f * m.std * m.std for f, m in parts) / total, min(variances), max(variances))
        between = math.fsum(f * (m.mean - mean) ** 2 for f, m in parts) / total
        lo = min(m.min for _, m in parts)
        hi = max(m.max for _, m in parts)
        stds = [m.std for _, m in parts]
        # never below the smallest host std; with no spread of means, never above the largest
        std = max(math.sqrt(within + between), min(stds))
        if between == 0.0:
            std = min(std, max(stds))
        combined[name] = MetricStats(
            mean=_clamp(mean, lo, hi),
            std=std,
            min=lo,
            max=hi,
            count=sum(m.count for _, m in parts),
        )
    return SegmentStats(segment_id, SegmentRole.DESTINATION, combined)


class FixtureCollector(Collector):
    """Serves samples from an NDJSON file of {segment_id, metric, at, value, unit} lines."""

    def __init__(self, segment_id, role, path, catalog=None, host=None):
        super().__init__(segment_id, role, catalog, host)
        self.path = Path(path)

    def fetch(self, window):
        if not self.path.exists():
            raise CollectorUnavailable(f"fixture {self.path} not found")
        by_metric = {}
        with open(self.path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                row = json.loads(line)
                if row["segment_id"] != self.segment_id or row["metric"] not in self.catalog:
                    continue
                at = float(row["at"])
                if window_contains(window, at):
                    sample = MetricSample(at, float(row["value"]), Unit(row["unit"]))
                    by_metric.setdefault(row["metric"], []).append(sample)
        return [
            MetricSeries(self.segment_id, name, tuple(sorted(samples, key=lambda s: s.at)))
            for name, samples in sorted(by_metric.items())
        ]


class StaticCollector(Collector):
    """Holds series in memory; handy for tests and replay."""

    def __init__(self, segment_id, role, series, catalog=None, host=None):
        super().__init__(segment_id, role, catalog or sorted({s.metric_name for s in series}), host)
        self.series = list(series)

    def fetch(self, window):
        return [s.within(window) for s in self.series]


class OfflineCollector(Collector):
    def __init__(self, segment_id, role, reason="configured offline", catalog=None, host=None):
        super().__init__(segment_id, role, catalog, host)
        self.reason = reason

    def fetch(self, window):
        raise CollectorUnavailable(self.reason)


def _resolve_path(doc, path: str):
    node = doc
    for part in path.split(".") if path else []:
        if isinstance(node, list):
            node = node[int(part)]
        else:
            node = node[part]
    return node


class HttpJsonCollector(Collector):
    """Generic adapter for JSON monitoring APIs.

    Issues ``GET url?start=<s>&end=<e>`` and, per metric, follows a dotted
    path into the response to a list of points. A point is either a
    ``[t, value]`` pair or an object with ``time_key``/``value_key``.
    """

    def __init__(self, segment_id, role, url, metric_paths: dict, timeout_s=10.0,
                 time_key="at", value_key="value", params=None, catalog=None, host=None):
        super().__init__(segment_id, role, catalog or sorted(metric_paths), host)
        self.url = url
        self.metric_paths = dict(metric_paths)
        self.timeout_s = timeout_s
        self.time_key = time_key
        self.value_key = value_key
        self.params = dict(params or {})

    def _get(self, window):
        query = urllib.parse.urlencode({**self.params, "start": window.start, "end": window.end})
        sep = "&" if "?" in self.url else "?"
        try:
            with urllib.request.urlopen(f"{self.url}{sep}{query}", timeout=self.timeout_s) as resp:
                return json.loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, TimeoutError, OSError) as exc:
            raise CollectorUnavailable(f"endpoint unreachable: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise CollectorUnavailable(f"bad JSON from endpoint: {exc}") from exc

    def fetch(self, window):
        doc = self._get(window)
        out = []
        for name in sorted(self.metric_paths):
            try:
                points = _resolve_path(doc, self.metric_paths[name])
            except (KeyError, IndexError, ValueError, TypeError) as exc:
                raise CollectorUnavailable(f"path for {name} not found in response: {exc}") from exc
            unit = METRIC_CATALOG[name].unit
            samples = {}
            for p in points:
                t, v = (p[0], p[1]) if isinstance(p, (list, tuple)) else (p[self.time_key], p[self.value_key])
                if v is None:
                    continue
                samples[float(t)] = MetricSample(float(t), float(v), unit)
            out.append(MetricSeries(self.segment_id, name, tuple(samples[t] for t in sorted(samples))))
        return out


def collector_from_config(entry: dict, base_dir=".", scenario=None) -> Collector:
    """Build one collector from a config entry (see README for the schema)."""
    kind = entry.get("kind", "fixture")
    seg, role = entry["segment_id"], SegmentRole(entry["role"])
    catalog, host = entry.get("metrics"), entry.get("host")
    if entry.get("offline") or kind == "offline":
        return OfflineCollector(seg, role, entry.get("reason", "configured offline"), catalog, host)
    if kind == "fixture":
        path = Path(base_dir) / entry["path"]
        return FixtureCollector(seg, role, path, catalog, host)
    if kind == "http_json":
        return HttpJsonCollector(
            seg, role, entry["url"], entry["metric_paths"],
            timeout_s=float(entry.get("timeout_s", 10.0)),
            time_key=entry.get("time_key", "at"), value_key=entry.get("value_key", "value"),
            params=entry.get("params"), catalog=catalog, host=host,
        )
    if kind == "simulated":
        if scenario is None:
            raise ValueError(f"{seg}: simulated collectors need a scenario")
        from xferbench.netsim import as_collectors

        for c in as_collectors(scenario):
            if c.segment_id == seg:
                return c
        raise ValueError(f"scenario has no segment {seg}")
    raise ValueError(f"unknown collector kind {kind!r}")


def load_collectors(path_or_entries, base_dir=None, scenario=None) -> list:
    if isinstance(path_or_entries, (str, Path)):
        path = Path(path_or_entries)
        entries = json.loads(path.read_text(encoding="utf-8"))
        base_dir = base_dir or path.parent
    else:
        entries = path_or_entries
    if isinstance(entries, dict):
        entries = entries["collectors"]
    return [collector_from_config(e, base_dir or ".", scenario) for e in entries]
