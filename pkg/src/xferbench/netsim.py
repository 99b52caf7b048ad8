"""Deterministic path simulator: source -> network segments -> destination hosts.

The rate model is a multiplicative bottleneck:

    rate = base * min_seg(1 - util/100) * (1 - disk/100) * (1 - penalty)

It only has to be order-faithful, so throughput is all it models.
"""

from __future__ import annotations

import bisect
import json
import math
import random
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Optional

from xferbench.collectors import Collector
from xferbench.engine import FileSpec, TransferFailed
from xferbench.model import MetricSample, MetricSeries, SegmentRole, TimeWindow, TransferRecord, Unit

SCENARIO_NAMES = ("clean", "middlebox-degraded", "source-congested", "dest-disk-saturated")


@dataclass(frozen=True)
class Piecewise:
    """Piecewise-constant function of time; before the first step it holds the first value."""

    steps: tuple  # ((from_t, value), ...) sorted by from_t

    def __post_init__(self):
        if not self.steps:
            raise ValueError("piecewise function needs at least one step")
        ts = [t for t, _ in self.steps]
        if ts != sorted(ts) or len(set(ts)) != len(ts):
            raise ValueError("step times must be strictly increasing")

    @classmethod
    def constant(cls, value: float) -> "Piecewise":
        return cls(((0.0, float(value)),))

    def __call__(self, t: float) -> float:
        i = bisect.bisect_right([s for s, _ in self.steps], t) - 1
        return self.steps[max(i, 0)][1]

    def bounded(self, lo: float, hi: float) -> bool:
        return all(lo <= v <= hi for _, v in self.steps)

    def to_json(self):
        return [{"from_t": t, "value": v} for t, v in self.steps]

    @classmethod
    def from_json(cls, obj) -> "Piecewise":
        if isinstance(obj, (int, float)):
            return cls.constant(obj)
        return cls(tuple((float(s["from_t"]), float(s["value"])) for s in obj))


@dataclass(frozen=True)
class SimSegment:
    segment_id: str
    role: SegmentRole
    utilization_pct: Piecewise
    capacity_gbps: float = 100.0
    errors: Piecewise = Piecewise.constant(0.0)


@dataclass(frozen=True)
class SimHost:
    host: str
    cpu_load: Piecewise = Piecewise.constant(1.0)
    cpu_utilization_pct: Piecewise = Piecewise.constant(10.0)
    disk_utilization_pct: Piecewise = Piecewise.constant(0.0)
    mem_available_gb: Piecewise = Piecewise.constant(64.0)

    @property
    def segment_id(self) -> str:
        return f"dest.pool.{self.host}"


@dataclass(frozen=True)
class Scenario:
    name: str
    base_rate_mb_s: float
    segments: tuple
    dest_hosts: tuple
    middlebox_penalty: float = 0.0
    rng_seed: int = 0
    start_time: float = 0.0
    sample_interval_s: float = 30.0
    timeout_s: float = 600.0
    # relative std of a per-file multiplicative speed factor; 0 keeps the model exact
    rate_jitter: float = 0.0
    corruption_rate: float = 0.0
    probe_latency_ms: float = 10.0

    def __post_init__(self):
        if not self.base_rate_mb_s > 0:
            raise ValueError("base rate must be > 0")
        if not 0.0 <= self.middlebox_penalty <= 1.0:
            raise ValueError("middlebox penalty must be in [0, 1]")
        if not self.dest_hosts:
            raise ValueError("scenario needs at least one destination host")
        for s in self.segments:
            if not s.utilization_pct.bounded(0, 100):
                raise ValueError(f"{s.segment_id}: utilization outside [0, 100]")
        for h in self.dest_hosts:
            for fn in (h.cpu_utilization_pct, h.disk_utilization_pct):
                if not fn.bounded(0, 100):
                    raise ValueError(f"{h.host}: percentage outside [0, 100]")
        if self.rate_jitter < 0 or not 0 <= self.corruption_rate <= 1:
            raise ValueError("invalid jitter or corruption rate")

    def host(self, name: str) -> SimHost:
        for h in self.dest_hosts:
            if h.host == name:
                return h
        raise KeyError(f"unknown destination host {name!r}")

    def clean_twin(self) -> "Scenario":
        """Same path with no load, no middlebox penalty and no jitter."""
        zero = Piecewise.constant(0.0)
        return replace(
            self,
            name=f"{self.name}-clean",
            middlebox_penalty=0.0,
            rate_jitter=0.0,
            corruption_rate=0.0,
            segments=tuple(replace(s, utilization_pct=zero, errors=zero) for s in self.segments),
            dest_hosts=tuple(replace(h, disk_utilization_pct=zero, cpu_utilization_pct=zero) for h in self.dest_hosts),
        )

    @classmethod
    def from_dict(cls, d) -> "Scenario":
        pw = Piecewise.from_json
        segments = tuple(
            SimSegment(
                s["segment_id"], SegmentRole(s["role"]), pw(s.get("utilization_pct", 0.0)),
                float(s.get("capacity_gbps", 100.0)), pw(s.get("errors", 0.0)),
            )
            for s in d.get("segments", [])
        )
        hosts = tuple(
            SimHost(
                h["host"],
                pw(h.get("cpu_load", 1.0)),
                pw(h.get("cpu_utilization_pct", 10.0)),
                pw(h.get("disk_utilization_pct", 0.0)),
                pw(h.get("mem_available_gb", 64.0)),
            )
            for h in d["dest_hosts"]
        )
        scalars = {k: d[k] for k in (
            "middlebox_penalty", "rng_seed", "start_time", "sample_interval_s",
            "timeout_s", "rate_jitter", "corruption_rate", "probe_latency_ms",
        ) if k in d}
        return cls(name=d.get("name", "scenario"), base_rate_mb_s=float(d["base_rate_mb_s"]),
                   segments=segments, dest_hosts=hosts, **scalars)

    def to_dict(self):
        return {
            "name": self.name,
            "base_rate_mb_s": self.base_rate_mb_s,
            "segments": [
                {"segment_id": s.segment_id, "role": s.role.value, "utilization_pct": s.utilization_pct.to_json(),
                 "capacity_gbps": s.capacity_gbps, "errors": s.errors.to_json()}
                for s in self.segments
            ],
            "dest_hosts": [
                {"host": h.host, "cpu_load": h.cpu_load.to_json(),
                 "cpu_utilization_pct": h.cpu_utilization_pct.to_json(),
                 "disk_utilization_pct": h.disk_utilization_pct.to_json(),
                 "mem_available_gb": h.mem_available_gb.to_json()}
                for h in self.dest_hosts
            ],
            "middlebox_penalty": self.middlebox_penalty,
            "rng_seed": self.rng_seed,
            "start_time": self.start_time,
            "sample_interval_s": self.sample_interval_s,
            "timeout_s": self.timeout_s,
            "rate_jitter": self.rate_jitter,
            "corruption_rate": self.corruption_rate,
            "probe_latency_ms": self.probe_latency_ms,
        }


def load_scenario(name_or_path) -> Scenario:
    """Load a shipped scenario by name, or a scenario JSON file by path."""
    if str(name_or_path) in SCENARIO_NAMES:
        text = resources.files("xferbench").joinpath("scenarios", f"{name_or_path}.json").read_text(encoding="utf-8")
    else:
        text = Path(name_or_path).read_text(encoding="utf-8")
    return Scenario.from_dict(json.loads(text))


class SimClock:
    def __init__(self, start: float = 0.0):
        self._now = float(start)

    @property
    def now(self) -> float:
        return self._now

    def advance(self, dt: float) -> float:
        if dt < 0:
            raise ValueError("simulated time only moves forward")
        self._now += dt
        return self._now

    def advance_to(self, t: float) -> float:
        return self.advance(max(0.0, t - self._now))


def effective_rate(s: Scenario, t: float, host: str) -> float:
    h = s.host(host)
    path = min((1.0 - seg.utilization_pct(t) / 100.0 for seg in s.segments), default=1.0)
    disk = 1.0 - h.disk_utilization_pct(t) / 100.0
    return s.base_rate_mb_s * path * disk * (1.0 - s.middlebox_penalty)


def simulate_transfer(s: Scenario, file: FileSpec, clock: SimClock, rng: random.Random,
                      dest_pool: tuple = ()) -> TransferRecord:
    """Move one file across the simulated path and advance the clock.

    The rng is consumed in a fixed pattern (host, jitter, corruption) per
    call so equal seeds give equal runs.
    """
    if not file.size_gb > 0:
        raise ValueError("file size must be > 0")
    hosts = list(dest_pool) if dest_pool else [h.host for h in s.dest_hosts]
    host = rng.choice(hosts)
    jitter = rng.gauss(0.0, 1.0)
    corrupt = rng.random() < s.corruption_rate
    started = clock.now
    rate = effective_rate(s, started, host)
    if s.rate_jitter > 0:
        # floor keeps the rare far-left tail of the normal from producing a non-positive rate
        rate *= max(0.01, 1.0 + s.rate_jitter * jitter)
    if not rate > 0:
        clock.advance(s.timeout_s)
        raise TransferFailed(f"path saturated towards {host}; timed out after {s.timeout_s} s")
    duration = file.size_gb * 1000.0 / rate
    clock.advance(duration)
    return TransferRecord.build(file.file_name, file.size_gb, duration, host, not corrupt, started)


class SimulatedBackend:
    """Transfer backend backed by a scenario; single-threaded, owns its clock and rng."""

    serial_only = True

    def __init__(self, scenario: Scenario, clock: Optional[SimClock] = None, name: str = "netsim",
                 seed: Optional[int] = None):
        self.scenario = scenario
        self.clock = clock or SimClock(scenario.start_time)
        self.name = name
        self.run_tag = scenario.name
        self.rng = random.Random(scenario.rng_seed if seed is None else seed)

    def available(self) -> bool:
        return True

    def now(self) -> float:
        return self.clock.now

    def transfer(self, file: FileSpec, dest_pool: tuple) -> TransferRecord:
        return simulate_transfer(self.scenario, file, self.clock, self.rng, dest_pool)


def sample_times(w: TimeWindow, interval: float) -> list:
    """Window start, every multiple of ``interval`` strictly inside, and window end."""
    times = [w.start]
    k = math.floor(w.start / interval) + 1
    while k * interval < w.end:
        times.append(k * interval)
        k += 1
    if w.end > w.start:
        times.append(w.end)
    return times


class SimSegmentCollector(Collector):
    """Router-style metrics for one simulated segment. Pure over simulated time."""

    def __init__(self, scenario: Scenario, seg: SimSegment):
        super().__init__(seg.segment_id, seg.role)
        self.scenario = scenario
        self.seg = seg

    def fetch(self, window):
        times = sample_times(window, self.scenario.sample_interval_s)
        dt = self.scenario.sample_interval_s
        util = [self.seg.utilization_pct(t) for t in times]
        gbps = [u / 100.0 * self.seg.capacity_gbps / 8.0 for u in util]
        values = {
            "utilization_in_pct": (util, Unit.PERCENT),
            "utilization_out_pct": (util, Unit.PERCENT),
            "gbps_in": (gbps, Unit.GBPS),
            "gbps_out": (gbps, Unit.GBPS),
            "gb_in": ([g * dt for g in gbps], Unit.GB),
            "gb_out": ([g * dt for g in gbps], Unit.GB),
            "errors_in": ([self.seg.errors(t) for t in times], Unit.COUNT),
            "errors_out": ([self.seg.errors(t) for t in times], Unit.COUNT),
        }
        return _series(self.segment_id, times, values)


class SimHostCollector(Collector):
    """End-system metrics for one simulated destination host."""

    def __init__(self, scenario: Scenario, host: SimHost):
        super().__init__(host.segment_id, SegmentRole.DESTINATION, host=host.host)
        self.scenario = scenario
        self.sim_host = host

    def fetch(self, window):
        h = self.sim_host
        times = sample_times(window, self.scenario.sample_interval_s)
        mem = [h.mem_available_gb(t) for t in times]
        values = {
            "cpu_load": ([h.cpu_load(t) for t in times], Unit.LOAD),
            "cpu_utilization_pct": ([h.cpu_utilization_pct(t) for t in times], Unit.PERCENT),
            "disk_utilization_pct": ([h.disk_utilization_pct(t) for t in times], Unit.PERCENT),
            "mem_available_gb": (mem, Unit.GB),
            "mem_free_gb": (mem, Unit.GB),
        }
        return _series(self.segment_id, times, values)


def _series(segment_id, times, values):
    return [
        MetricSeries(segment_id, name, tuple(MetricSample(t, v, unit) for t, v in zip(times, vals)))
        for name, (vals, unit) in sorted(values.items())
    ]


def as_collectors(s: Scenario) -> list:
    return [SimSegmentCollector(s, seg) for seg in s.segments] + [SimHostCollector(s, h) for h in s.dest_hosts]


@dataclass(frozen=True)
class ProbeResult:
    kind: str
    at: float
    value: Optional[float]
    unit: str
    ok: bool = True
    error: Optional[str] = None

    def to_dict(self):
        return {"kind": self.kind, "at": self.at, "value": self.value, "unit": self.unit,
                "ok": self.ok, "error": self.error}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], float(d["at"]), d["value"], d["unit"], bool(d["ok"]), d.get("error"))


@dataclass
class SimProbe:
    """Throughput/latency probe over the simulated path.

    Throughput reads the effective rate towards ``host`` (first destination
    by default); latency is the scenario's fixed value. Each probe takes
    ``duration_s`` of simulated time.
    """

    scenario: Scenario
    clock: SimClock
    host: Optional[str] = None
    duration_s: float = 10.0

    def measure(self, kind: str) -> ProbeResult:
        at = self.clock.now
        host = self.host or self.scenario.dest_hosts[0].host
        if kind == "throughput":
            result = ProbeResult(kind, at, effective_rate(self.scenario, at, host), "MB/s")
        elif kind == "latency":
            result = ProbeResult(kind, at, self.scenario.probe_latency_ms, "ms")
        else:
            raise ValueError(f"unknown probe kind {kind!r}")
        self.clock.advance(self.duration_s)
        return result
