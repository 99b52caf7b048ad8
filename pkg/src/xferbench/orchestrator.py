"""Run control: benchmark, window capture, collection, scoring, attribution, export.

Also hosts the continuous environment monitor and the alternating
probe/transfer schedule.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
import threading
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, Optional

from xferbench.collectors import AVAILABLE, CollectorStatus, SegmentStats, compute_segment_stats, fetch_window
from xferbench.collectors import reweight_destination_stats
from xferbench.engine import BackendUnavailable, BenchmarkSpec, EmptyRun, FileSpec, make_run_id, run_benchmark
from xferbench.export import ExportEnvelope, ExportError, Exporter
from xferbench.model import BenchmarkRun, SegmentRole, TimeWindow
from xferbench.netsim import ProbeResult, Scenario, SimClock, SimProbe, SimulatedBackend, as_collectors
from xferbench.scoring import (
    AttributionVerdict,
    Baseline,
    EnvironmentVerdict,
    ScoringError,
    ThresholdPolicy,
    attribute,
    derive_baseline,
    environment_verdict,
    score_benchmark,
    score_segment,
)

log = logging.getLogger(__name__)

WEIGHTED_DEST_ID = "dest.weighted"


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_atomic(path, text: str):
    """Write via a temp file in the same directory and rename, so readers never see a partial file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass(frozen=True)
class RunReport:
    run: BenchmarkRun
    env: Optional[EnvironmentVerdict]
    segments: tuple
    verdict: Optional[AttributionVerdict]
    collector_statuses: dict
    created_at: float
    error: Optional[str] = None

    @property
    def run_id(self) -> str:
        return self.run.run_id

    def to_dict(self):
        return {
            "run_id": self.run.run_id,
            "run": self.run.to_dict(),
            "env": self.env.to_dict() if self.env else None,
            "segments": [s.to_dict() for s in self.segments],
            "verdict": self.verdict.verdict.value if self.verdict else None,
            "attribution": self.verdict.to_dict() if self.verdict else None,
            "collector_statuses": {k: v.to_dict() for k, v in sorted(self.collector_statuses.items())},
            "created_at": self.created_at,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            run=BenchmarkRun.from_dict(d["run"]),
            env=EnvironmentVerdict.from_dict(d["env"]) if d.get("env") else None,
            segments=tuple(SegmentStats.from_dict(s) for s in d["segments"]),
            verdict=AttributionVerdict.from_dict(d["attribution"]) if d.get("attribution") else None,
            collector_statuses={k: CollectorStatus.from_dict(v) for k, v in d["collector_statuses"].items()},
            created_at=float(d["created_at"]),
            error=d.get("error"),
        )

    def to_json(self) -> str:
        return dumps(self.to_dict())

    @classmethod
    def load(cls, path) -> "RunReport":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def query_collectors(collectors, window: TimeWindow, max_workers: int = 8) -> list:
    """Fetch ``window`` from every collector concurrently; results keep collector order."""
    if not collectors:
        return []
    with ThreadPoolExecutor(max_workers=min(max_workers, len(collectors))) as pool:
        return list(pool.map(lambda c: fetch_window(c, window), collectors))


@dataclass
class EnvAssessment:
    segments: list
    statuses: dict
    env: Optional[EnvironmentVerdict]
    error: Optional[str] = None


def assess_environment(collectors, results, policy: ThresholdPolicy, dest_frequency=None) -> EnvAssessment:
    """Turn raw collector results into scored segment stats and an environment verdict.

    Destination collectors that name a host are merged into one
    frequency-weighted segment when ``dest_frequency`` is given; that merged
    segment, not the individual hosts, speaks for the destination role.
    """
    segments, statuses, judged, per_host = [], {}, [], {}
    for c, res in zip(collectors, results):
        if isinstance(res, CollectorStatus):
            statuses[c.segment_id] = res
            if policy.unavailable == "degrade":
                judged.append((c.role, policy.unmonitored_level))
            continue
        if not res:
            statuses[c.segment_id] = CollectorStatus.unavailable("no samples in window")
            if policy.unavailable == "degrade":
                judged.append((c.role, policy.unmonitored_level))
            continue
        statuses[c.segment_id] = AVAILABLE
        stats = compute_segment_stats(res, role=c.role)
        stats = stats.with_level(score_segment(stats, policy))
        segments.append(stats)
        if c.role is SegmentRole.DESTINATION and c.host is not None and dest_frequency:
            per_host[c.host] = stats
        else:
            judged.append((c.role, stats.level))

    if per_host:
        freq = {h: n for h, n in dest_frequency.items() if h in per_host}
        if sum(freq.values()) > 0:
            merged = reweight_destination_stats(per_host, freq, WEIGHTED_DEST_ID)
            merged = merged.with_level(score_segment(merged, policy))
            segments.append(merged)
            judged.append((SegmentRole.DESTINATION, merged.level))
        else:
            judged.extend((SegmentRole.DESTINATION, s.level) for s in per_host.values())

    present = {r for r, _ in judged}
    try:
        env = environment_verdict(judged, unmonitored=[r for r in SegmentRole if r not in present],
                                  floor=policy.unmonitored_level)
        return EnvAssessment(segments, statuses, env)
    except ScoringError as exc:
        return EnvAssessment(segments, statuses, None, str(exc))


def run_once(
    spec: BenchmarkSpec,
    backend,
    collectors,
    baseline: Optional[Baseline],
    policy: ThresholdPolicy,
    *,
    out_dir=None,
    exporter: Optional[Exporter] = None,
    padding_s: float = 0.0,
    clock: Optional[Callable[[], float]] = None,
) -> RunReport:
    """One benchmark plus attribution. Persists and exports before returning."""
    clock = clock or backend.now
    error = None
    try:
        run = run_benchmark(spec, backend)
    except EmptyRun as exc:
        run = BenchmarkRun(exc.run_id, backend.name, exc.window, (), None, exc.failures)
        error = "empty run"
    except BackendUnavailable as exc:
        t = backend.now()
        rid = make_run_id(backend.name, t, spec, getattr(backend, "run_tag", ""))
        run = BenchmarkRun(rid, backend.name, TimeWindow(t, t), (), None)
        error = str(exc)

    window = run.window.padded(padding_s) if padding_s else run.window
    results = query_collectors(collectors, window)
    freq = run.aggregates.dest_host_frequency if run.aggregates else None
    assessed = assess_environment(collectors, results, policy, freq)

    verdict = None
    if run.aggregates is not None:
        run = run.with_level(score_benchmark(run.aggregates, baseline, policy))
        if assessed.env is not None:
            verdict = attribute(run.level, assessed.env)
    error = error or assessed.error

    report = RunReport(run, assessed.env, tuple(assessed.segments), verdict, assessed.statuses, clock(), error)
    if out_dir is not None:
        write_atomic(Path(out_dir) / f"{run.run_id}.json", report.to_json())
    if exporter is not None:
        exporter.send([ExportEnvelope("run_report", report.created_at, report.to_dict())])
    return report


def load_reports(directory) -> list:
    return [RunReport.load(p) for p in sorted(Path(directory).glob("*.json")) if not p.name.startswith("monitor-")]


def baseline_from_reports(reports) -> Baseline:
    return derive_baseline((r.run, r.env.overall) for r in reports if r.env is not None and r.run.records)


@dataclass(frozen=True)
class MonitorSchedule:
    interval_s: int
    collectors: tuple = ()  # segment ids to poll; empty means all
    retention: int = 100

    def __post_init__(self):
        if self.interval_s <= 0:
            raise ValueError("interval must be > 0")
        if self.retention < 1:
            raise ValueError("retention must be >= 1")


@dataclass(frozen=True)
class MonitorTick:
    tick: int
    at: float
    window: TimeWindow
    segments: tuple
    statuses: dict
    env: Optional[EnvironmentVerdict]

    def to_dict(self):
        return {
            "tick": self.tick,
            "at": self.at,
            "window": self.window.to_dict(),
            "segments": [s.to_dict() for s in self.segments],
            "collector_statuses": {k: v.to_dict() for k, v in sorted(self.statuses.items())},
            "env": self.env.to_dict() if self.env else None,
        }


def _stopped(stop) -> bool:
    if stop is None:
        return False
    if isinstance(stop, threading.Event):
        return stop.is_set()
    return bool(stop())


def run_monitor(
    sched: MonitorSchedule,
    collectors,
    policy: ThresholdPolicy,
    stop=None,
    *,
    clock: Callable[[], float] = time.time,
    sleep: Optional[Callable[[float], None]] = None,
    max_ticks: Optional[int] = None,
    out_dir=None,
    exporter: Optional[Exporter] = None,
) -> Iterator[MonitorTick]:
    """Poll the last interval from every collector at each tick until stopped.

    ``stop`` is a ``threading.Event`` or a callable; it is checked between
    ticks only, so a tick in progress always completes and exports fully.
    A tick that overruns the interval causes the missed ticks to be skipped.
    """
    wanted = set(sched.collectors)
    pool = [c for c in collectors if not wanted or c.segment_id in wanted]
    if sleep is None:
        sleep = stop.wait if isinstance(stop, threading.Event) else time.sleep
    kept = deque()
    tick = 0
    next_due = clock()
    while not _stopped(stop) and (max_ticks is None or tick < max_ticks):
        now = clock()
        if now < next_due:
            sleep(next_due - now)
            if _stopped(stop):
                break
            now = clock()
        window = TimeWindow(now - sched.interval_s, now)
        results = query_collectors(pool, window)
        assessed = assess_environment(pool, results, policy)
        for seg_id, st in assessed.statuses.items():
            if not st.available:
                log.warning("tick %d: %s unavailable (%s)", tick, seg_id, st.reason)
        out = MonitorTick(tick, now, window, tuple(assessed.segments), assessed.statuses, assessed.env)
        if out_dir is not None:
            path = Path(out_dir) / f"monitor-{tick:06d}.json"
            write_atomic(path, dumps(out.to_dict()))
            kept.append(path)
            while len(kept) > sched.retention:
                kept.popleft().unlink(missing_ok=True)
        if exporter is not None:
            events = [ExportEnvelope("monitor_tick", now, out.to_dict())]
            events += [ExportEnvelope("segment_stats", now, s.to_dict()) for s in out.segments]
            try:
                exporter.send(events)
            except ExportError as exc:
                log.error("tick %d export failed: %s", tick, exc)
        yield out
        tick += 1
        next_due = now + sched.interval_s
        finished = clock()
        while next_due < finished:
            log.warning("monitor tick at %.3f overran; skipping tick due at %.3f", now, next_due)
            next_due += sched.interval_s


@dataclass(frozen=True)
class ProbeStep:
    kind: str  # throughput | latency

    def __post_init__(self):
        if self.kind not in ("throughput", "latency"):
            raise ValueError(f"probe kind must be throughput|latency, got {self.kind!r}")


@dataclass(frozen=True)
class TransferStep:
    spec: BenchmarkSpec


@dataclass(frozen=True)
class ProbePlan:
    steps: tuple
    repeat_count: int = 1

    def __post_init__(self):
        if self.repeat_count < 1:
            raise ValueError("repeat_count must be >= 1")
        for i, step in enumerate(self.steps):
            if isinstance(step, TransferStep):
                before = i > 0 and isinstance(self.steps[i - 1], ProbeStep)
                after = i + 1 < len(self.steps) and isinstance(self.steps[i + 1], ProbeStep)
                if not (before and after):
                    raise ValueError(f"transfer step {i} must sit between probe steps")
            elif not isinstance(step, ProbeStep):
                raise TypeError(f"unknown plan step {step!r}")


@dataclass(frozen=True)
class LinkedTransfer:
    cycle: int
    before: tuple
    report: RunReport
    after: tuple


def run_probe_plan(plan: ProbePlan, probes, runner: Callable[[BenchmarkSpec], RunReport], *,
                   clock: Callable[[], float] = time.time, exporter: Optional[Exporter] = None) -> list:
    """Execute the plan in order and link each transfer report to its neighbouring probes."""
    results = []
    for cycle in range(plan.repeat_count):
        done = []
        for step in plan.steps:
            if isinstance(step, ProbeStep):
                try:
                    res = probes.measure(step.kind)
                except Exception as exc:  # probe failure is data, not a reason to stop
                    log.warning("probe %s failed: %s", step.kind, exc)
                    res = ProbeResult(step.kind, clock(), None, "", ok=False, error=str(exc))
                if exporter is not None:
                    exporter.send([ExportEnvelope("probe_result", res.at, res.to_dict())])
                done.append(res)
            else:
                done.append(runner(step.spec))
        for i, item in enumerate(done):
            if not isinstance(item, RunReport):
                continue
            before, j = [], i - 1
            while j >= 0 and isinstance(done[j], ProbeResult):
                before.insert(0, done[j])
                j -= 1
            after, j = [], i + 1
            while j < len(done) and isinstance(done[j], ProbeResult):
                after.append(done[j])
                j += 1
            results.append(LinkedTransfer(cycle, tuple(before), item, tuple(after)))
    return results


@dataclass
class SimSetup:
    """Everything needed to drive a scenario: one clock shared by backend, collectors and probe."""

    scenario: Scenario
    clock: SimClock
    backend: SimulatedBackend
    collectors: list
    probe: SimProbe


def simulated_setup(scenario: Scenario, seed: Optional[int] = None) -> SimSetup:
    clock = SimClock(scenario.start_time)
    return SimSetup(
        scenario=scenario,
        clock=clock,
        backend=SimulatedBackend(scenario, clock, seed=seed),
        collectors=as_collectors(scenario),
        probe=SimProbe(scenario, clock),
    )


def default_sim_spec(files: int = 10, repetitions: int = 10, size_gb: float = 1.0) -> BenchmarkSpec:
    return BenchmarkSpec(
        backend_name="netsim",
        files=tuple(FileSpec(f"dataset{i:02d}", size_gb) for i in range(files)),
        repetitions=repetitions,
        source_id="src.site-a.lan",
    )


def sim_baseline(scenario: Scenario, spec: BenchmarkSpec, policy: ThresholdPolicy) -> Baseline:
    """Baseline from the scenario's clean twin (same path, nothing loaded)."""
    setup = simulated_setup(scenario.clean_twin())
    run = run_benchmark(spec, setup.backend)
    results = query_collectors(setup.collectors, run.window)
    assessed = assess_environment(setup.collectors, results, policy, run.aggregates.dest_host_frequency)
    overall = assessed.env.overall if assessed.env else None
    return derive_baseline([(run, overall)])
