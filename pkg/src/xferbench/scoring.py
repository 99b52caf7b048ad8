"""Threshold scoring, worst-of environment aggregation and degradation attribution."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from xferbench.model import BenchmarkAggregates, ScoreLevel, SegmentRole, sample_mean_std, worst_of


class ScoringError(ValueError):
    pass


@dataclass(frozen=True)
class Baseline:
    mean_speed_mb_s: float
    std_speed_mb_s: float
    sample_count: int
    derived_from: tuple = ()

    def __post_init__(self):
        if not self.mean_speed_mb_s > 0:
            raise ScoringError("baseline mean speed must be > 0")
        if self.std_speed_mb_s < 0 or self.sample_count < 1:
            raise ScoringError("invalid baseline")

    def to_dict(self):
        return {
            "mean_speed_mb_s": self.mean_speed_mb_s,
            "std_speed_mb_s": self.std_speed_mb_s,
            "sample_count": self.sample_count,
            "derived_from": list(self.derived_from),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["mean_speed_mb_s"]), float(d["std_speed_mb_s"]),
                   int(d["sample_count"]), tuple(d.get("derived_from", ())))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class MetricThreshold:
    warn_at: float
    crit_at: float
    direction: str = "above"

    def __post_init__(self):
        if self.direction not in ("above", "below"):
            raise ValueError(f"direction must be above|below, got {self.direction!r}")
        if self.direction == "above" and not self.crit_at > self.warn_at:
            raise ValueError("crit_at must exceed warn_at for an 'above' metric")
        if self.direction == "below" and not self.crit_at < self.warn_at:
            raise ValueError("crit_at must be below warn_at for a 'below' metric")

    def level(self, value: float) -> ScoreLevel:
        if self.direction == "above":
            if value > self.crit_at:
                return ScoreLevel.CRITICAL
            return ScoreLevel.WARNING if value > self.warn_at else ScoreLevel.OK
        if value < self.crit_at:
            return ScoreLevel.CRITICAL
        return ScoreLevel.WARNING if value < self.warn_at else ScoreLevel.OK


def _default_metric_thresholds():
    util = MetricThreshold(70.0, 90.0)
    host = MetricThreshold(80.0, 95.0)
    errors = MetricThreshold(0.0, 100.0)
    return {
        "utilization_in_pct": util,
        "utilization_out_pct": util,
        "cpu_utilization_pct": host,
        "disk_utilization_pct": host,
        "errors_in": errors,
        "errors_out": errors,
        "buffer_discards": errors,
    }


# volume and capacity readings describe traffic, they do not flag congestion by themselves
DEFAULT_UNSCORED = ("gb_in", "gb_out", "gbps_in", "gbps_out", "cpu_load", "mem_free_gb", "mem_available_gb")


@dataclass(frozen=True)
class ThresholdPolicy:
    """Benchmark ratio bounds plus per-metric bounds.

    ``mode="ratio"`` scores bandwidth relative to the baseline mean;
    ``mode="absolute"`` compares it to ``warn_mb_s``/``crit_mb_s`` directly.
    Metrics in ``unscored`` are carried in reports but never scored.
    ``unavailable`` is "degrade" (an unreachable collector raises its role
    to ``unmonitored_level``) or "ignore".
    """

    warn_ratio: float = 0.8
    crit_ratio: float = 0.5
    metrics: dict = field(default_factory=_default_metric_thresholds)
    unscored: tuple = DEFAULT_UNSCORED
    mode: str = "ratio"
    warn_mb_s: Optional[float] = None
    crit_mb_s: Optional[float] = None
    unavailable: str = "degrade"
    unmonitored_level: ScoreLevel = ScoreLevel.WARNING

    def __post_init__(self):
        if not (0 < self.crit_ratio < self.warn_ratio < 1):
            raise ValueError("need 0 < crit_ratio < warn_ratio < 1")
        if self.mode not in ("ratio", "absolute"):
            raise ValueError(f"unknown benchmark mode {self.mode!r}")
        if self.mode == "absolute" and not (
            self.warn_mb_s is not None and self.crit_mb_s is not None and 0 <= self.crit_mb_s < self.warn_mb_s
        ):
            raise ValueError("absolute mode needs 0 <= crit_mb_s < warn_mb_s")
        if self.unavailable not in ("degrade", "ignore"):
            raise ValueError("unavailable must be degrade|ignore")

    def to_dict(self):
        return {
            "benchmark": {
                "mode": self.mode,
                "warn_ratio": self.warn_ratio,
                "crit_ratio": self.crit_ratio,
                "warn_mb_s": self.warn_mb_s,
                "crit_mb_s": self.crit_mb_s,
            },
            "metrics": {
                k: {"warn_at": t.warn_at, "crit_at": t.crit_at, "direction": t.direction}
                for k, t in sorted(self.metrics.items())
            },
            "unscored": list(self.unscored),
            "unavailable": self.unavailable,
            "unmonitored_level": self.unmonitored_level.value,
        }

    @classmethod
    def from_dict(cls, d):
        bench = d.get("benchmark", {})
        kw = {}
        if "metrics" in d:
            kw["metrics"] = {k: MetricThreshold(float(v["warn_at"]), float(v["crit_at"]), v.get("direction", "above"))
                             for k, v in d["metrics"].items()}
        if "unscored" in d:
            kw["unscored"] = tuple(d["unscored"])
        return cls(
            warn_ratio=float(bench.get("warn_ratio", 0.8)),
            crit_ratio=float(bench.get("crit_ratio", 0.5)),
            mode=bench.get("mode", "ratio"),
            warn_mb_s=bench.get("warn_mb_s"),
            crit_mb_s=bench.get("crit_mb_s"),
            unavailable=d.get("unavailable", "degrade"),
            unmonitored_level=ScoreLevel(d.get("unmonitored_level", "WARNING")),
            **kw,
        )

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def score_benchmark(agg: BenchmarkAggregates, base: Optional[Baseline], pol: ThresholdPolicy) -> ScoreLevel:
    if pol.mode == "absolute":
        bw = agg.bandwidth_mb_s
        if bw < pol.crit_mb_s:
            return ScoreLevel.CRITICAL
        return ScoreLevel.WARNING if bw < pol.warn_mb_s else ScoreLevel.OK
    if base is None or not base.mean_speed_mb_s > 0:
        raise ScoringError("baseline mean speed must be > 0")
    ratio = agg.bandwidth_mb_s / base.mean_speed_mb_s
    if ratio >= pol.warn_ratio:
        return ScoreLevel.OK
    if ratio >= pol.crit_ratio:
        return ScoreLevel.WARNING
    return ScoreLevel.CRITICAL


def metric_level(name: str, stats, pol: ThresholdPolicy) -> ScoreLevel:
    t = pol.metrics.get(name)
    if t is None:
        raise ScoringError(f"no threshold policy for metric {name}")
    # window extremes, so a transient spike inside the window still counts
    return t.level(stats.max if t.direction == "above" else stats.min)


def score_segment(stats, pol: ThresholdPolicy) -> ScoreLevel:
    levels = [metric_level(name, m, pol) for name, m in sorted(stats.metrics.items()) if name not in pol.unscored]
    return worst_of(levels) if levels else ScoreLevel.OK


@dataclass(frozen=True)
class EnvironmentVerdict:
    source: ScoreLevel
    network: ScoreLevel
    destination: ScoreLevel
    overall: ScoreLevel

    def __post_init__(self):
        if self.overall != worst_of([self.source, self.network, self.destination]):
            raise ValueError("overall must be the worst of the three roles")

    @classmethod
    def of(cls, source, network, destination) -> "EnvironmentVerdict":
        return cls(source, network, destination, worst_of([source, network, destination]))

    def to_dict(self):
        return {
            "source": self.source.value,
            "network": self.network.value,
            "destination": self.destination.value,
            "overall": self.overall.value,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(*(ScoreLevel(d[k]) for k in ("source", "network", "destination", "overall")))


def environment_verdict(segments: Iterable, unmonitored: Iterable = (),
                        floor: ScoreLevel = ScoreLevel.WARNING) -> EnvironmentVerdict:
    """Worst-of per role, then worst-of over roles.

    ``segments`` holds (role, level) pairs. A role with no segments must be
    listed in ``unmonitored`` and then scores ``floor``.
    """
    segments = [(SegmentRole(r), lv) for r, lv in segments]
    if not segments:
        raise ScoringError("no segments to judge the environment on")
    unmonitored = {SegmentRole(r) for r in unmonitored}
    per_role = {}
    for role in SegmentRole:
        levels = [lv for r, lv in segments if r is role]
        if levels:
            per_role[role] = worst_of(levels)
        elif role in unmonitored:
            per_role[role] = floor
        else:
            raise ScoringError(f"no segments for role {role.value} and it is not marked unmonitored")
    return EnvironmentVerdict.of(
        per_role[SegmentRole.SOURCE], per_role[SegmentRole.NETWORK], per_role[SegmentRole.DESTINATION]
    )


class Verdict(str, enum.Enum):
    NOMINAL = "NOMINAL"
    MIDDLEBOX_SUSPECT = "MIDDLEBOX_SUSPECT"
    ENV_SUSPECT = "ENV_SUSPECT"
    INCONCLUSIVE = "INCONCLUSIVE"


@dataclass(frozen=True)
class AttributionVerdict:
    verdict: Verdict
    bench: ScoreLevel
    env: EnvironmentVerdict

    def to_dict(self):
        return {"verdict": self.verdict.value, "bench": self.bench.value, "env": self.env.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(Verdict(d["verdict"]), ScoreLevel(d["bench"]), EnvironmentVerdict.from_dict(d["env"]))


def attribute(bench: ScoreLevel, env: EnvironmentVerdict) -> AttributionVerdict:
    if bench is ScoreLevel.OK:
        v = Verdict.NOMINAL
    elif env.overall is ScoreLevel.OK:
        v = Verdict.MIDDLEBOX_SUSPECT
    elif env.overall is ScoreLevel.CRITICAL:
        v = Verdict.ENV_SUSPECT
    else:
        v = Verdict.INCONCLUSIVE
    return AttributionVerdict(v, bench, env)


def derive_baseline(runs: Iterable) -> Baseline:
    """Pool per-file speeds of clean runs into a baseline.

    ``runs`` yields (BenchmarkRun, environment overall level) pairs; only
    runs whose environment was OK are admitted.
    """
    clean = [run for run, env_level in runs if env_level is ScoreLevel.OK and run.records]
    if not clean:
        raise ScoringError("no clean baseline runs")
    speeds = [r.speed_mb_s for run in clean for r in run.records]
    mean, std = sample_mean_std(speeds)
    if not math.isfinite(mean) or mean <= 0:
        raise ScoringError("baseline runs have no positive speed")
    return Baseline(mean, std, len(speeds), tuple(run.run_id for run in clean))


_COLORS = {
    ScoreLevel.OK: "\033[32m",
    ScoreLevel.WARNING: "\033[38;5;208m",
    ScoreLevel.CRITICAL: "\033[31m",
}
_VERDICT_LEVEL = {
    Verdict.NOMINAL: ScoreLevel.OK,
    Verdict.INCONCLUSIVE: ScoreLevel.WARNING,
    Verdict.MIDDLEBOX_SUSPECT: ScoreLevel.CRITICAL,
    Verdict.ENV_SUSPECT: ScoreLevel.CRITICAL,
}


def colorize(level: ScoreLevel, text: Optional[str] = None, enabled: bool = True) -> str:
    text = level.value if text is None else text
    return f"{_COLORS[level]}{text}\033[0m" if enabled else text


def render_verdict(v: AttributionVerdict, color: bool = True) -> str:
    c = lambda lv: colorize(lv, enabled=color)
    rows = [
        ("Source", c(v.env.source)),
        ("Network In Between", c(v.env.network)),
        ("Destination", c(v.env.destination)),
        ("Testing Environment", c(v.env.overall)),
        ("Ave Transfer Speed", c(v.bench)),
        ("Verdict", colorize(_VERDICT_LEVEL[v.verdict], v.verdict.value, color)),
    ]
    width = max(len(k) for k, _ in rows)
    return "\n".join(f"{k.ljust(width)}  {val}" for k, val in rows)
