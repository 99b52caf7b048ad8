import itertools
import math

import pytest
from hypothesis import given, strategies as st

from xferbench.collectors import MetricStats, SegmentStats
from xferbench.engine import compute_aggregates
from xferbench.model import BenchmarkRun, ScoreLevel, SegmentRole, TimeWindow, TransferRecord
from xferbench.scoring import (
    Baseline,
    EnvironmentVerdict,
    MetricThreshold,
    ScoringError,
    ThresholdPolicy,
    Verdict,
    attribute,
    derive_baseline,
    environment_verdict,
    render_verdict,
    score_benchmark,
    score_segment,
)

OK, WARN, CRIT = ScoreLevel.OK, ScoreLevel.WARNING, ScoreLevel.CRITICAL
SRC, NET, DST = SegmentRole.SOURCE, SegmentRole.NETWORK, SegmentRole.DESTINATION
levels = st.sampled_from(list(ScoreLevel))


def agg_with_bandwidth(bw):
    return compute_aggregates([TransferRecord.build("f", bw / 1000.0, 1.0, "h", True, 0.0)])


BASE = Baseline(100.0, 0.0, 1)


@pytest.mark.parametrize("bw, expected", [(90, OK), (60, WARNING := WARN), (100, OK), (80, OK), (50, WARN), (49.9, CRIT)])
def test_score_benchmark(bw, expected):
    assert score_benchmark(agg_with_bandwidth(bw), BASE, ThresholdPolicy()) is expected


def test_score_benchmark_needs_baseline():
    with pytest.raises(ScoringError):
        score_benchmark(agg_with_bandwidth(10), None, ThresholdPolicy())
    with pytest.raises(ScoringError):
        Baseline(0.0, 0.0, 1)


def test_absolute_mode():
    pol = ThresholdPolicy(mode="absolute", warn_mb_s=80.0, crit_mb_s=40.0)
    assert score_benchmark(agg_with_bandwidth(60), None, pol) is WARN
    assert score_benchmark(agg_with_bandwidth(30), None, pol) is CRIT


@given(st.floats(1e-3, 1e4), st.floats(1e-3, 1e4), st.integers(-10, 10))
def test_score_benchmark_scale_invariant(bw, base, k):
    c = 2.0 ** k
    pol = ThresholdPolicy()
    assert score_benchmark(agg_with_bandwidth(bw), Baseline(base, 0, 1), pol) is \
        score_benchmark(agg_with_bandwidth(bw * c), Baseline(base * c, 0, 1), pol)


@given(st.floats(1e-3, 1e4), st.sampled_from([(0.8, 0.5), (0.9, 0.1), (0.6, 0.59)]))
def test_equal_to_baseline_is_ok(bw, ratios):
    pol = ThresholdPolicy(warn_ratio=ratios[0], crit_ratio=ratios[1])
    agg = agg_with_bandwidth(bw)
    assert score_benchmark(agg, Baseline(agg.bandwidth_mb_s, 0, 1), pol) is OK


def seg(**metric_extremes):
    return SegmentStats("s", NET, {k: MetricStats(lo, 0.0, lo, hi, 3) for k, (lo, hi) in metric_extremes.items()})


def test_score_segment_examples():
    pol = ThresholdPolicy()
    assert score_segment(seg(utilization_out_pct=(10, 95)), pol) is CRIT
    assert score_segment(seg(utilization_out_pct=(1, 5), errors_in=(0, 0)), pol) is OK
    custom = ThresholdPolicy(metrics={"errors_in": MetricThreshold(1, 100), "utilization_in_pct": MetricThreshold(70, 90)})
    assert score_segment(seg(errors_in=(0, 5)), custom) is WARN
    assert score_segment(seg(errors_in=(0, 5), utilization_in_pct=(1, 2)), custom) is WARN


def test_below_direction_uses_min():
    pol = ThresholdPolicy(metrics={"mem_available_gb": MetricThreshold(8.0, 2.0, "below")}, unscored=())
    assert score_segment(SegmentStats("d", DST, {"mem_available_gb": MetricStats(20, 5, 1.5, 30, 4)}), pol) is CRIT
    assert score_segment(SegmentStats("d", DST, {"mem_available_gb": MetricStats(20, 5, 5, 30, 4)}), pol) is WARN


def test_metric_without_policy():
    pol = ThresholdPolicy(metrics={}, unscored=())
    with pytest.raises(ScoringError, match="utilization_in_pct"):
        score_segment(seg(utilization_in_pct=(1, 2)), pol)


def test_threshold_ordering_enforced():
    with pytest.raises(ValueError):
        MetricThreshold(90, 70, "above")
    with pytest.raises(ValueError):
        ThresholdPolicy(warn_ratio=0.5, crit_ratio=0.8)


def test_environment_verdict_examples():
    assert environment_verdict([(SRC, OK), (NET, OK), (DST, OK)]).overall is OK
    assert environment_verdict([(SRC, CRIT), (NET, WARN), (DST, OK)]).overall is CRIT
    v = environment_verdict([(SRC, OK), (NET, OK), (DST, OK), (DST, WARN)])
    assert v.destination is WARN


def test_environment_verdict_unmonitored():
    with pytest.raises(ScoringError):
        environment_verdict([(NET, OK), (DST, OK)])
    v = environment_verdict([(NET, OK), (DST, OK)], unmonitored=[SRC])
    assert v.source is WARN and v.overall is WARN
    with pytest.raises(ScoringError):
        environment_verdict([])


def test_environment_invariant_enforced():
    with pytest.raises(ValueError):
        EnvironmentVerdict(OK, CRIT, OK, WARN)


@given(st.lists(st.tuples(st.sampled_from(list(SegmentRole)), levels), min_size=1, max_size=8),
       st.integers(0, 7), levels)
def test_environment_monotone(segs, idx, worse):
    segs = segs + [(r, OK) for r in SegmentRole]
    idx %= len(segs)
    before = environment_verdict(segs)
    bumped = list(segs)
    role, lv = bumped[idx]
    bumped[idx] = (role, max(lv, worse))
    after = environment_verdict(bumped)
    assert after.overall >= before.overall
    assert before.overall is max(before.source, before.network, before.destination)


def test_attribution_table():
    clean = EnvironmentVerdict.of(OK, OK, OK)
    case2 = EnvironmentVerdict.of(CRIT, WARN, OK)
    assert attribute(CRIT, clean).verdict is Verdict.MIDDLEBOX_SUSPECT
    assert attribute(CRIT, case2).verdict is Verdict.ENV_SUSPECT
    assert attribute(OK, case2).verdict is Verdict.NOMINAL
    assert attribute(WARN, EnvironmentVerdict.of(OK, WARN, OK)).verdict is Verdict.INCONCLUSIVE


def test_attribution_matrix_exhaustive():
    for bench, s, n, d in itertools.product(ScoreLevel, repeat=4):
        env = EnvironmentVerdict.of(s, n, d)
        v = attribute(bench, env).verdict
        assert (v is Verdict.NOMINAL) == (bench is OK)
        if bench is not OK:
            assert v is {OK: Verdict.MIDDLEBOX_SUSPECT, WARN: Verdict.INCONCLUSIVE, CRIT: Verdict.ENV_SUSPECT}[env.overall]
        for worse in ScoreLevel:
            if worse > bench and v is not Verdict.NOMINAL:
                assert attribute(worse, env).verdict is not Verdict.NOMINAL


def run_of(speeds, rid):
    recs = [TransferRecord.build(f"f{i}", s / 100.0, 10.0, "h", True, float(i)) for i, s in enumerate(speeds)]
    return BenchmarkRun(rid, "b", TimeWindow(0, 100), tuple(recs), compute_aggregates(recs))


def test_derive_baseline_examples():
    b = derive_baseline([(run_of([100, 100], "r1"), OK)])
    assert (b.mean_speed_mb_s, b.std_speed_mb_s, b.sample_count) == (100.0, 0.0, 2)
    b = derive_baseline([(run_of([80], "r1"), OK), (run_of([120], "r2"), OK)])
    assert b.mean_speed_mb_s == 100.0 and math.isclose(b.std_speed_mb_s, 28.284271247461902, rel_tol=1e-12)
    assert b.derived_from == ("r1", "r2")
    b = derive_baseline([(run_of([80], "r1"), OK), (run_of([10], "bad"), WARN)])
    assert b.derived_from == ("r1",) and b.sample_count == 1
    with pytest.raises(ScoringError, match="no clean baseline runs"):
        derive_baseline([(run_of([80], "r1"), CRIT)])


def test_policy_json_round_trip():
    pol = ThresholdPolicy(warn_ratio=0.7, crit_ratio=0.3, unavailable="ignore")
    assert ThresholdPolicy.from_dict(pol.to_dict()) == pol


def test_render_colors():
    v = attribute(CRIT, EnvironmentVerdict.of(OK, OK, OK))
    text = render_verdict(v)
    assert "\033[31mCRITICAL" in text and "\033[32mOK" in text
    assert "\033[" not in render_verdict(v, color=False)
