import math

import pytest
from hypothesis import given, strategies as st

from xferbench.backend_eval import (
    CRITERIA,
    TOOL_CRITERIA,
    CriteriaSupport,
    VariabilityReport,
    build_variability_report,
    compare_variability,
    criteria_matrix_json,
    criteria_matrix_text,
    round_one_eligible,
    simulate_round_two,
)
from xferbench.engine import compute_aggregates
from xferbench.model import BenchmarkRun, TimeWindow, TransferRecord
from tests.oracles import exact_mean, exact_sample_std


def test_table_rows():
    assert round_one_eligible(CriteriaSupport(True, True, True, True))
    assert not round_one_eligible(CriteriaSupport(True, True, True, False))
    assert not round_one_eligible(CriteriaSupport(False, False, False, False))


def test_tool_fixtures():
    assert {k: round_one_eligible(v) for k, v in TOOL_CRITERIA.items()} == {
        "FTS": False, "SRM": False, "GFAL": False, "Globus": True, "XRootD": True}


@given(st.tuples(*[st.booleans()] * 4), st.integers(0, 3))
def test_eligibility_monotone(row, flip):
    c = CriteriaSupport(*row)
    raised = CriteriaSupport(*[True if i == flip else v for i, v in enumerate(row)])
    assert not (round_one_eligible(c) and not round_one_eligible(raised))


def test_partial_rows_rejected():
    with pytest.raises(ValueError, match="missing"):
        CriteriaSupport.from_dict({"stable_speed": True})


def test_matrix_renderings():
    j = criteria_matrix_json(TOOL_CRITERIA)
    assert j["GFAL"]["storage_node_info"] is False and j["GFAL"]["eligible"] is False
    text = criteria_matrix_text(TOOL_CRITERIA).splitlines()
    assert text[0].startswith("Storage Client")
    assert len(text) == 2 + len(TOOL_CRITERIA)
    assert len({line.index("|") for line in text if "|" in line}) == 1


def report(name, cv, total, mean=10.0):
    return VariabilityReport(name, 10, mean, cv * mean, cv, total)


def test_compare_examples():
    globus = report("Globus", 0.3, 11.5)
    xrootd = report("XRootD", 0.05, 3.79)
    assert compare_variability([globus, xrootd]) == "XRootD"
    assert compare_variability([report("b", 0.1, 1.0), report("a", 0.1, 1.0)]) == "a"
    assert compare_variability([report("A", 0.10, 2.0), report("B", 0.25, 2.0)]) == "A"
    assert compare_variability([report("slow", 0.1, 5.0), report("fast", 0.1, 2.0)]) == "fast"


def test_compare_needs_two():
    with pytest.raises(ValueError):
        compare_variability([report("a", 0.1, 1.0)])


def run_with_speeds(name, speeds, t0=0.0):
    recs, t = [], t0
    for i, s in enumerate(speeds):
        r = TransferRecord.build(f"f{i}", s / 1000.0 * 10.0, 10.0, "h", True, t)
        recs.append(r)
        t += 10.0
    return BenchmarkRun(f"{name}-{t0}", name, TimeWindow(t0, t), tuple(recs), compute_aggregates(recs))


def test_report_hand_computed():
    r = build_variability_report([run_with_speeds("x", [2.0, 4.0, 6.0])])
    assert math.isclose(r.mean_speed_mb_s, 4.0, rel_tol=1e-12)
    assert math.isclose(r.std_speed_mb_s, 2.0, rel_tol=1e-12)
    assert math.isclose(r.coeff_variation, 0.5, rel_tol=1e-12)
    assert r.total_time_h == 30.0 / 3600


def test_report_single_record_std_zero():
    r = build_variability_report([run_with_speeds("x", [7.0])])
    assert r.std_speed_mb_s == 0.0 and r.coeff_variation == 0.0


def test_report_pools_hundred():
    runs = [run_with_speeds("x", [100.0 + i + j for j in range(10)], t0=1000.0 * i) for i in range(10)]
    r = build_variability_report(runs)
    assert r.sample_count == 100 and r.rounds == 10


def test_report_rejects_mixed_backends():
    with pytest.raises(ValueError):
        build_variability_report([run_with_speeds("a", [1.0]), run_with_speeds("b", [1.0])])
    with pytest.raises(ValueError):
        build_variability_report([])


speeds = st.lists(st.floats(min_value=0.5, max_value=500.0), min_size=1, max_size=15)


@given(st.lists(speeds, min_size=1, max_size=5), st.randoms())
def test_report_order_invariant_and_matches_oracle(groups, rnd):
    runs = [run_with_speeds("x", g, t0=1e4 * i) for i, g in enumerate(groups)]
    shuffled = list(runs)
    rnd.shuffle(shuffled)
    a, b = build_variability_report(runs), build_variability_report(shuffled)
    assert a == b
    pooled = [r.speed_mb_s for run in runs for r in run.records]
    assert math.isclose(a.mean_speed_mb_s, exact_mean(pooled), rel_tol=1e-12)
    assert math.isclose(a.std_speed_mb_s, exact_sample_std(pooled), rel_tol=1e-9, abs_tol=1e-9)


@given(st.lists(st.tuples(st.floats(0.01, 1.0), st.floats(0.1, 20.0)), min_size=2, max_size=6, unique_by=lambda t: t[0]),
       st.integers(-8, 8))
def test_compare_scale_invariant(rows, k):
    scale = 2.0 ** k
    base = [VariabilityReport(f"t{i}", 10, 10.0, cv * 10.0, cv, tot) for i, (cv, tot) in enumerate(rows)]
    scaled = [VariabilityReport(r.backend_name, 10, r.mean_speed_mb_s * scale, r.std_speed_mb_s * scale,
                                (r.std_speed_mb_s * scale) / (r.mean_speed_mb_s * scale), r.total_time_h) for r in base]
    assert compare_variability(base) == compare_variability(scaled)


def test_round_two_prefers_steady_tool():
    reports = simulate_round_two({"noisy": {"base_rate_mb_s": 33.0, "rate_jitter": 0.3},
                                  "steady": {"base_rate_mb_s": 100.0, "rate_jitter": 0.05}}, seed=4)
    assert reports["noisy"].sample_count == 100
    assert reports["noisy"].coeff_variation > reports["steady"].coeff_variation
    assert compare_variability(list(reports.values())) == "steady"
