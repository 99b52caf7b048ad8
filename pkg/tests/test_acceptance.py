"""Acceptance criteria. Each test records one PASS/FAIL line in the terminal summary."""

import itertools
import json
import math
import random
import time

from tests.oracles import brute_stats, exact_mean, exact_sample_std, pooled_moments
from xferbench.backend_eval import (
    ROUND_TWO_FIXTURES,
    TOOL_CRITERIA,
    build_variability_report,
    compare_variability,
    round_one_eligible,
    simulate_round_two,
)
from xferbench.collectors import Collector, CollectorUnavailable, MetricStats, SegmentStats
from xferbench.collectors import compute_segment_stats, reweight_destination_stats
from xferbench.engine import compute_aggregates, format_log_line, parse_log_line, parse_transfer_log
from xferbench.engine import serialize_transfer_log
from xferbench.export import EVENT_TYPES, ExportEnvelope, ExportSink, export_batch, parse_ndjson, to_ndjson
from xferbench.model import (
    BenchmarkRun,
    MetricSample,
    MetricSeries,
    ScoreLevel,
    SegmentRole,
    TimeWindow,
    TransferRecord,
    Unit,
    worst_of,
)
from xferbench.netsim import SCENARIO_NAMES, load_scenario
from xferbench.orchestrator import MonitorSchedule, default_sim_spec, run_monitor, run_once, sim_baseline
from xferbench.orchestrator import simulated_setup
from xferbench.scoring import ThresholdPolicy, Verdict

POLICY = ThresholdPolicy()


def scenario_report(name, seed=None):
    s = load_scenario(name)
    spec = default_sim_spec()
    setup = simulated_setup(s, seed=seed)
    return run_once(spec, setup.backend, setup.collectors, sim_baseline(s, spec, POLICY), POLICY)


def test_table2_attribution(criterion):
    expected = {"clean": Verdict.NOMINAL, "middlebox-degraded": Verdict.MIDDLEBOX_SUSPECT,
                "source-congested": Verdict.ENV_SUSPECT}
    t0 = time.perf_counter()
    got = {name: scenario_report(name).verdict.verdict for name in expected}
    elapsed = time.perf_counter() - t0
    hits = sum(got[n] is v for n, v in expected.items())
    ok = hits == 3 and elapsed < 5.0
    criterion("Attribution on simulator scenarios", ok, f"{hits}/3 scenarios match, {elapsed:.2f} s")
    assert ok, got


def test_table1_eligibility(criterion):
    expected = {"FTS": False, "SRM": False, "GFAL": False, "Globus": True, "XRootD": True}
    got = {name: round_one_eligible(c) for name, c in TOOL_CRITERIA.items()}
    ok = got == expected
    criterion("Tool criteria eligibility", ok, ", ".join(f"{k}={'yes' if v else 'no'}" for k, v in got.items()))
    assert ok, got


def test_fig1_variability_selection(criterion):
    tools = {"noisy": {"base_rate_mb_s": 100.0, "rate_jitter": 0.30},
             "steady": {"base_rate_mb_s": 100.0, "rate_jitter": 0.05}}
    t0 = time.perf_counter()
    picks, cv_ordered = 0, 0
    for seed in range(100):
        reports = simulate_round_two(tools, rounds=10, files=10, seed=seed)
        picks += compare_variability(list(reports.values())) == "steady"
        cv_ordered += reports["noisy"].coeff_variation > reports["steady"].coeff_variation
    elapsed = time.perf_counter() - t0
    fixtures = simulate_round_two(ROUND_TWO_FIXTURES)
    fixture_pick = compare_variability(list(fixtures.values()))
    ok = picks >= 99 and cv_ordered == 100 and elapsed < 10.0 and fixture_pick == "XRootD"
    criterion("Variability-based tool selection", ok,
              f"low-noise picked {picks}/100, noisy CV greater {cv_ordered}/100, {elapsed:.2f} s; "
              f"fixture totals {fixtures['Globus'].total_time_h:.2f} h vs {fixtures['XRootD'].total_time_h:.2f} h")
    assert ok


def _random_values(rng, n):
    kind = rng.randrange(4)
    if kind == 0:
        return [rng.uniform(0, 100) for _ in range(n)]
    if kind == 1:
        return [rng.lognormvariate(0, 6) for _ in range(n)]
    if kind == 2:
        return [float(rng.randint(0, 5)) for _ in range(n)]
    base = rng.uniform(1e6, 1e9)
    return [base + rng.uniform(-1e-3, 1e-3) for _ in range(n)]


def _close(got, exact, rel):
    return got == exact or abs(got - exact) <= rel * abs(exact)


def test_stats_oracle(criterion):
    rng = random.Random(20261017)
    failures = []
    for case in range(1000):
        n = rng.randint(1, 1000)
        values = _random_values(rng, n)
        if case % 2 == 0:
            series = MetricSeries("seg", "gb_in", tuple(MetricSample(float(i), v, Unit.GB)
                                                         for i, v in enumerate(values)))
            got = compute_segment_stats([series]).metrics["gb_in"]
            mean, std, count = got.mean, got.std, got.count
            lo, hi = got.min, got.max
        else:
            recs, start = [], 0.0
            for v in values:
                r = TransferRecord.build("f", v / 1000.0, 1.0, "h", True, start)
                recs.append(r)
                start += 1.0
            values = [r.speed_mb_s for r in recs]
            cut = rng.randint(1, n)
            runs = [BenchmarkRun(f"r{i}", "b", TimeWindow(0, start), tuple(part), compute_aggregates(part))
                    for i, part in enumerate((recs[:cut], recs[cut:])) if part]
            rep = build_variability_report(runs)
            mean, std, count = rep.mean_speed_mb_s, rep.std_speed_mb_s, rep.sample_count
            lo, hi = min(values), max(values)
        ref = brute_stats(values)
        ok = (_close(mean, ref["mean"], 1e-12) and _close(std, ref["std"], 1e-9) and count == n
              and lo == ref["min"] and hi == ref["max"])
        if not ok:
            failures.append(case)
    passed = not failures
    criterion("Stats oracle equivalence", passed, f"{1000 - len(failures)}/1000 instances match")
    assert passed, failures[:5]


def _rand_metric(rng):
    lo = rng.uniform(0, 50)
    hi = lo + rng.uniform(0, 50)
    return MetricStats(rng.uniform(lo, hi), rng.choice([0.0, rng.uniform(0, 20), 5e-324]), lo, hi, rng.randint(1, 40))


def test_reweighting_properties(criterion):
    rng = random.Random(7)
    bad = []
    for case in range(1000):
        hosts = [f"h{i}" for i in range(rng.randint(1, 5))]
        kind = case % 3
        if kind == 0:
            shared = {"disk_utilization_pct": _rand_metric(rng), "cpu_load": _rand_metric(rng)}
            per_host = {h: SegmentStats(h, SegmentRole.DESTINATION, shared) for h in hosts}
            freq = {h: rng.randint(1, 50) for h in hosts}
            out = reweight_destination_stats(per_host, freq).metrics
            ok = all((out[k].mean, out[k].std, out[k].min, out[k].max) == (m.mean, m.std, m.min, m.max)
                     for k, m in shared.items())
        elif kind == 1:
            per_host = {h: SegmentStats(h, SegmentRole.DESTINATION, {"cpu_load": _rand_metric(rng)}) for h in hosts}
            freq = {h: rng.randint(1, 50) for h in hosts}
            out = reweight_destination_stats(per_host, freq).metrics["cpu_load"]
            means = [s.metrics["cpu_load"].mean for s in per_host.values()]
            ref_mean, ref_std = pooled_moments([(s.metrics["cpu_load"].mean, s.metrics["cpu_load"].std)
                                                for s in per_host.values()], list(freq.values()))
            ok = (min(means) <= out.mean <= max(means) and math.isclose(out.mean, ref_mean, rel_tol=1e-12)
                  and math.isclose(out.std, ref_std, rel_tol=1e-9, abs_tol=1e-300))
        else:
            per_host = {h: SegmentStats(h, SegmentRole.DESTINATION, {"cpu_load": _rand_metric(rng)}) for h in hosts}
            freq = {h: rng.randint(1, 50) for h in hosts}
            before = reweight_destination_stats(per_host, freq)
            idle = SegmentStats("idle", SegmentRole.DESTINATION,
                                {"cpu_load": MetricStats(1e6, 1e6, 0.0, 2e6, 9), "mem_free_gb": _rand_metric(rng)})
            after = reweight_destination_stats({**per_host, "idle": idle}, {**freq, "idle": 0})
            ok = after == before
        if not ok:
            bad.append(case)
    passed = not bad
    criterion("Reweighting properties", passed, f"{1000 - len(bad)}/1000 cases hold")
    assert passed, bad[:5]


def test_worst_of_laws(criterion):
    levels = list(ScoreLevel)
    broken = 0
    for a, b, c in itertools.product(levels, repeat=3):
        laws = (
            worst_of([a, a]) is a,
            worst_of([a, b]) is worst_of([b, a]),
            worst_of([worst_of([a, b]), c]) is worst_of([a, worst_of([b, c])]) is worst_of([a, b, c]),
            worst_of([a, ScoreLevel.OK]) is a,
        )
        broken += not all(laws)
    rng = random.Random(3)
    for _ in range(1000):
        xs = [rng.choice(levels) for _ in range(rng.randint(1, 30))]
        ys = list(xs)
        rng.shuffle(ys)
        k = rng.randint(1, len(xs))
        split = worst_of([worst_of(xs[:k]), worst_of(xs[k:])]) if k < len(xs) else worst_of(xs)
        if not (worst_of(xs) is worst_of(ys) is split is max(xs, key=lambda v: v.rank)):
            broken += 1
    ok = broken == 0
    criterion("worst_of algebraic laws", ok, f"27 triples and 1000 random lists, {broken} violations")
    assert ok


def test_determinism(criterion):
    diffs = []
    for name in SCENARIO_NAMES:
        for seed in (None, 12345):
            if scenario_report(name, seed).to_json() != scenario_report(name, seed).to_json():
                diffs.append((name, seed))
    ok = not diffs
    criterion("Determinism", ok, f"{2 * len(SCENARIO_NAMES) - len(diffs)}/{2 * len(SCENARIO_NAMES)} "
                                 "scenario/seed pairs byte-identical")
    assert ok, diffs


_NAME_CHARS = "abcXYZ019._-/:@+é漢Ω"


def _token(rng):
    return "".join(rng.choice(_NAME_CHARS) for _ in range(rng.randint(1, 24)))


def _rand_record(rng):
    size = rng.choice([rng.uniform(1e-9, 1e3), rng.lognormvariate(0, 5), 13.6])
    dur = rng.choice([rng.uniform(1e-6, 1e5), rng.lognormvariate(3, 3)])
    return TransferRecord.build(_token(rng), size, dur, _token(rng), rng.random() < 0.9,
                                rng.choice([0.0, rng.uniform(0, 4e9)]))


def _rand_json(rng, depth=0):
    pick = rng.randrange(7 if depth < 3 else 4)
    if pick == 0:
        return rng.choice([None, True, False])
    if pick == 1:
        return rng.randint(-2**63, 2**63)
    if pick == 2:
        return rng.choice([rng.uniform(-1e300, 1e300), rng.random(), 5e-324, -0.0])
    if pick == 3:
        return "".join(rng.choice("ab\"\\\n\t \x85é😀 ") for _ in range(rng.randint(0, 10)))
    if pick in (4, 5):
        return {_token(rng): _rand_json(rng, depth + 1) for _ in range(rng.randint(0, 4))}
    return [_rand_json(rng, depth + 1) for _ in range(rng.randint(0, 4))]


def test_round_trips(criterion, tmp_path):
    rng = random.Random(500)
    log_bad = ndjson_bad = 0
    for i in range(500):
        recs = [_rand_record(rng) for _ in range(rng.randint(1, 5))]
        single = parse_log_line(format_log_line(recs[0])) == recs[0]
        parsed = parse_transfer_log(serialize_transfer_log(recs))
        log_bad += not (single and parsed.records == recs and not parsed.rejects)

        events = [ExportEnvelope(rng.choice(EVENT_TYPES), rng.uniform(0, 4e9),
                                 {"k": _rand_json(rng), "record": recs[0].to_dict()})
                  for _ in range(rng.randint(1, 4))]
        sink = tmp_path / f"e{i}.ndjson"
        export_batch(ExportSink("file", str(sink), batch_size=rng.randint(1, 3)), events)
        ndjson_bad += not (parse_ndjson(to_ndjson(events)) == events
                           and parse_ndjson(sink.read_text(encoding="utf-8")) == events)
    report = scenario_report("middlebox-degraded")
    (back,) = parse_ndjson(to_ndjson([ExportEnvelope("run_report", report.created_at, report.to_dict())]))
    payload_ok = back.payload == json.loads(report.to_json())
    ok = log_bad == 0 and ndjson_bad == 0 and payload_ok
    criterion("Round-trips", ok, f"log {500 - log_bad}/500, NDJSON {500 - ndjson_bad}/500 lossless")
    assert ok


class _Failing(Collector):
    def __init__(self, segment_id, role):
        super().__init__(segment_id, role)

    def fetch(self, window):
        raise CollectorUnavailable("router API unreachable")


def test_monitor_resilience(criterion, tmp_path):
    setup = simulated_setup(load_scenario("clean"))
    collectors = list(setup.collectors)
    victim = collectors[1]
    collectors[1] = _Failing(victim.segment_id, victim.role)
    setup.clock.advance(60)
    ticks = list(run_monitor(MonitorSchedule(60), collectors, POLICY, clock=lambda: setup.clock.now,
                             sleep=setup.clock.advance, max_ticks=5, out_dir=tmp_path))
    files = sorted(tmp_path.glob("monitor-*.json"))
    marked = 0
    for path in files:
        doc = json.loads(path.read_text())
        down = [k for k, v in doc["collector_statuses"].items() if v["status"] == "UNAVAILABLE"]
        marked += down == [victim.segment_id]
    ok = len(ticks) == 5 and len(files) == 5 and marked == 5
    criterion("Monitor resilience", ok, f"{len(files)} reports, {marked} mark only {victim.segment_id} UNAVAILABLE")
    assert ok
