"""Command line entry point: run, monitor, baseline, eval-backends, probe-plan."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from xferbench import backend_eval
from xferbench.collectors import load_collectors
from xferbench.engine import BenchmarkSpec, LocalCopyBackend
from xferbench.export import ExportSink, Exporter
from xferbench.netsim import load_scenario
from xferbench.orchestrator import (
    MonitorSchedule,
    ProbePlan,
    ProbeStep,
    TransferStep,
    baseline_from_reports,
    default_sim_spec,
    dumps,
    load_reports,
    run_monitor,
    run_once,
    run_probe_plan,
    sim_baseline,
    simulated_setup,
    write_atomic,
)
from xferbench.scoring import Baseline, ThresholdPolicy, render_verdict

log = logging.getLogger("xferbench")


def _load_config(path):
    if not path:
        return {}, Path(".")
    p = Path(path)
    return json.loads(p.read_text(encoding="utf-8")), p.parent


def _policy(args, cfg, base_dir):
    if getattr(args, "policy", None):
        return ThresholdPolicy.load(args.policy)
    pol = cfg.get("policy")
    if isinstance(pol, str):
        return ThresholdPolicy.load(base_dir / pol)
    return ThresholdPolicy.from_dict(pol) if pol else ThresholdPolicy()


def _exporter(args, cfg):
    if getattr(args, "export_file", None):
        return Exporter(ExportSink("file", args.export_file))
    if cfg.get("export"):
        return Exporter(ExportSink.from_dict(cfg["export"]))
    return None


def _environment(args, cfg, base_dir):
    """Backend, collectors, benchmark spec and (in simulator mode) the setup."""
    if args.scenario:
        scenario = load_scenario(args.scenario)
        setup = simulated_setup(scenario, seed=args.seed)
        spec = BenchmarkSpec.from_dict(cfg["benchmark"]) if "benchmark" in cfg else default_sim_spec()
        collectors = (load_collectors(cfg["collectors"], base_dir, scenario)
                      if "collectors" in cfg else setup.collectors)
        return setup.backend, collectors, spec, setup
    if not cfg:
        raise SystemExit("either --scenario or --config is required")
    bcfg = cfg.get("backend", {})
    if bcfg.get("kind", "local") != "local":
        raise SystemExit(f"unsupported backend kind {bcfg.get('kind')!r}")
    backend = LocalCopyBackend(base_dir / bcfg["src_dir"], base_dir / bcfg["dest_root"],
                               name=bcfg.get("name", "local"))
    return backend, load_collectors(cfg.get("collectors", []), base_dir), BenchmarkSpec.from_dict(cfg["benchmark"]), None


def cmd_run(args):
    cfg, base_dir = _load_config(args.config)
    policy = _policy(args, cfg, base_dir)
    backend, collectors, spec, setup = _environment(args, cfg, base_dir)
    if args.baseline:
        baseline = Baseline.load(args.baseline)
    elif setup is not None:
        baseline = sim_baseline(setup.scenario, spec, policy)
    elif policy.mode == "absolute":
        baseline = None
    else:
        raise SystemExit("--baseline is required outside simulator mode")
    out_dir = args.out or cfg.get("out_dir")
    report = run_once(spec, backend, collectors, baseline, policy, out_dir=out_dir,
                      exporter=_exporter(args, cfg), padding_s=float(cfg.get("padding_s", 0.0)))
    if args.json:
        sys.stdout.write(report.to_json())
    else:
        agg = report.run.aggregates
        print(f"run {report.run_id}: {len(report.run.records)} transfers, {len(report.run.failures)} failed")
        if agg:
            print(f"bandwidth {agg.bandwidth_mb_s:.2f} MB/s (overall {agg.overall_rate_mb_s:.2f} MB/s), "
                  f"transfer time {agg.transfer_time_s:.1f} s")
        for seg_id, st in sorted(report.collector_statuses.items()):
            if not st.available:
                print(f"collector {seg_id} UNAVAILABLE: {st.reason}")
        if report.verdict:
            print(render_verdict(report.verdict, color=sys.stdout.isatty() and not args.no_color))
        if report.error:
            print(f"error: {report.error}")
    return 0 if report.verdict is not None else 1


def cmd_monitor(args):
    cfg, base_dir = _load_config(args.config)
    policy = _policy(args, cfg, base_dir)
    sched = MonitorSchedule(args.interval, tuple(args.segment or ()), args.retention)
    if args.scenario:
        setup = simulated_setup(load_scenario(args.scenario))
        setup.clock.advance(args.interval)
        collectors, clock, sleep = setup.collectors, (lambda: setup.clock.now), setup.clock.advance
    else:
        import time

        collectors, clock, sleep = load_collectors(cfg.get("collectors", []), base_dir), time.time, None
    ticks = run_monitor(sched, collectors, policy, clock=clock, sleep=sleep, max_ticks=args.ticks,
                        out_dir=args.out, exporter=_exporter(args, cfg))
    try:
        for t in ticks:
            levels = " ".join(f"{s.segment_id}={s.level.value}" for s in t.segments)
            down = " ".join(k for k, v in sorted(t.statuses.items()) if not v.available)
            overall = t.env.overall.value if t.env else "n/a"
            print(f"tick {t.tick} at {t.at:.0f}: env {overall} | {levels}" + (f" | unavailable: {down}" if down else ""))
    except KeyboardInterrupt:
        pass
    return 0


def cmd_baseline(args):
    reports = load_reports(args.reports)
    baseline = baseline_from_reports(reports)
    text = dumps(baseline.to_dict())
    if args.out:
        write_atomic(args.out, text)
    sys.stdout.write(text)
    return 0


def cmd_eval_backends(args):
    if args.criteria:
        raw = json.loads(Path(args.criteria).read_text(encoding="utf-8"))
        rows = {k: backend_eval.CriteriaSupport.from_dict(v) for k, v in raw.items()}
    else:
        rows = dict(backend_eval.TOOL_CRITERIA)
    eligible = [name for name, c in rows.items() if backend_eval.round_one_eligible(c)]
    fixtures = json.loads(Path(args.fixtures).read_text(encoding="utf-8")) if args.fixtures \
        else backend_eval.ROUND_TWO_FIXTURES
    tools = {k: v for k, v in fixtures.items() if k in eligible}
    out = {"criteria": backend_eval.criteria_matrix_json(rows), "eligible": eligible}
    if len(tools) >= 2:
        reports = backend_eval.simulate_round_two(tools, rounds=args.rounds, files=args.files, seed=args.seed)
        out["variability"] = {k: r.to_dict() for k, r in reports.items()}
        out["selected"] = backend_eval.compare_variability(list(reports.values()))
    if args.json:
        sys.stdout.write(dumps(out))
        return 0
    print(backend_eval.criteria_matrix_text(rows))
    for name, r in out.get("variability", {}).items():
        print(f"{name}: mean {r['mean_speed_mb_s']:.2f} MB/s, std {r['std_speed_mb_s']:.2f}, "
              f"CV {r['coeff_variation']:.3f}, total {r['total_time_h']:.2f} h")
    if "selected" in out:
        print(f"selected: {out['selected']}")
    return 0


def cmd_probe_plan(args):
    cfg, base_dir = _load_config(args.config)
    policy = _policy(args, cfg, base_dir)
    scenario = load_scenario(args.scenario)
    setup = simulated_setup(scenario, seed=args.seed)
    spec = BenchmarkSpec.from_dict(cfg["benchmark"]) if "benchmark" in cfg else default_sim_spec(repetitions=1)
    baseline = Baseline.load(args.baseline) if args.baseline else sim_baseline(scenario, spec, policy)
    exporter = _exporter(args, cfg)
    plan = ProbePlan((ProbeStep("throughput"), ProbeStep("latency"), TransferStep(spec),
                      ProbeStep("throughput"), ProbeStep("latency")), repeat_count=args.repeat)

    def runner(s):
        return run_once(s, setup.backend, setup.collectors, baseline, policy, out_dir=args.out, exporter=exporter)

    linked = run_probe_plan(plan, setup.probe, runner, clock=lambda: setup.clock.now, exporter=exporter)
    for item in linked:
        fmt = lambda ps: ", ".join(f"{p.kind}={p.value:.2f}{p.unit}" if p.ok else f"{p.kind}=failed" for p in ps)
        verdict = item.report.verdict.verdict.value if item.report.verdict else "none"
        print(f"cycle {item.cycle}: before [{fmt(item.before)}] -> {item.report.run_id} {verdict} "
              f"-> after [{fmt(item.after)}]")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="xferbench", description="Transfer benchmark and degradation attribution")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario_required=False):
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--scenario", required=scenario_required,
                        help="simulator scenario name (clean, middlebox-degraded, ...) or JSON path")
        sp.add_argument("--policy", help="threshold policy JSON")
        sp.add_argument("--out", help="directory for report files")
        sp.add_argument("--export-file", help="append NDJSON events to this file")
        sp.add_argument("--seed", type=int, default=None, help="override the scenario rng seed")

    sp = sub.add_parser("run", help="one benchmark with attribution")
    common(sp)
    sp.add_argument("--baseline", help="baseline JSON; simulator mode derives one from the clean path")
    sp.add_argument("--json", action="store_true", help="print the full report as JSON")
    sp.add_argument("--no-color", action="store_true")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("monitor", help="continuous environment monitoring")
    common(sp)
    sp.add_argument("--interval", type=int, default=60)
    sp.add_argument("--ticks", type=int, default=None, help="stop after this many ticks")
    sp.add_argument("--retention", type=int, default=100)
    sp.add_argument("--segment", action="append", help="restrict to these segment ids")
    sp.set_defaults(func=cmd_monitor)

    sp = sub.add_parser("baseline", help="derive a baseline from stored reports")
    sp.add_argument("--reports", required=True, help="directory of <run_id>.json reports")
    sp.add_argument("--out", help="write baseline JSON here")
    sp.set_defaults(func=cmd_baseline)

    sp = sub.add_parser("eval-backends", help="criteria matrix and variability comparison")
    sp.add_argument("--criteria", help="JSON map tool -> criteria row (defaults to the built-in table)")
    sp.add_argument("--fixtures", help="JSON map tool -> {base_rate_mb_s, rate_jitter}")
    sp.add_argument("--rounds", type=int, default=10)
    sp.add_argument("--files", type=int, default=10)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_eval_backends)

    sp = sub.add_parser("probe-plan", help="alternate probes and transfers over the simulator")
    common(sp, scenario_required=True)
    sp.add_argument("--baseline")
    sp.add_argument("--repeat", type=int, default=1)
    sp.set_defaults(func=cmd_probe_plan)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
