#!/usr/bin/env python3
"""Run every simulator scenario once and print the per-role levels and the verdict."""

import argparse
import time

from xferbench.netsim import SCENARIO_NAMES, load_scenario
from xferbench.orchestrator import default_sim_spec, run_once, sim_baseline, simulated_setup
from xferbench.scoring import ThresholdPolicy


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args(argv)
    policy = ThresholdPolicy()
    spec = default_sim_spec()
    print(f"{'scenario':22s} {'bench':9s} {'source':9s} {'network':9s} {'dest':9s} verdict")
    t0 = time.perf_counter()
    for name in SCENARIO_NAMES:
        scenario = load_scenario(name)
        setup = simulated_setup(scenario, seed=args.seed)
        report = run_once(spec, setup.backend, setup.collectors, sim_baseline(scenario, spec, policy), policy)
        env = report.env
        print(f"{name:22s} {report.run.level.value:9s} {env.source.value:9s} {env.network.value:9s} "
              f"{env.destination.value:9s} {report.verdict.verdict.value}")
    print(f"\n{len(SCENARIO_NAMES)} scenarios in {time.perf_counter() - t0:.2f} s")


if __name__ == "__main__":
    main()
