#!/usr/bin/env python3
"""Second-round variability comparison over simulated tools.

Prints the per-tool report for the built-in fixtures, then repeats the
comparison over many seeds to show how often the steadier tool wins.
"""

import argparse

from xferbench.backend_eval import ROUND_TWO_FIXTURES, compare_variability, simulate_round_two


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rounds", type=int, default=10)
    ap.add_argument("--files", type=int, default=10)
    ap.add_argument("--repetitions", type=int, default=100)
    args = ap.parse_args(argv)

    reports = simulate_round_two(ROUND_TWO_FIXTURES, rounds=args.rounds, files=args.files)
    for name, r in reports.items():
        print(f"{name:8s} mean {r.mean_speed_mb_s:7.2f} MB/s  std {r.std_speed_mb_s:6.2f}  "
              f"CV {r.coeff_variation:.3f}  total {r.total_time_h:6.2f} h")
    print(f"selected: {compare_variability(list(reports.values()))}")

    wins = {}
    for seed in range(args.repetitions):
        reps = simulate_round_two(ROUND_TWO_FIXTURES, rounds=args.rounds, files=args.files, seed=seed)
        pick = compare_variability(list(reps.values()))
        wins[pick] = wins.get(pick, 0) + 1
    print(f"over {args.repetitions} seeds: " + ", ".join(f"{k} {v}" for k, v in sorted(wins.items())))


if __name__ == "__main__":
    main()
