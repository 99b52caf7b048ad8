#!/usr/bin/env python3
"""Print the transfer-tool criteria matrix and the first-round shortlist."""

from xferbench.backend_eval import TOOL_CRITERIA, criteria_matrix_text, round_one_eligible


def main():
    print(criteria_matrix_text(TOOL_CRITERIA))
    print()
    for name, row in TOOL_CRITERIA.items():
        print(f"{name:8s} {'eligible' if round_one_eligible(row) else 'dropped'}")


if __name__ == "__main__":
    main()
