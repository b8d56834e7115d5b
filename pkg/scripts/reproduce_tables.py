"""Rank ROIs and run the paired t-tests on a transcribed summary table.

Usage: python3 scripts/reproduce_tables.py [tests/data/published_summary.csv]

Prints the top nine ROIs by averaged normalized difference and the six
pairwise paired t-tests between model specs.
"""
import sys
from pathlib import Path

from hqcnn import cli, stats, train

DEFAULT = Path(__file__).resolve().parent.parent / "tests" / "data" / "published_summary.csv"


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    path = Path(argv[0]) if argv else DEFAULT
    table = train.read_summary(path)
    print("top nine ROIs (supplied normalized columns)")
    for roi, avg in train.rank_summary(table).top(9):
        print(f"  ROI {roi}, {avg:.3f}")
    print("top nine ROIs (recomputed from the accuracies)")
    for roi, avg in train.rank_summary(table, use_supplied=False).top(9):
        print(f"  ROI {roi}, {avg:.3f}")
    print("paired t-tests")
    for a, b in cli.TTEST_PAIRS:
        res = stats.paired_ttest(table.scores[a], table.scores[b])
        print(f"  {a} vs {b}: t={res.t:.3f} df={res.df:g} p_one_tail={res.p_one_tail:.3e} r={res.pearson_r:.4f}")


if __name__ == "__main__":
    main()
