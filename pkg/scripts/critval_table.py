"""Precompute the t_comb critical-value table and compare MC against quadrature.

    SSRLAB_CRITVAL_CACHE=critvals.csv python scripts/critval_table.py --n1 2-10 --n2 2-40
"""
import argparse

from ssrlab.critvals import CritTable, default_table
from ssrlab.finaltests import Sidedness


def _range(text):
    a, _, b = text.partition("-")
    return range(int(a), int(b or a) + 1)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n1", default="2-10")
    ap.add_argument("--n2", default="2-20")
    ap.add_argument("--alpha", type=float, default=0.025)
    args = ap.parse_args()

    mc = default_table()
    quad = CritTable("quadrature")
    side = Sidedness.ONE_SIDED_UPPER
    worst = 0.0
    for n1 in _range(args.n1):
        n2s = [v for v in _range(args.n2) if v >= 2]  # t_comb needs a stage-2 variance
        a = mc.lookup_many(n1, n2s, args.alpha, side)
        b = quad.lookup_many(n1, n2s, args.alpha, side)
        for n2 in n2s:
            worst = max(worst, abs(a[n2] - b[n2]) / b[n2])
        print(f"n1={n1:3d}  " + " ".join(f"{a[n2]:.4f}" for n2 in n2s[:8]) + (" ..." if len(n2s) > 8 else ""))
    print(f"max relative |mc - quadrature| = {worst:.2e}")
    if mc.path is not None:
        mc.save()
        print(f"saved {mc.path}")


if __name__ == "__main__":
    main()
