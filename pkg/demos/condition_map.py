"""Where the quantile series condition holds for Pareto tails.

A Pareto(r) marginal with mixing rate beta(k) ~ k^(-s) gives summands of
order k^(-s (1 - 2/r)), so the series converges exactly when
s (1 - 2/r) > 1.  The script prints the numerical verdict on a small
(s, r) grid: '+' converges, '-' diverges, '?' inconclusive.  Cells near the
boundary s (1 - 2/r) = 1 are the hardest to decide from partial sums.

    python3 demos/condition_map.py
"""
import numpy as np

from lpclt.conditions import CONVERGES, DIVERGES, series_quantile_integral
from lpclt.mixing import Polynomial
from lpclt.quantiles import ParetoTail

MARK = {CONVERGES: "+", DIVERGES: "-"}


def main():
    ss = np.arange(0.5, 4.01, 0.5)
    print("r \\ s " + " ".join(f"{s:4.1f}" for s in ss))
    for r in np.arange(2.5, 8.01, 1.0):
        row = [MARK.get(series_quantile_integral(Polynomial(1.0, s), ParetoTail(1.0, r),
                                                 4096).verdict, "?") for s in ss]
        print(f"{r:5.1f} " + " ".join(f"{m:>4}" for m in row))


if __name__ == "__main__":
    main()
