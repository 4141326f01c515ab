"""Cramer-von Mises statistic for i.i.d. uniform samples.

With mu = Lebesgue measure on [0, 1] and p = 2, the squared L^2 norm of
sqrt(n) (F_n - F) is the Cramer-von Mises statistic.  Its limit law is that of
sum_k Z_k^2 / (k pi)^2, and its mean is 1/6.  This script compares the two.

    python3 demos/cvm_iid.py
"""
import numpy as np
from scipy import stats

from lpclt.harness import statistic_sample
from lpclt.lp import GridMeasure
from lpclt.processes import IID
from lpclt.quantiles import Uniform01
from lpclt.rng import rng_stream


def main(n=1024, R=4000, seed=0):
    grid = GridMeasure.uniform(0.0, 1.0, 512)
    stat, _ = statistic_sample(IID(Uniform01()), n, grid, grid.nodes, seed, R)
    w = 1.0 / (np.arange(1, 501) * np.pi) ** 2
    oracle = (rng_stream(seed, "oracle").standard_normal((R, 500)) ** 2) @ w
    res = stats.ks_2samp(stat, oracle)
    print(f"n={n}, R={R}")
    print(f"mean of the statistic   {stat.mean():.4f}   (limit 1/6 = {1 / 6:.4f})")
    print(f"KS distance to series   {res.statistic:.4f}   (p-value {res.pvalue:.2f})")


if __name__ == "__main__":
    main()
