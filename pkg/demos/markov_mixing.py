"""Mixing coefficients and block-martingale diagnostics for a two-state chain.

For the chain with transition matrix [[0.9, 0.1], [0.2, 0.8]] the weak
coefficient equals (4/9) 0.7^k exactly.  The script prints the exact values,
the cross-fitted estimates with their standard errors, and the decay of the
conditional-expectation term of the martingale approximation, which should
fall like n^(-1/2).

    python3 demos/markov_mixing.py
"""
import numpy as np

from lpclt.harness import martingale_diagnostics
from lpclt.lp import GridMeasure
from lpclt.mixing import beta_tilde_empirical, exact_profile
from lpclt.processes import FiniteStateMarkov
from lpclt.rng import rng_stream


def main(seed=0):
    chain = FiniteStateMarkov((0.0, 1.0), ((0.9, 0.1), (0.2, 0.8)))
    lags = [0, 1, 2, 5, 10]
    exact = exact_profile(chain, 10).values
    est, se = beta_tilde_empirical(chain, lags, 20_000, rng=rng_stream(seed, "beta"))
    print(" k   exact    closed form  estimate (se)")
    for k, e, s in zip(lags, est, se):
        print(f"{k:2d}  {exact[k]:.5f}  {4 / 9 * 0.7 ** k:.5f}      {e:.5f} ({s:.5f})")

    grid = GridMeasure.uniform(0.0, 1.0, 64)
    ns = (256, 1024, 4096, 16384)
    rep = martingale_diagnostics(chain, grid, ns, mc_paths=100, seed=seed)
    slope = np.polyfit(np.log(ns), np.log(rep.a), 1)[0]
    print("\n    n   conditional-expectation term")
    for n, a in zip(ns, rep.a):
        print(f"{n:5d}   {a:.3e}")
    print(f"log-log slope {slope:.3f} (expected -0.5)")


if __name__ == "__main__":
    main()
