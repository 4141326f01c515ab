import math
import warnings

import numpy as np
import pytest

from lpclt.lp import GridMeasure, lp_norm
from lpclt.mixing import (Exponential, MixingProfile, MixingUnderflowWarning, NonMarkovError,
                          Polynomial, beta_one_exact_markov, beta_tilde_empirical,
                          beta_tilde_exact_markov, chain_norm_law, exact_profile,
                          gamma_from_chain, theoretical_profile)
from lpclt.processes import IID, FiniteStateMarkov, LSVDual, LSVOrbit
from lpclt.quantiles import Uniform01


def _brute_tilde(chain, k):
    """Direct definition: sup over every real threshold, checked on a fine grid."""
    P = np.linalg.matrix_power(chain.P, k)
    t = np.linspace(chain.values.min() - 1, chain.values.max() + 1, 4001)
    ind = (chain.values[:, None] <= t).astype(float)
    cond = P @ ind
    uncond = chain.pi @ ind
    return float(chain.pi @ np.abs(cond - uncond).max(axis=1))


# ---- exact coefficients -----------------------------------------------------------

def test_two_state_closed_form(two_state):
    for k in range(21):
        assert beta_tilde_exact_markov(two_state, k) == pytest.approx(
            4 / 9 * 0.7 ** k, abs=1e-10)
    assert beta_tilde_exact_markov(two_state, 1) == pytest.approx(0.3111111111, abs=1e-9)
    assert beta_tilde_exact_markov(two_state, 3) == pytest.approx(0.152444444, abs=1e-9)


def test_exact_matches_brute_force(chains):
    for chain in chains.values():
        for k in (0, 1, 2, 5):
            assert beta_tilde_exact_markov(chain, k) == pytest.approx(
                _brute_tilde(chain, k), abs=1e-12)


def test_iid_rows_chain_forgets_in_one_step(chains):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MixingUnderflowWarning)
        for k in (1, 2, 7):
            assert beta_tilde_exact_markov(chains["iid_rows"], k) == 0.0
            assert beta_one_exact_markov(chains["iid_rows"], k) == 0.0


def test_underflow_is_flagged(two_state):
    with pytest.warns(MixingUnderflowWarning):
        assert beta_tilde_exact_markov(two_state, 200) == 0.0


def test_periodic_chain_does_not_mix():
    swap = FiniteStateMarkov((0.0, 1.0), ((0.0, 1.0), (1.0, 0.0)))
    assert all(beta_tilde_exact_markov(swap, k) == pytest.approx(0.5) for k in range(30))


def test_aperiodic_chains_mix(chains):
    for chain in chains.values():
        prof = exact_profile(chain, 300)
        assert prof.values.max() <= 1.0
        assert prof[300] < 1e-8


def test_tilde_below_total_variation(chains):
    for chain in chains.values():
        for k in range(10):
            assert beta_tilde_exact_markov(chain, k) <= beta_one_exact_markov(chain, k) + 1e-15


# ---- theoretical families and profiles -------------------------------------------

def test_theoretical_examples():
    pol = Polynomial(C=1.0, s=3.0)
    assert theoretical_profile(pol, 0) == 1.0
    assert theoretical_profile(pol, 9) == pytest.approx(1e-3)
    assert theoretical_profile(Exponential(1.0, 1.0, 1.0), 3) == pytest.approx(math.exp(-3))
    assert np.all(theoretical_profile(Polynomial(5.0, 1.0), np.arange(3)) <= 1.0)


def test_profile_validation_and_csv():
    with pytest.raises(ValueError):
        MixingProfile(np.array([0.5, 1.2]))
    prof = MixingProfile.m_dependent(2, 5)
    assert list(prof.values) == [1, 1, 1, 0, 0, 0]
    text = MixingProfile(np.array([0.5, 0.25]), se=np.array([0.1, 0.1])).to_csv()
    assert text.splitlines() == ["k,value,se", "0,0.5,0.1", "1,0.25,0.1"]


def test_log_slope_of_polynomial_profile():
    slope, lags = MixingProfile.theoretical(Polynomial(0.5, 2.5), 60).log_slope()
    assert slope == pytest.approx(-2.5, abs=1e-9) and lags[0] == 1


# ---- empirical estimator -------------------------------------------------------------

def test_empirical_iid_is_zero():
    est, se = beta_tilde_empirical(IID(Uniform01()), 1, 20_000, rng=np.random.default_rng(0))
    assert est <= 3 * se


def test_empirical_two_state(two_state):
    est, se = beta_tilde_empirical(two_state, 1, 20_000, rng=np.random.default_rng(1))
    assert abs(est - 0.311111) <= 3 * se


def test_empirical_agrees_with_exact_on_suite(chains):
    ks = [1, 2, 5, 10]
    for i, chain in enumerate(chains.values()):
        est, se = beta_tilde_empirical(chain, ks, 20_000, rng=np.random.default_rng(10 + i))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", MixingUnderflowWarning)
            exact = np.array([beta_tilde_exact_markov(chain, k) for k in ks])
        assert np.all(np.abs(est - exact) <= 3 * se + 1e-12), (est, exact, se)


def test_empirical_rejects_non_markov():
    with pytest.raises(NonMarkovError):
        beta_tilde_empirical(LSVOrbit(0.25), 1)


@pytest.mark.slow
def test_lsv_dual_decay_slope():
    # the first few lags decay more slowly than the polynomial tail, so the
    # fitted slope only reflects the tail once lags past ~15 are resolved
    ks = list(range(51))
    est, se = beta_tilde_empirical(LSVDual(0.25, burn_in=2000), ks, 400_000,
                                   rng=np.random.default_rng(3), bootstrap=30)
    slope, lags = MixingProfile(est, {"kind": "empirical"}, se).log_slope()
    assert len(lags) >= 5
    assert slope <= -(1 - 0.25) / 0.25 + 0.7


# ---- gamma_n ---------------------------------------------------------------------

def test_gamma_iid_rows_is_zero(chains):
    grid = GridMeasure.uniform(0, 1, 64)
    for n in (1, 3):
        assert gamma_from_chain(chains["iid_rows"], grid, n) == pytest.approx(0.0, abs=1e-15)


def test_gamma_two_state_against_monte_carlo(two_state):
    grid = GridMeasure.uniform(0, 1, 128)
    exact = gamma_from_chain(two_state, grid, 1)
    rng = np.random.default_rng(5)
    ind = (two_state.values[:, None] <= grid.nodes).astype(float)
    F = two_state.pi @ ind
    batches = []
    for _ in range(20):
        y0, y1 = two_state.lagged_pairs([1], 10_000, rng)
        y0, y1 = y0[0], y1[0]
        tot = 0.0
        for s, v in enumerate(two_state.values):
            m = y0 == v
            cond = (y1[m][:, None] <= grid.nodes).mean(axis=0)
            tot += m.mean() * lp_norm(cond - F, grid, 2)
        batches.append(tot)
    se = np.std(batches, ddof=1) / np.sqrt(len(batches))
    assert abs(np.mean(batches) - exact) <= 3 * se


def test_coupling_bound(chains):
    for chain in chains.values():
        for p in (2.0, 3.0):
            grid = GridMeasure.uniform(-1, 2, 96, p)
            law = chain_norm_law(chain, grid)
            for n in range(0, 30):
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", MixingUnderflowWarning)
                    b = beta_tilde_exact_markov(chain, n)
                bound = 2 * law.int_quantile(min(b, 1.0))
                assert gamma_from_chain(chain, grid, n) <= bound + 1e-9
