import numpy as np
import pytest
from scipy import stats

from lpclt.measures import LebesgueInterval
from lpclt.processes import (CLIP_FLOOR, IID, Composed, FiniteStateMarkov, Identity, InvPow,
                             InvPowRight, LSVDual, LSVOrbit, MonotoneTable, PathSample,
                             apply_observable, generate_path, generate_paths,
                             lsv_invariant_cdf, lsv_map, sample_invariant)
from lpclt.quantiles import ParetoTail, Uniform01
from lpclt.rng import rng_stream

CHAIN = FiniteStateMarkov((0.0, 1.0), ((0.9, 0.1), (0.2, 0.8)))


# ---- the intermittent map -----------------------------------------------------------

def test_lsv_map_examples():
    assert lsv_map(0.5, 0.5) == 0.0
    for g in (0.1, 0.25, 0.7):
        assert lsv_map(g, 1.0) == 1.0
    assert lsv_map(0.5, 0.25) == pytest.approx(0.25 * (1 + 0.5 ** 0.5), abs=1e-12)
    assert lsv_map(0.5, 0.25) == pytest.approx(0.4267766953, abs=1e-10)
    with pytest.raises(ValueError):
        lsv_map(0.25, 1.5)
    with pytest.raises(ValueError):
        lsv_map(1.0, 0.3)


def test_lsv_map_range_and_continuity_at_half():
    x = np.linspace(0, 1, 10001)
    y = lsv_map(0.3, x)
    assert y.min() >= 0 and y.max() <= 1
    # left branch tends to 1 at 1/2, right branch starts at 0
    assert lsv_map(0.3, 0.5 - 1e-12) == pytest.approx(1.0, abs=1e-9)


def test_invariant_draws_density_bounds():
    rng = np.random.default_rng(0)
    y = sample_invariant(0.25, rng, burn_in=500, size=10 ** 6)
    assert y.min() >= 0 and y.max() <= 1
    edges = np.linspace(0.05, 0.95, 19)
    h, _ = np.histogram(y, bins=edges)
    dens = h / (y.size * np.diff(edges))
    mid = 0.5 * (edges[1:] + edges[:-1])
    ratio = mid ** 0.25 * dens
    # bounded away from 0 and infinity, with a modest spread
    assert ratio.min() > 0.3 and ratio.max() < 3.0
    assert ratio.max() / ratio.min() < 3.0


def test_invariant_law_is_preserved_by_the_map():
    rng = np.random.default_rng(1)
    y = sample_invariant(0.25, rng, burn_in=2000, size=10 ** 5)
    assert stats.ks_2samp(y, lsv_map(0.25, y)).statistic < 0.01


def test_invariant_cdf_matches_draws():
    cdf = lsv_invariant_cdf(0.25)
    rng = np.random.default_rng(2)
    y = sample_invariant(0.25, rng, burn_in=2000, size=50_000)
    assert stats.kstest(y, cdf).statistic < 0.01


# ---- paths --------------------------------------------------------------------------

def test_iid_reproducible_and_uniform():
    a = generate_path(IID(Uniform01()), 3, rng_stream(5, "t"))
    b = generate_path(IID(Uniform01()), 3, rng_stream(5, "t"))
    assert np.array_equal(a.values, b.values) and a.values.shape == (3,)
    big = generate_path(IID(Uniform01()), 10 ** 5, rng_stream(5, "big"))
    assert stats.kstest(big.values, "uniform").statistic < 0.02


def test_markov_state_frequencies():
    assert np.allclose(CHAIN.pi, (2 / 3, 1 / 3), atol=1e-12)
    paths, _ = generate_paths(CHAIN, 10 ** 4, seed=3, replicates=100)
    assert paths.mean() == pytest.approx(1 / 3, abs=0.01)


def test_markov_validation():
    with pytest.raises(ValueError):
        FiniteStateMarkov((0.0, 1.0), ((0.5, 0.6), (0.5, 0.5)))
    with pytest.raises(ValueError):
        FiniteStateMarkov((1.0, 0.0), ((0.5, 0.5), (0.5, 0.5)))
    with pytest.raises(ValueError):   # reducible: stationary law not unique
        FiniteStateMarkov((0.0, 1.0), ((1.0, 0.0), (0.0, 1.0)))


def test_dual_and_orbit_share_the_invariant_marginal():
    n, R = 1000, 10 ** 4
    d, _ = generate_paths(LSVDual(0.25), n, seed=4, replicates=R, key=("d",))
    o, _ = generate_paths(LSVOrbit(0.25), n, seed=4, replicates=R, key=("o",))
    cols = np.arange(0, n, 100)
    assert stats.ks_2samp(d[:, cols].ravel(), o[:, cols].ravel()).statistic < 0.02


def test_dual_is_reversed_orbit():
    d, _ = generate_paths(LSVDual(0.25), 200, seed=9, replicates=3)
    o, _ = generate_paths(LSVOrbit(0.25), 200, seed=9, replicates=3)
    assert np.array_equal(d, o[:, ::-1])
    assert np.array_equal(np.sort(d, axis=1), np.sort(o, axis=1))


@pytest.mark.parametrize("spec", [IID(ParetoTail(1.0, 4.0)), CHAIN, LSVDual(0.25)],
                         ids=["iid", "markov", "lsv_dual"])
def test_stationarity_smoke(spec):
    n = 10 ** 5
    y = generate_path(spec, n + n // 2, rng_stream(11, "stat")).values
    assert stats.ks_2samp(y[:n], y[n // 2:]).statistic < 0.02


def test_determinism_and_batching():
    for spec in (IID(Uniform01()), CHAIN, LSVDual(0.25), Composed(CHAIN, InvPowRight(0.5))):
        batch, _ = generate_paths(spec, 50, seed=7, replicates=4, key=("k",))
        again, _ = generate_paths(spec, 50, seed=7, replicates=2, key=("k",), start=2)
        assert np.array_equal(batch[2:], again)
        one = generate_path(spec, 50, rng_stream(7, "k", 1))
        assert np.array_equal(batch[1], one.values)


def test_generate_path_rejects_empty():
    with pytest.raises(ValueError):
        generate_path(CHAIN, 0, rng_stream(0))


# ---- observables -----------------------------------------------------------------

def _path(v):
    return PathSample(np.asarray(v, dtype=float), "h")


def test_observable_examples():
    p = _path((0.5, 0.25))
    assert np.array_equal(apply_observable(p, Identity()).values, p.values)
    assert np.allclose(apply_observable(p, InvPow(1.0)).values, (2.0, 4.0))
    assert np.allclose(apply_observable(_path((0.75,)), InvPowRight(0.5)).values, (2.0,))


def test_singularity_clipping_is_counted():
    out = apply_observable(_path((0.0, 1e-320, 0.5)), InvPow(1.0))
    assert out.clipped == 2
    assert out.values[0] == CLIP_FLOOR ** -1.0 and out.values[1] == CLIP_FLOOR ** -1.0
    assert np.all(np.isfinite(out.values))
    big = apply_observable(_path((1.0, 1e-200)), InvPow(2.0))
    assert big.clipped == 1 and np.all(np.isfinite(big.values))
    assert apply_observable(_path((1.0,)), InvPowRight(2.0)).clipped == 1


def test_observable_inverses():
    t = np.array([0.5, 2.0, 10.0])
    for phi in (InvPow(0.7), InvPowRight(1.5), MonotoneTable((0.0, 0.5, 1.0), (3.0, 2.0, 0.0))):
        x = phi.inverse(t)
        ok = np.isfinite(x)
        assert np.allclose(phi(x[ok])[0], t[ok])


def test_composed_marginal_cdf():
    spec = Composed(IID(Uniform01()), InvPow(1.0))
    # P(1/U <= t) = 1 - 1/t for t >= 1
    assert spec.marginal_cdf(np.array([0.5, 2.0, 4.0])) == pytest.approx([0.0, 0.5, 0.75])
    chain = Composed(CHAIN, MonotoneTable((0.0, 1.0), (5.0, 3.0)))
    assert chain.marginal_cdf(np.array([2.0, 3.0, 5.0])) == pytest.approx([0, 1 / 3, 1])


def test_rng_streams_are_keyed():
    a = rng_stream(1, "x", 0).random(4)
    assert np.array_equal(a, rng_stream(1, "x", 0).random(4))
    assert not np.array_equal(a, rng_stream(1, "x", 1).random(4))
    assert not np.array_equal(a, rng_stream(2, "x", 0).random(4))
    with pytest.raises(ValueError):
        rng_stream(1, -1)
