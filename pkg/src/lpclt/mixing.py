r"""Weak beta-mixing coefficients.

For a stationary sequence the coefficient studied here is

.. math::

    \tilde\beta_1(k) = E \sup_t |P(Y_k \le t \mid \text{past}) - P(Y_k \le t)|,

the supremum running over half-line thresholds only.  For finite-state
chains it is computed exactly from matrix powers; for other Markov-type
specs it is estimated from lagged pairs ``(Y_0, Y_k)`` with bins on ``Y_0``.
"""
import csv
import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .quantiles import Discrete
from .records import register

__all__ = [
    "MixingUnderflowWarning", "NonMarkovError", "MixingProfile", "Polynomial",
    "Exponential", "theoretical_profile", "beta_tilde_exact_markov",
    "beta_one_exact_markov", "beta_tilde_empirical", "gamma_from_chain",
    "chain_norm_law", "chain_ypmu_law", "exact_profile",
]

# below this the matrix-power deviation is indistinguishable from rounding
_RESOLUTION = 64 * np.finfo(float).eps


class MixingUnderflowWarning(RuntimeWarning):
    """The exact coefficient dropped below floating-point resolution."""


class NonMarkovError(ValueError):
    """Conditioning on ``Y_0`` alone does not reproduce the past for this spec."""


# --- rate families -----------------------------------------------------------

@register("polynomial")
@dataclass(frozen=True)
class Polynomial:
    """``min(1, C (k+1)^(-s))``."""

    C: float = 1.0
    s: float = 1.0

    def __post_init__(self):
        if not (self.C > 0 and self.s > 0):
            raise ValueError("polynomial rate needs C > 0 and s > 0")

    def __call__(self, k):
        k = np.asarray(k, dtype=float)
        return np.minimum(1.0, self.C * (k + 1.0) ** (-self.s))


@register("exponential")
@dataclass(frozen=True)
class Exponential:
    """``min(1, C exp(-tau k^(1/a)))``."""

    C: float = 1.0
    tau: float = 1.0
    a: float = 1.0

    def __post_init__(self):
        if not (self.C > 0 and self.tau > 0 and self.a > 0):
            raise ValueError("exponential rate needs C, tau, a > 0")

    def __call__(self, k):
        k = np.asarray(k, dtype=float)
        return np.minimum(1.0, self.C * np.exp(-self.tau * k ** (1.0 / self.a)))


def theoretical_profile(family, k):
    """Value of a rate family at lag ``k`` (scalar or array)."""
    out = family(k)
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class MixingProfile:
    """Sequence ``k -> beta(k)`` for ``k = 0 .. len(values) - 1``.

    ``provenance`` records how the numbers were obtained; empirical
    profiles also carry standard errors in ``se``.
    """

    values: np.ndarray
    provenance: dict = field(default_factory=dict)
    se: np.ndarray = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("profile needs a nonempty 1-d sequence")
        if np.any(~((v >= 0) & (v <= 1))):
            raise ValueError("mixing coefficients must lie in [0, 1]")
        self.values = v
        if self.se is not None:
            self.se = np.asarray(self.se, dtype=float)

    def __len__(self):
        return self.values.size

    def __getitem__(self, k):
        return self.values[k]

    @classmethod
    def theoretical(cls, family, k_max):
        k = np.arange(k_max + 1)
        return cls(family(k), {"kind": "theoretical", "family": type(family).__name__,
                               "params": dict(vars(family))})

    @classmethod
    def m_dependent(cls, m, k_max, head=1.0):
        v = np.zeros(k_max + 1)
        v[: m + 1] = head
        return cls(v, {"kind": "m-dependent", "m": m})

    def log_slope(self, k_min=1, z=3.0):
        """Least-squares slope of ``log beta(k)`` against ``log(k + 1)``.

        Only lags ``k >= k_min`` with a positive value (and, for empirical
        profiles, a value above ``z`` standard errors) enter the fit, since
        noise-level estimates carry no information on the decay.

        Returns
        -------
        slope : float
            ``nan`` when fewer than two lags qualify.
        lags : ndarray
            The lags used.
        """
        k = np.arange(self.values.size)
        ok = (k >= k_min) & (self.values > 0)
        if self.se is not None:
            ok &= self.values > z * self.se
        if ok.sum() < 2:
            return math.nan, k[ok]
        slope = np.polyfit(np.log(k[ok] + 1.0), np.log(self.values[ok]), 1)[0]
        return float(slope), k[ok]

    def to_csv(self, fh=None):
        """Write ``k,value[,se]`` rows; returns the text when ``fh`` is None."""
        out = io.StringIO() if fh is None else fh
        w = csv.writer(out, lineterminator="\n")
        has_se = self.se is not None
        w.writerow(["k", "value", "se"] if has_se else ["k", "value"])
        for k, v in enumerate(self.values):
            row = [k, repr(float(v))]
            if has_se:
                row.append(repr(float(self.se[k])))
            w.writerow(row)
        return out.getvalue() if fh is None else None


# --- exact coefficients for finite chains ------------------------------------

def _power(chain, k):
    if k < 0:
        raise ValueError("lag must be >= 0")
    return np.linalg.matrix_power(chain.P, int(k))


def _flag_underflow(value, k):
    if 0 < value < _RESOLUTION:
        warnings.warn(f"coefficient at lag {k} is below rounding resolution; returning 0",
                      MixingUnderflowWarning, stacklevel=3)
        return 0.0
    return value


def beta_tilde_exact_markov(chain, k):
    """Exact weak coefficient of a stationary finite-state chain at lag ``k``.

    For each start state the supremum over thresholds is attained at a state
    value, so it is a maximum over cumulative row sums of ``P^k``.
    """
    Pk = _power(chain, k)
    dev = np.cumsum(Pk - chain.pi, axis=1)[:, :-1]
    b = np.abs(dev).max(axis=1) if dev.shape[1] else np.zeros(len(chain.pi))
    value = float(np.clip(chain.pi @ b, 0.0, 1.0))
    return _flag_underflow(value, k)


def beta_one_exact_markov(chain, k):
    """Total-variation coefficient ``sum_s pi_s ||P^k(s, .) - pi||_TV``."""
    Pk = _power(chain, k)
    value = float(np.clip(chain.pi @ (0.5 * np.abs(Pk - chain.pi).sum(axis=1)), 0.0, 1.0))
    return _flag_underflow(value, k)


def exact_profile(chain, k_max, kind="tilde"):
    fn = beta_tilde_exact_markov if kind == "tilde" else beta_one_exact_markov
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MixingUnderflowWarning)
        v = [fn(chain, k) for k in range(k_max + 1)]
    return MixingProfile(np.array(v), {"kind": "exact", "coefficient": kind})


# --- empirical estimator -----------------------------------------------------

def _signed_gap(b, c, nb, nt):
    """Per-bin conditional minus pooled CDF at each threshold, with bin weights."""
    H = np.bincount(b * (nt + 1) + c, minlength=nb * (nt + 1)).reshape(nb, nt + 1)
    below = np.cumsum(H, axis=1)[:, :nt]
    nbin = H.sum(axis=1)
    pooled = below.sum(axis=0) / max(b.size, 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        cond = below / nbin[:, None]
    gap = np.where(nbin[:, None] > 0, cond - pooled, 0.0)
    return gap, nbin / max(b.size, 1)


def _crossfit(b, c, nb, nt, half):
    est = 0.0
    for fit, ev in ((half, ~half), (~half, half)):
        g_fit, _ = _signed_gap(b[fit], c[fit], nb, nt)
        j = np.abs(g_fit).argmax(axis=1)
        sgn = np.sign(g_fit[np.arange(nb), j])
        g_ev, w_ev = _signed_gap(b[ev], c[ev], nb, nt)
        est += 0.5 * float(w_ev @ (sgn * g_ev[np.arange(nb), j]))
    return est


def _bins(y0, max_bins):
    u = np.unique(y0)
    if u.size <= max_bins:
        return np.searchsorted(u, y0), u.size
    edges = np.quantile(y0, np.linspace(0, 1, max_bins + 1)[1:-1])
    edges = np.unique(edges)
    return np.searchsorted(edges, y0, side="right"), edges.size + 1


def _thresholds(yk, grid):
    u = np.unique(yk)
    if grid is None:
        if u.size <= 256:
            return u[:-1] if u.size > 1 else u
        grid = 256
    if np.isscalar(grid):
        n = int(grid)
        if n < 8:
            raise ValueError("threshold grid needs >= 8 points")
        qs = np.quantile(yk, (np.arange(n) + 0.5) / n)
        return np.unique(qs)
    g = np.unique(np.asarray(grid, dtype=float))
    if g.size < 8 and u.size > g.size:
        raise ValueError("threshold grid needs >= 8 points")
    return g


def beta_tilde_empirical(spec, k, replicates=20_000, grid=None, rng=None,
                         bins=32, bootstrap=200):
    """Estimate of the weak coefficient from ``replicates`` lagged pairs.

    The sample is split in two halves.  On one half each ``Y_0``-bin picks
    the threshold maximizing the gap between its conditional CDF of ``Y_k``
    and the pooled CDF; the signed gap at that threshold is then read off
    the other half, and the two directions are averaged.  Noise therefore
    does not inflate the supremum: the estimate has mean 0 under
    independence.  Binning and the finite threshold grid bias it downward.

    Parameters
    ----------
    spec : ProcessSpec
        Must be Markov in the sense that ``Y_0`` carries all information of
        the past about ``Y_k``.
    k : int or sequence of int
        Lag(s).
    replicates : int
        Number of independent pairs per lag (>= 100).
    grid : None, int or array
        Thresholds: ``None`` uses all observed values when there are at most
        256 of them, else 256 quantile-spaced points; an int asks for that
        many quantile-spaced points; an array is used as is.
    bins : int
        Maximal number of quantile bins on ``Y_0`` (discrete ``Y_0`` with few
        values is binned by value).
    bootstrap : int
        Resamples for the standard error.

    Returns
    -------
    estimate, se : float or ndarray
        Clamped to ``[0, 1]``; arrays when ``k`` is a sequence.
    """
    if not spec.is_markov:
        raise NonMarkovError(
            f"{type(spec).__name__} is not Markov: conditioning on Y_0 alone misses "
            "the information in earlier values, and for a deterministic orbit the "
            "conditional law is degenerate, so a binned estimate would be biased. "
            "Use the time-reversed dual (LSVDual) instead."
        )
    if replicates < 100:
        raise ValueError("need >= 100 replicates")
    rng = np.random.default_rng() if rng is None else rng
    scalar = np.ndim(k) == 0
    ks = [int(k)] if scalar else [int(v) for v in k]
    if any(v < 0 for v in ks):
        raise ValueError("lags must be >= 0")
    y0s, yks = spec.lagged_pairs(ks, replicates, rng)
    half = np.zeros(replicates, dtype=bool)
    half[rng.permutation(replicates)[: replicates // 2]] = True
    est, se = [], []
    for y0, yk in zip(y0s, yks):
        b, nb = _bins(np.asarray(y0), bins)
        t = _thresholds(np.asarray(yk), grid)
        c = np.searchsorted(t, yk, side="left")
        nt = t.size
        e = _crossfit(b, c, nb, nt, half)
        boots = np.empty(bootstrap)
        for i in range(bootstrap):
            idx = rng.integers(0, replicates, replicates)
            boots[i] = _crossfit(b[idx], c[idx], nb, nt, half)
        est.append(min(max(e, 0.0), 1.0))
        se.append(float(boots.std(ddof=1)) if bootstrap > 1 else math.nan)
    if scalar:
        return est[0], se[0]
    return np.array(est), np.array(se)


# --- gamma_n and laws for the proof bounds -------------------------------------

def _chain_cdf_rows(chain, grid, Pk):
    # (P^k cumulative)(s, t_j) for every start state s
    ind = (chain.values[:, None] <= grid.nodes[None, :]).astype(float)
    return Pk @ ind, chain.pi @ ind


def gamma_from_chain(chain, grid, n, p=None):
    """``E || E(X_n | F_0) ||`` in the grid L^p for the indicator process."""
    from .lp import lp_norm

    rows, F = _chain_cdf_rows(chain, grid, _power(chain, n))
    return float(chain.pi @ lp_norm(rows - F, grid, p))


def chain_norm_law(chain, grid, p=None):
    """Law of ``||1{Y_0 <= .} - F||`` in the grid L^p under the stationary vector."""
    from .lp import lp_norm

    ind, F = _chain_cdf_rows(chain, grid, np.eye(len(chain.pi)))
    return Discrete(tuple(lp_norm(ind - F, grid, p).tolist()), tuple(chain.pi.tolist()))


def chain_ypmu_law(chain, measure, p):
    """Law of ``|F_mu(Y_0)|^(1/p)`` under the stationary vector."""
    from .measures import f_mu

    v = np.abs(np.asarray(f_mu(measure, chain.values), dtype=float)) ** (1.0 / p)
    return Discrete(tuple(v.tolist()), tuple(chain.pi.tolist()))
