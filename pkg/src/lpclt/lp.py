"""Grid-discretized L^p(mu): empirical-process paths and their functionals.

Grid functions are plain arrays whose last axis runs over the grid nodes;
leading axes are batch axes (replicates).  The norm is
``(sum_j w_j |v_j|^p)^(1/p)``.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from .measures import Atomic, DensityWeighted, LebesgueInterval, LebesgueLine
from .processes import generate_paths

__all__ = [
    "GridMeasure", "empirical_cdf_path", "centered_process", "lp_norm",
    "statistic", "dyadic_projection", "tail_functional", "CovarianceOperator",
    "estimate_cov_operator", "sample_gaussian_limit", "smoothness_check",
    "sobolev_ball_sample", "indicator_path",
]


@dataclass(frozen=True, eq=False)
class GridMeasure:
    """Quadrature stand-in for mu: ``nodes`` (increasing) with ``weights > 0``.

    ``interval`` is set for grids built on an interval (needed for dyadic
    projections); ``mass_loss`` is the mass of mu outside the grid's range.
    """

    nodes: np.ndarray
    weights: np.ndarray
    p: float = 2.0
    interval: tuple = None
    mass_loss: float = 0.0

    def __post_init__(self):
        t = np.asarray(self.nodes, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if t.ndim != 1 or t.shape != w.shape or t.size == 0:
            raise ValueError("nodes and weights must be equal-length 1-d arrays")
        if np.any(np.diff(t) <= 0):
            raise ValueError("grid nodes must be strictly increasing")
        if np.any(~(w > 0)) or not np.isfinite(w.sum()):
            raise ValueError("grid weights must be positive with finite sum")
        if not self.p >= 1:
            raise ValueError("p must be >= 1")
        object.__setattr__(self, "nodes", t)
        object.__setattr__(self, "weights", w)

    @property
    def size(self):
        return self.nodes.size

    @classmethod
    def uniform(cls, a=0.0, b=1.0, size=1024, p=2.0, mass_loss=0.0):
        """Midpoint rule for Lebesgue measure on ``[a, b]``."""
        h = (b - a) / size
        nodes = a + h * (np.arange(size) + 0.5)
        return cls(nodes, np.full(size, h), p, (float(a), float(b)), mass_loss)

    @classmethod
    def from_measure(cls, measure, size=1024, p=2.0, truncation=None):
        """Discretize a :class:`~lpclt.measures.MeasureSpec`.

        Unbounded measures need ``truncation=(lo, hi)``; the mass left out
        is recorded in ``mass_loss`` (``inf`` for Lebesgue on the line).
        """
        if isinstance(measure, Atomic):
            order = np.argsort(measure.locations)
            return cls(measure.locations[order], measure.masses[order], p)
        if isinstance(measure, LebesgueLine):
            if truncation is None:
                raise ValueError("Lebesgue measure on the line needs a truncation")
            lo, hi = truncation
            return cls.uniform(lo, hi, size, p, mass_loss=math.inf)
        if isinstance(measure, LebesgueInterval):
            lo, hi = measure.a, measure.b
            if truncation is not None:
                lo, hi = max(lo, truncation[0]), min(hi, truncation[1])
            loss = measure.total_mass - (hi - lo)
            return cls.uniform(lo, hi, size, p, mass_loss=loss)
        if isinstance(measure, DensityWeighted):
            lo, hi = measure.support
            if truncation is not None:
                lo, hi = max(lo, truncation[0]), min(hi, truncation[1])
            edges = np.linspace(lo, hi, size + 1)
            cum = measure.cumulative(edges)
            w = np.diff(cum)
            keep = w > 0
            nodes = 0.5 * (edges[1:] + edges[:-1])
            return cls(nodes[keep], w[keep], p, (float(lo), float(hi)) if keep.all() else None,
                       measure.total_mass - (cum[-1] - cum[0]))
        raise TypeError(f"cannot discretize {type(measure).__name__}")

    def as_measure(self):
        """The grid itself as an atomic measure."""
        return Atomic(tuple(zip(self.nodes.tolist(), self.weights.tolist())))


def _grid_F(F, grid):
    if callable(F):
        return np.asarray(F(grid.nodes), dtype=float)
    F = np.asarray(F, dtype=float)
    if F.shape[-1] != grid.size:
        raise ValueError("F must be given on the grid nodes")
    return F


def empirical_cdf_path(sample, grid):
    """``F_n(t_j) = #{Y_k <= t_j} / n`` for a path or a (R, n) batch."""
    y = np.asarray(getattr(sample, "values", sample), dtype=float)
    if y.shape[-1] == 0:
        raise ValueError("empty sample")
    batch = y.reshape(-1, y.shape[-1])
    R, n = batch.shape
    M = grid.size
    # Y <= t_j  iff  j >= (number of nodes < Y)
    b = np.searchsorted(grid.nodes, batch, side="left")
    flat = (b + (M + 1) * np.arange(R)[:, None]).ravel()
    counts = np.bincount(flat, minlength=R * (M + 1)).reshape(R, M + 1)
    Fn = np.cumsum(counts[:, :M], axis=1) / n
    return Fn.reshape(y.shape[:-1] + (M,))


def centered_process(sample, F, grid):
    """``sqrt(n) (F_n - F)`` on the grid; ``F`` is a callable CDF or node values."""
    y = np.asarray(getattr(sample, "values", sample), dtype=float)
    n = y.shape[-1]
    return math.sqrt(n) * (empirical_cdf_path(y, grid) - _grid_F(F, grid))


def lp_norm(values, grid, p=None):
    p = grid.p if p is None else p
    v = np.abs(np.asarray(values, dtype=float))
    if p == 2:
        return np.sqrt((v * v) @ grid.weights)
    return ((v ** p) @ grid.weights) ** (1.0 / p)


def statistic(sample, F, grid, p=None):
    r"""``n^(p/2) \int |F_n - F|^p dmu`` on the grid."""
    p = grid.p if p is None else p
    v = np.abs(centered_process(sample, F, grid))
    return (v ** p) @ grid.weights


def _cells(grid, level):
    if grid.interval is None:
        raise ValueError("dyadic projections need an interval-based grid")
    a, b = grid.interval
    k = 2 ** int(level)
    idx = np.clip(np.floor((grid.nodes - a) / (b - a) * k).astype(np.intp), 0, k - 1)
    mass = np.bincount(idx, weights=grid.weights, minlength=k)
    if np.any(mass == 0):
        raise ValueError(f"level {level}: some of the {k} dyadic cells hold no grid node")
    return idx, mass


def dyadic_projection(values, grid, level):
    """mu-weighted average over each of the ``2^level`` dyadic cells.

    This is the conditional expectation onto the dyadic sigma-field of that
    level: idempotent and of norm 1 on every grid L^p.
    """
    idx, mass = _cells(grid, level)
    v = np.asarray(values, dtype=float)
    k = mass.size
    flat = v.reshape(-1, grid.size)
    sums = np.zeros((flat.shape[0], k))
    np.add.at(sums, (slice(None), idx), flat * grid.weights)
    return (sums / mass)[:, idx].reshape(v.shape)


def tail_functional(values, grid, level, p=None):
    """``||v - P_l v||``, an upper bound for the distance to the level-l subspace."""
    v = np.asarray(values, dtype=float)
    return lp_norm(v - dyadic_projection(v, grid, level), grid, p)


@dataclass(eq=False)
class CovarianceOperator:
    """Symmetric PSD matrix ``K(t_i, t_j)`` of the Gaussian limit on the grid.

    ``clipped_mass`` is the total of the negative eigenvalues removed by the
    PSD repair; ``plateau`` compares the weighted trace at ``max_lag`` and
    ``max_lag // 2``.
    """

    matrix: np.ndarray
    max_lag: int = 0
    clipped_mass: float = 0.0
    min_eigenvalue: float = 0.0
    plateau: dict = field(default_factory=dict)

    @classmethod
    def from_matrix(cls, K, max_lag=0, plateau=None):
        K = np.asarray(K, dtype=float)
        K = 0.5 * (K + K.T)
        lam, V = np.linalg.eigh(K)
        neg = lam < 0
        K_psd = (V * np.clip(lam, 0.0, None)) @ V.T
        return cls(0.5 * (K_psd + K_psd.T), max_lag, float(-lam[neg].sum()) + 0.0,
                   float(lam.min()) if lam.size else 0.0, plateau or {})

    def scaled(self, c):
        return CovarianceOperator(c * self.matrix, self.max_lag, c * self.clipped_mass,
                                  c * self.min_eigenvalue, dict(self.plateau))

    def trace(self, grid):
        return float(np.diag(self.matrix) @ grid.weights)


def _lag_cov(b, k, M, F):
    # joint counts of (bin of Y_i, bin of Y_{i+k}) -> centered indicator covariance
    b1, b2 = b[:, : b.shape[1] - k].ravel(), b[:, k:].ravel()
    N = b1.size
    H = np.bincount(b1 * (M + 1) + b2, minlength=(M + 1) ** 2).reshape(M + 1, M + 1)
    J = np.cumsum(np.cumsum(H, axis=0), axis=1)[:M, :M] / N
    A = np.cumsum(np.bincount(b1, minlength=M + 1))[:M] / N
    B = np.cumsum(np.bincount(b2, minlength=M + 1))[:M] / N
    return J - np.outer(F, B) - np.outer(A, F) + np.outer(F, F)


def estimate_cov_operator(spec, grid, max_lag=50, budget=10 ** 6, seed=0, F=None,
                          key=("cov",)):
    """Lag-truncated estimate of ``sum_k cov(X_0(s), X_k(t))``.

    ``budget`` observations are drawn as independent stationary chunks whose
    length is a comfortable multiple of ``max_lag``; within-chunk pairs give
    the lag covariances of the centered indicators ``1{Y <= t} - F(t)``.
    ``F`` defaults to the process's marginal CDF.
    """
    if max_lag < 0:
        raise ValueError("max_lag must be >= 0")
    if budget < 10 ** 3:
        raise ValueError("budget must be >= 1000")
    F = _grid_F(spec.marginal_cdf if F is None else F, grid)
    M = grid.size
    length = min(budget, max(1024, 64 * (max_lag + 1)))
    chunks = max(1, budget // length)
    per_batch = max(1, min(chunks, 4_000_000 // (length * 8) or 1))
    half = max_lag // 2
    # running sums of the lag-truncated series at max_lag and at max_lag // 2
    K = np.zeros((M, M))
    K_half = np.zeros((M, M))
    done = 0
    while done < chunks:
        r = min(per_batch, chunks - done)
        y, _ = generate_paths(spec, length, seed, r, key=key, start=done)
        b = np.searchsorted(grid.nodes, y, side="left")
        for k in range(max_lag + 1):
            c = (r / chunks) * _lag_cov(b, k, M, F)
            term = c if k == 0 else c + c.T
            K += term
            if k <= half:
                K_half += term
        done += r
    plateau = {}
    if max_lag >= 2:
        tr, tr_half = np.diag(K) @ grid.weights, np.diag(K_half) @ grid.weights
        rel = abs(tr - tr_half) / max(abs(tr), 1e-300)
        plateau = {"trace": float(tr), "trace_half_lag": float(tr_half),
                   "relative_change": float(rel), "plateau": bool(rel < 0.01)}
    return CovarianceOperator.from_matrix(K, max_lag, plateau)


def sample_gaussian_limit(K, grid, p=None, rng=None, size=1, chunk=2048):
    r"""Draws of ``\int |G|^p dmu`` for a centered Gaussian grid path ``G ~ N(0, K)``."""
    p = grid.p if p is None else p
    rng = np.random.default_rng() if rng is None else rng
    mat = K.matrix if isinstance(K, CovarianceOperator) else np.asarray(K, dtype=float)
    lam, V = np.linalg.eigh(0.5 * (mat + mat.T))
    if lam.size and lam.min() < -1e-10 * max(1.0, abs(lam).max()):
        raise np.linalg.LinAlgError(
            f"covariance not PSD: smallest eigenvalue {lam.min():.3e}, "
            f"largest {lam.max():.3e}; repair with CovarianceOperator.from_matrix"
        )
    factor = V * np.sqrt(np.clip(lam, 0.0, None))
    out = np.empty(size)
    for s in range(0, size, chunk):
        m = min(chunk, size - s)
        G = rng.standard_normal((m, grid.size)) @ factor.T
        out[s:s + m] = (np.abs(G) ** p) @ grid.weights
    return out


def smoothness_check(grid, p=None, trials=10_000, rng=None):
    """Largest ``||x+y||^2 + ||x-y||^2 - 2||x||^2 - 2(p-1)||y||^2`` over random pairs.

    Pairs mix Gaussian, sparse and heavy-tailed grid functions at random
    relative scales; a 2-smooth norm with constant ``sqrt(p-1)`` keeps the
    value <= 0 up to rounding.
    """
    p = grid.p if p is None else p
    if not p >= 2:
        raise ValueError("p must be >= 2")
    rng = np.random.default_rng() if rng is None else rng
    M = grid.size
    x = rng.standard_normal((trials, M))
    y = rng.standard_normal((trials, M))
    third = trials // 3
    y[:third] *= rng.random((third, M)) < 0.1
    x[third:2 * third] = rng.standard_cauchy((third, M))
    y *= np.exp(rng.uniform(-4, 4, (trials, 1)))
    n = lambda v: lp_norm(v, grid, p) ** 2
    viol = n(x + y) + n(x - y) - 2 * n(x) - 2 * (p - 1) * n(y)
    scale = n(x) + n(y)
    return float(np.max(viol / scale))


def sobolev_ball_sample(grid, p=None, rng=None, size=1):
    """Random members of the discretized ball W_{1,q}(mu) on the grid.

    Returns ``(g, incr)``: densities with ``||g||_q <= 1`` and the
    increments ``f(t_j) - f(0)`` at the nodes, where
    ``f(x) - f(0) = int_[0,x[ g dmu`` for ``x > 0`` and
    ``- int_[x,0[ g dmu`` for ``x <= 0``.
    """
    p = grid.p if p is None else p
    q = p / (p - 1.0)
    rng = np.random.default_rng() if rng is None else rng
    g = rng.standard_normal((size, grid.size)) * rng.random((size, grid.size)) ** 3
    g /= lp_norm(g, grid, q)[:, None]
    g *= rng.random((size, 1)) ** 0.25
    gw = g * grid.weights
    t = grid.nodes
    pos = np.cumsum(gw, axis=1) - gw                  # sum over 0 <= t_i < t_j
    pos -= (np.cumsum(gw * (t < 0), axis=1) - gw * (t < 0))
    neg = np.cumsum(gw[:, ::-1] * (t[::-1] < 0), axis=1)[:, ::-1]  # t_j <= t_i < 0
    incr = np.where(t > 0, pos, -neg)
    return g, incr


def indicator_path(y0, F, grid):
    """``1{y0 <= t} - F(t)`` on the grid for scalar or array ``y0``."""
    y0 = np.asarray(y0, dtype=float)[..., None]
    return (y0 <= grid.nodes).astype(float) - _grid_F(F, grid)
