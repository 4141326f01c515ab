"""Stationary sequence generators.

Every generator consumes a fixed number of uniforms per path from that
path's own stream and turns them into values with batched array code, so a
path is bit-identical whether it is drawn alone or as a row of a batch.

The intermittent map is ``T(x) = x (1 + (2x)^gamma)`` on ``[0, 1/2[`` and
``2x - 1`` on ``[1/2, 1]``.  Its time-reversed orbit read from a stationary
start is a stationary Markov chain (``LSVDual``).
"""
import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .quantiles import DistributionSpec, Uniform01
from .records import register, spec_hash
from .rng import rng_stream

__all__ = [
    "lsv_map", "sample_invariant", "lsv_invariant_cdf", "IID",
    "FiniteStateMarkov", "LSVOrbit", "LSVDual", "Composed", "Identity",
    "InvPow", "InvPowRight", "MonotoneTable", "PathSample", "generate_path",
    "generate_paths", "apply_observable", "CLIP_FLOOR",
]

CLIP_FLOOR = 1e-300
DEFAULT_BURN_IN = 10_000


def _check_gamma(gamma):
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")


def _lsv_step(x, gamma):
    # 0.5 goes to the right branch
    return np.where(x < 0.5, x * (1.0 + (2.0 * x) ** gamma), 2.0 * x - 1.0)


def lsv_map(gamma, x):
    """Apply the intermittent map once (vectorized)."""
    _check_gamma(gamma)
    x = np.asarray(x, dtype=float)
    if np.any(~((x >= 0) & (x <= 1))):
        raise ValueError("lsv_map is defined on [0, 1]")
    out = np.minimum(_lsv_step(x, gamma), 1.0)
    return float(out) if out.ndim == 0 else out


def sample_invariant(gamma, rng, burn_in=DEFAULT_BURN_IN, size=None):
    """Approximate draws from the absolutely continuous invariant law.

    Starts from uniforms and iterates the map ``burn_in`` times.
    """
    _check_gamma(gamma)
    if burn_in < 0:
        raise ValueError("burn_in must be >= 0")
    x = rng.random(size)
    return _burn(np.asarray(x, dtype=float), gamma, burn_in)


def _burn(x, gamma, steps):
    for _ in range(steps):
        x = _lsv_step(x, gamma)
    return x


def _left_branch_inverse(t, gamma):
    # solve y (1 + (2y)^gamma) = t on [0, 1/2]; the map is convex there
    y = np.asarray(t, dtype=float).copy()
    for _ in range(80):
        g = (2.0 * y) ** gamma
        y_new = np.clip(y - (y * (1.0 + g) - t) / (1.0 + (1.0 + gamma) * g), 0.0, 0.5)
        if np.array_equal(y_new, y):
            break
        y = y_new
    return y


@dataclass(frozen=True)
class InvariantCDF:
    """Tabulated CDF of the invariant law, linear in ``t^(1-gamma)``."""

    gamma: float
    s: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    iterations: int = 0
    residual: float = 0.0

    def __call__(self, t):
        t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
        out = np.interp(t ** (1.0 - self.gamma), self.s, self.values)
        return float(out) if out.ndim == 0 else out

    def density(self, t):
        """Finite-difference density on the table (for diagnostics)."""
        t = np.asarray(t, dtype=float)
        e = 1.0 - self.gamma
        dF = np.gradient(self.values, self.s)
        return np.interp(t ** e, self.s, dF) * e * t ** (e - 1.0)


@functools.lru_cache(maxsize=16)
def lsv_invariant_cdf(gamma, nodes=2 ** 14, tol=1e-11, max_iter=200_000):
    """CDF of the invariant law by fixed-point iteration of the CDF transfer.

    ``F(t) = nu(T^{-1}[0, t]) = F(g(t)) + F((1 + t)/2) - F(1/2)`` with ``g``
    the inverse of the left branch.  The iteration starts from
    ``t^(1-gamma)``, the shape forced by the density bound near 0, and stops
    at sup-norm change ``tol``.
    """
    _check_gamma(gamma)
    e = 1.0 - gamma
    s = np.linspace(0.0, 1.0, nodes + 1)
    t = s ** (1.0 / e)
    s_left = _left_branch_inverse(t, gamma) ** e
    s_right = ((1.0 + t) / 2.0) ** e
    s_half = 0.5 ** e
    F = s.copy()
    resid = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        F_new = np.interp(s_left, s, F) + np.interp(s_right, s, F) - np.interp(s_half, s, F)
        F_new[0], F_new[-1] = 0.0, 1.0
        resid = float(np.abs(F_new - F).max())
        F = F_new
        if resid < tol:
            break
    F = np.maximum.accumulate(np.clip(F, 0.0, 1.0))
    return InvariantCDF(gamma, s, F, it, resid)


# --- observables -----------------------------------------------------------

def _clipped_power(d, alpha):
    # d^(-alpha) with d floored at CLIP_FLOOR; results beyond the float range
    # are capped at the largest double and counted as clips too
    with np.errstate(over="ignore"):
        v = np.maximum(d, CLIP_FLOOR) ** (-alpha)
    big = np.isinf(v)
    return np.where(big, _FMAX, v), int(((d < CLIP_FLOOR) | big).sum())


_FMAX = np.finfo(float).max


@register("identity")
@dataclass(frozen=True)
class Identity:
    increasing = True

    def __call__(self, x):
        return np.asarray(x, dtype=float), 0

    def inverse(self, t):
        return np.asarray(t, dtype=float)


@register("inv_pow")
@dataclass(frozen=True)
class InvPow:
    """``x -> x^(-alpha)``, clipped below at ``CLIP_FLOOR``."""

    alpha: float = 1.0
    increasing = False

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")

    def __call__(self, x):
        return _clipped_power(np.asarray(x, dtype=float), self.alpha)

    def inverse(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(t > 0, t ** (-1.0 / self.alpha), np.inf)


@register("inv_pow_right")
@dataclass(frozen=True)
class InvPowRight:
    """``x -> (1 - x)^(-alpha)``, with ``1 - x`` clipped at ``CLIP_FLOOR``."""

    alpha: float = 1.0
    increasing = True

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")

    def __call__(self, x):
        return _clipped_power(1.0 - np.asarray(x, dtype=float), self.alpha)

    def inverse(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(t > 0, 1.0 - t ** (-1.0 / self.alpha), -np.inf)


@register("monotone_table")
@dataclass(frozen=True)
class MonotoneTable:
    """Strictly monotone piecewise-linear map through ``(x[i], y[i])``.

    Constant beyond the table ends.
    """

    x: tuple = (0.0, 1.0)
    y: tuple = (0.0, 1.0)

    def __post_init__(self):
        x, y = np.asarray(self.x, float), np.asarray(self.y, float)
        if x.ndim != 1 or x.shape != y.shape or x.size < 2 or np.any(np.diff(x) <= 0):
            raise ValueError("MonotoneTable needs >= 2 increasing x nodes")
        dy = np.diff(y)
        if not (np.all(dy > 0) or np.all(dy < 0)):
            raise ValueError("MonotoneTable values must be strictly monotone")

    @property
    def increasing(self):
        return self.y[-1] > self.y[0]

    def __call__(self, v):
        return np.interp(np.asarray(v, dtype=float), self.x, self.y), 0

    def inverse(self, t):
        x, y = np.asarray(self.x, float), np.asarray(self.y, float)
        if not self.increasing:
            x, y = x[::-1], y[::-1]
        t = np.asarray(t, dtype=float)
        out = np.interp(t, y, x)
        return np.where(t < y[0], -np.inf, np.where(t >= y[-1], np.inf, out))


# --- process specs ---------------------------------------------------------

class ProcessSpec:
    """Recipe for a stationary real sequence."""

    is_markov = True

    def n_uniforms(self, n):
        raise NotImplementedError

    def _from_uniforms(self, u, n):
        """Map a (R, n_uniforms) array to (R, n) paths and a clip count."""
        raise NotImplementedError

    def marginal_cdf(self, t):
        raise NotImplementedError


@register()
@dataclass(frozen=True)
class IID(ProcessSpec):
    dist: DistributionSpec = Uniform01()

    def n_uniforms(self, n):
        return n

    def _from_uniforms(self, u, n):
        return self.dist.sample(u), 0

    def marginal_cdf(self, t):
        return self.dist.cdf(t)

    def lagged_pairs(self, ks, size, rng):
        y0 = self.dist.sample(rng.random(size))
        yk = self.dist.sample(rng.random((len(ks), size)))
        return np.broadcast_to(y0, yk.shape), yk


@register("Markov")
@dataclass(frozen=True)
class FiniteStateMarkov(ProcessSpec):
    """Chain on sorted real ``states`` with row-stochastic ``matrix``."""

    states: tuple = (0.0, 1.0)
    matrix: tuple = ((1.0, 0.0), (0.0, 1.0))
    stationary: tuple = None

    def __post_init__(self):
        s = np.asarray(self.states, dtype=float)
        P = np.asarray(self.matrix, dtype=float)
        if s.ndim != 1 or np.any(np.diff(s) <= 0):
            raise ValueError("states must be strictly increasing reals")
        if P.shape != (s.size, s.size):
            raise ValueError(f"transition matrix must be {s.size}x{s.size}")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("transition matrix rows must be nonnegative and sum to 1")
        if self.stationary is None:
            A = np.vstack([P.T - np.eye(s.size), np.ones(s.size)])
            b = np.zeros(s.size + 1)
            b[-1] = 1.0
            if np.linalg.matrix_rank(A) < s.size:
                raise ValueError("stationary vector is not unique; pass it explicitly")
            pi = np.linalg.lstsq(A, b, rcond=None)[0]
            pi = np.clip(pi, 0.0, None)
            pi = pi / pi.sum()
            object.__setattr__(self, "stationary", tuple(pi.tolist()))
        pi = np.asarray(self.stationary, dtype=float)
        if pi.shape != s.shape or np.any(pi < 0) or abs(pi.sum() - 1) > 1e-10:
            raise ValueError("stationary vector must be a probability vector")
        if np.abs(pi @ P - pi).max() > 1e-10:
            raise ValueError("stationary vector is not a left fixed point of the matrix")

    @property
    def P(self):
        return np.asarray(self.matrix, dtype=float)

    @property
    def pi(self):
        return np.asarray(self.stationary, dtype=float)

    @property
    def values(self):
        return np.asarray(self.states, dtype=float)

    def n_uniforms(self, n):
        return n

    def _idx_paths(self, u):
        cum = np.cumsum(self.P, axis=1)
        cum[:, -1] = 1.0
        cpi = np.cumsum(self.pi)
        cpi[-1] = 1.0
        idx = np.empty(u.shape, dtype=np.intp)
        idx[:, 0] = np.searchsorted(cpi, u[:, 0], side="right")
        for k in range(1, u.shape[1]):
            idx[:, k] = (u[:, k, None] >= cum[idx[:, k - 1]]).sum(axis=1)
        return idx

    def _from_uniforms(self, u, n):
        return self.values[self._idx_paths(u)], 0

    def marginal_cdf(self, t):
        t = np.asarray(t, dtype=float)
        return (self.values <= t[..., None]) @ self.pi

    def lagged_pairs(self, ks, size, rng):
        ks = list(ks)
        u = rng.random((size, max(ks) + 1))
        idx = self._idx_paths(u)
        v = self.values
        y0 = v[idx[:, 0]]
        yk = np.stack([v[idx[:, k]] for k in ks])
        return np.broadcast_to(y0, yk.shape), yk


def _lsv_orbits(u, n, gamma, burn_in):
    z = _burn(u[:, 0], gamma, burn_in)
    out = np.empty((u.shape[0], n))
    for k in range(n):
        z = _lsv_step(z, gamma)
        out[:, k] = z
    return out


@register()
@dataclass(frozen=True)
class LSVOrbit(ProcessSpec):
    """Forward orbit ``T(z), ..., T^n(z)`` from an approximately stationary ``z``."""

    gamma: float = 0.25
    burn_in: int = DEFAULT_BURN_IN
    is_markov = False

    def __post_init__(self):
        _check_gamma(self.gamma)

    def n_uniforms(self, n):
        return 1

    def _from_uniforms(self, u, n):
        return _lsv_orbits(u, n, self.gamma, self.burn_in), 0

    def marginal_cdf(self, t):
        return lsv_invariant_cdf(self.gamma)(t)


@register()
@dataclass(frozen=True)
class LSVDual(ProcessSpec):
    """Reversed orbit: ``Y_k = T^(n+1-k)(z)``, the Perron-Frobenius chain."""

    gamma: float = 0.25
    burn_in: int = DEFAULT_BURN_IN

    def __post_init__(self):
        _check_gamma(self.gamma)

    def n_uniforms(self, n):
        return 1

    def _from_uniforms(self, u, n):
        return _lsv_orbits(u, n, self.gamma, self.burn_in)[:, ::-1], 0

    def marginal_cdf(self, t):
        return lsv_invariant_cdf(self.gamma)(t)

    def lagged_pairs(self, ks, size, rng):
        # (Y_0, Y_k) has the law of (T^k z, z) for stationary z
        z = sample_invariant(self.gamma, rng, self.burn_in, size)
        ks = list(ks)
        y0 = np.empty((len(ks), size))
        x = z.copy()
        for step in range(max(ks) + 1):
            for i, k in enumerate(ks):
                if k == step:
                    y0[i] = x
            x = _lsv_step(x, self.gamma)
        return y0, np.broadcast_to(z, y0.shape)


@register()
@dataclass(frozen=True)
class Composed(ProcessSpec):
    """Pointwise image ``phi(Y_i)`` of a base process."""

    base: ProcessSpec = IID()
    observable: object = Identity()

    @property
    def is_markov(self):
        return self.base.is_markov

    def n_uniforms(self, n):
        return self.base.n_uniforms(n)

    def _from_uniforms(self, u, n):
        y, c0 = self.base._from_uniforms(u, n)
        v, c1 = self.observable(y)
        return v, c0 + c1

    def marginal_cdf(self, t):
        t = np.asarray(t, dtype=float)
        phi = self.observable
        if isinstance(self.base, FiniteStateMarkov):
            img, _ = phi(self.base.values)
            return (img <= t[..., None]) @ self.base.pi
        s = phi.inverse(t)
        F = self.base.marginal_cdf(np.clip(s, -1e308, 1e308))
        if phi.increasing:
            return np.where(np.isposinf(s), 1.0, np.where(np.isneginf(s), 0.0, F))
        return np.where(np.isposinf(s), 0.0, np.where(np.isneginf(s), 1.0, 1.0 - F))

    def lagged_pairs(self, ks, size, rng):
        y0, yk = self.base.lagged_pairs(ks, size, rng)
        return self.observable(y0)[0], self.observable(yk)[0]


@dataclass
class PathSample:
    values: np.ndarray
    spec_hash: str
    seed: object = None
    replicate: object = None
    clipped: int = 0


def generate_path(spec, n, rng, seed=None, replicate=None):
    """One stationary path of length ``n`` drawn from ``rng``."""
    if n < 1:
        raise ValueError("path length must be >= 1")
    u = rng.random((1, spec.n_uniforms(n)))
    vals, clipped = spec._from_uniforms(u, n)
    return PathSample(np.ascontiguousarray(vals[0]), spec_hash(spec), seed, replicate, clipped)


def generate_paths(spec, n, seed, replicates, key=(), start=0):
    """Rows ``start .. start+replicates-1`` of the keyed path family.

    Row ``r`` equals ``generate_path(spec, n, rng_stream(seed, *key, r))``.
    Returns the (replicates, n) array and the total clip count.
    """
    m = spec.n_uniforms(n)
    u = np.empty((replicates, m))
    for i in range(replicates):
        u[i] = rng_stream(seed, *key, start + i).random((1, m))[0]
    vals, clipped = spec._from_uniforms(u, n)
    return np.ascontiguousarray(vals), clipped


def apply_observable(path, observable):
    """Pointwise image of a path; clip events are added to its provenance."""
    vals, clipped = observable(path.values)
    return PathSample(vals, path.spec_hash, path.seed, path.replicate, path.clipped + clipped)
