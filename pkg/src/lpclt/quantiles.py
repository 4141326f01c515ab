r"""Upper-tail quantile machinery for nonnegative laws.

For a nonnegative random variable :math:`X` with survival function
:math:`S(t) = P(X > t)`:

* ``Q(u) = inf{t >= 0 : S(t) <= u}`` for ``u`` in ``(0, 1]``,
* the integrated quantile :math:`x \mapsto \int_0^x Q(u)^k du`,
* ``G``, the generalized inverse of :math:`x \mapsto \int_0^x Q(u) du`,
* ``H_{X,Y}``, the generalized inverse of :math:`x \mapsto E(X 1_{Y>x})`.

``Q(U)`` has the law of ``X`` when ``U`` is uniform, which is how
:meth:`DistributionSpec.sample` draws.
"""
import csv
import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .records import register

__all__ = [
    "DistributionSpec", "Uniform01", "ParetoTail", "PointMass", "Discrete",
    "Empirical", "TableSurvival", "upper_tail_quantile", "integrated_quantile",
    "g_inverse", "h_function",
]

# Gauss-Legendre rule used for the piecewise-linear survival tables
_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)


def _check_u(u):
    u = np.asarray(u, dtype=float)
    if np.any(~(u > 0)) or np.any(u > 1):
        raise ValueError("quantile level must lie in (0, 1]")
    return u


def _check_x(x):
    x = np.asarray(x, dtype=float)
    if np.any(~(x >= 0)) or np.any(x > 1):
        raise ValueError("integration bound must lie in [0, 1]")
    return x


def _scalar(a):
    return float(a) if np.ndim(a) == 0 else a


class DistributionSpec:
    """Law of a nonnegative scalar, addressed through Q and its integrals.

    Subclasses provide ``survival``, ``_quantile``, ``_int_quantile`` and
    ``upper`` (supremum of the support, possibly infinite); ``_ginv`` has a
    root-finding default.
    """

    upper = math.inf

    def survival(self, t):
        raise NotImplementedError

    def cdf(self, t):
        return 1.0 - self.survival(t)

    def quantile(self, u):
        return _scalar(self._quantile(_check_u(u)))

    def int_quantile(self, x, power=1.0):
        r"""``\int_0^x Q(u)^power du``; may be ``inf`` for heavy tails."""
        x = _check_x(x)
        out = np.where(x > 0, self._int_quantile(x, float(power)), 0.0)
        return _scalar(out)

    @property
    def mean(self):
        return float(self.int_quantile(1.0))

    def moment(self, r):
        return float(self.int_quantile(1.0, r))

    @property
    def p_positive(self):
        return float(self.survival(0.0))

    def ginv(self, y):
        y = float(y)
        m = self.mean
        if y < 0:
            raise ValueError("G is defined on [0, E|X|]")
        if y > m * (1 + 1e-12) + 1e-300:
            raise ValueError(f"y={y!r} exceeds E|X|={m!r}; clamp before calling G")
        if y <= 0:
            return 0.0
        return self._ginv(min(y, m))

    def _ginv(self, y):
        top = self.p_positive
        f = lambda x: self.int_quantile(x) - y
        if f(top) <= 0:
            return top
        return optimize.brentq(f, 0.0, top, xtol=1e-15, rtol=4 * np.finfo(float).eps)

    def sample(self, uniforms):
        """Map uniforms on [0, 1) to draws of the law."""
        return self._quantile(1.0 - np.asarray(uniforms, dtype=float))


@register()
@dataclass(frozen=True)
class Uniform01(DistributionSpec):
    upper = 1.0

    def survival(self, t):
        return _scalar(np.clip(1.0 - np.asarray(t, dtype=float), 0.0, 1.0))

    def _quantile(self, u):
        return 1.0 - u

    def _int_quantile(self, x, k):
        return (1.0 - (1.0 - x) ** (k + 1)) / (k + 1)

    def _ginv(self, y):
        return 1.0 - math.sqrt(max(0.0, 1.0 - 2.0 * y))


@register("Pareto")
@dataclass(frozen=True)
class ParetoTail(DistributionSpec):
    """Survival ``min(1, (c/t)^r)``, so ``Q(u) = c u^(-1/r)``."""

    c: float = 1.0
    r: float = 2.0

    def __post_init__(self):
        if not (self.c > 0 and self.r > 0):
            raise ValueError("ParetoTail needs c > 0 and r > 0")

    def survival(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            s = np.where(t > self.c, (self.c / np.maximum(t, self.c)) ** self.r, 1.0)
        return _scalar(s)

    def _quantile(self, u):
        return self.c * u ** (-1.0 / self.r)

    def _int_quantile(self, x, k):
        if k >= self.r:
            return np.full_like(x, np.inf)
        e = 1.0 - k / self.r
        return self.c ** k * x ** e / e

    def _ginv(self, y):
        if self.r <= 1:
            return 0.0
        e = 1.0 - 1.0 / self.r
        return min(1.0, (y * e / self.c) ** (1.0 / e))


@register()
@dataclass(frozen=True)
class PointMass(DistributionSpec):
    c: float = 0.0

    def __post_init__(self):
        if not self.c >= 0:
            raise ValueError("PointMass value must be >= 0")

    @property
    def upper(self):
        return float(self.c)

    def survival(self, t):
        return _scalar(np.where(np.asarray(t, dtype=float) < self.c, 1.0, 0.0))

    def _quantile(self, u):
        return np.where(u < 1.0, float(self.c), 0.0)

    def _int_quantile(self, x, k):
        return self.c ** k * x

    def _ginv(self, y):
        return y / self.c if self.c > 0 else 0.0


@register()
@dataclass(frozen=True)
class Discrete(DistributionSpec):
    """Finitely supported law: ``values`` with probabilities ``probs``."""

    values: tuple = (0.0,)
    probs: tuple = (1.0,)
    _a: np.ndarray = field(init=False, repr=False, compare=False)
    _cum: np.ndarray = field(init=False, repr=False, compare=False)
    _icum: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        w = np.asarray(self.probs, dtype=float)
        if v.shape != w.shape or v.ndim != 1 or v.size == 0:
            raise ValueError("values and probs must be equal-length 1-d sequences")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("values must be finite and >= 0")
        if np.any(w < 0) or not w.sum() > 0:
            raise ValueError("probs must be nonnegative with positive sum")
        w = w / w.sum()
        # merge ties, order by decreasing value
        a, inv = np.unique(v, return_inverse=True)
        q = np.bincount(inv, weights=w, minlength=a.size)
        a, q = a[::-1], q[::-1]
        cum = np.concatenate([[0.0], np.cumsum(q)])
        cum[-1] = 1.0
        icum = np.concatenate([[0.0], np.cumsum(a * np.diff(cum))])
        object.__setattr__(self, "_a", a)
        object.__setattr__(self, "_cum", cum)
        object.__setattr__(self, "_icum", icum)

    @property
    def upper(self):
        return float(self._a[0])

    def survival(self, t):
        t = np.asarray(t, dtype=float)
        # mass strictly above t
        k = np.searchsorted(-self._a, -t, side="left")
        return _scalar(self._cum[k])

    def _quantile(self, u):
        j = np.searchsorted(self._cum[1:], u, side="right")
        a = np.append(self._a, 0.0)
        return np.maximum(a[j], 0.0)

    def _int_quantile(self, x, k):
        x = np.asarray(x, dtype=float)
        lo, hi = self._cum[:-1], self._cum[1:]
        lengths = np.clip(np.minimum(hi, x[..., None]) - lo, 0.0, None)
        with np.errstate(invalid="ignore"):
            ak = np.where(self._a > 0, self._a ** k, 0.0)
        return (lengths * ak).sum(axis=-1)

    def _ginv(self, y):
        i = int(np.searchsorted(self._icum, y, side="left"))
        i = min(max(i, 1), self._a.size)
        return float(self._cum[i - 1] + (y - self._icum[i - 1]) / self._a[i - 1])


@register()
@dataclass(frozen=True)
class Empirical(DistributionSpec):
    """Equal-weight law of a nonnegative sample (jumps of 1/n)."""

    sample: tuple = (0.0,)
    _law: Discrete = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        s = np.asarray(self.sample, dtype=float)
        if s.ndim != 1 or s.size == 0:
            raise ValueError("Empirical needs a nonempty 1-d sample")
        if np.any(np.diff(s) < 0):
            raise ValueError("Empirical sample must be sorted nondecreasing")
        object.__setattr__(self, "_law", Discrete(tuple(s), tuple(np.ones_like(s))))

    @classmethod
    def from_values(cls, values):
        return cls(tuple(np.sort(np.asarray(values, dtype=float)).tolist()))

    @classmethod
    def from_csv(cls, path):
        """Single-column CSV; a non-numeric first row is taken as a header."""
        vals = []
        with open(path, newline="") as fh:
            for i, row in enumerate(csv.reader(fh)):
                if not row or row[0].startswith("#"):
                    continue
                try:
                    vals.append(float(row[0]))
                except ValueError:
                    if i == 0 or not vals:
                        continue
                    raise ValueError(f"{path}: line {i + 1}: not a number: {row[0]!r}")
        return cls.from_values(vals)

    @property
    def upper(self):
        return self._law.upper

    def survival(self, t):
        return self._law.survival(t)

    def _quantile(self, u):
        return self._law._quantile(u)

    def _int_quantile(self, x, k):
        return self._law._int_quantile(x, k)

    def _ginv(self, y):
        return self._law._ginv(y)


@register()
@dataclass(frozen=True)
class TableSurvival(DistributionSpec):
    """Survival tabulated at ``t`` (increasing, >= 0), linear in between.

    ``S = 1`` below ``t[0]`` and the last survival value must be 0.
    """

    t: tuple = (0.0, 1.0)
    s: tuple = (1.0, 0.0)

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        s = np.asarray(self.s, dtype=float)
        if t.ndim != 1 or t.shape != s.shape or t.size < 2:
            raise ValueError("TableSurvival needs >= 2 grid nodes")
        if t[0] < 0 or np.any(np.diff(t) <= 0):
            raise ValueError("grid must be increasing and nonnegative")
        if np.any(np.diff(s) > 0) or s[0] > 1 or s[-1] != 0:
            raise ValueError("survival must be nonincreasing from <= 1 down to 0")

    @property
    def upper(self):
        return float(self.t[-1])

    def survival(self, x):
        t, s = np.asarray(self.t), np.asarray(self.s)
        x = np.asarray(x, dtype=float)
        return _scalar(np.where(x < t[0], 1.0, np.interp(x, t, s)))

    def _quantile(self, u):
        t, s = np.asarray(self.t), np.asarray(self.s)
        j = np.clip(np.searchsorted(-s, -u, side="left"), 1, s.size - 1)
        ds = s[j - 1] - s[j]
        with np.errstate(invalid="ignore", divide="ignore"):
            frac = np.where(ds > 0, (s[j - 1] - u) / ds, 0.0)
        q = t[j - 1] + frac * (t[j] - t[j - 1])
        q = np.where(u >= s[0], t[0], q)
        return np.where(u >= 1.0, 0.0, q)

    def _int_one(self, x, k):
        # layer cake: int_0^x Q^k = int_0^inf k t^(k-1) min(S(t), x) dt
        t, s = np.asarray(self.t), np.asarray(self.s)
        total = x * t[0] ** k
        for i in range(t.size - 1):
            a, b, sa, sb = t[i], t[i + 1], s[i], s[i + 1]
            cuts = [a, b]
            if sa > x > sb:
                cuts.insert(1, a + (sa - x) / (sa - sb) * (b - a))
            for lo, hi in zip(cuts[:-1], cuts[1:]):
                tt = 0.5 * (hi - lo) * _GL_X + 0.5 * (hi + lo)
                st = np.minimum(np.interp(tt, t, s), x)
                total += 0.5 * (hi - lo) * np.sum(_GL_W * k * tt ** (k - 1) * st)
        return total

    def _int_quantile(self, x, k):
        return np.vectorize(lambda v: self._int_one(v, k), otypes=[float])(x)


def upper_tail_quantile(dist, u):
    """``inf{t >= 0 : P(|X| > t) <= u}`` for ``u`` in ``(0, 1]``."""
    return dist.quantile(u)


def integrated_quantile(dist, x, power=1.0):
    r"""``\int_0^x Q(u)^power du`` for ``x`` in ``[0, 1]``."""
    return dist.int_quantile(x, power)


def g_inverse(dist, y):
    """Smallest ``x`` with ``int_0^x Q >= y``; ``y`` must not exceed ``E|X|``."""
    return dist.ginv(y)


def h_function(dist_x, dist_y, coupling, u):
    """Generalized inverse of ``x -> E(|X| 1{|Y| > x})``.

    Parameters
    ----------
    dist_x, dist_y : DistributionSpec
        Laws of ``|X|`` and ``|Y|``.
    coupling : {"identical", "independent"}
        ``"identical"`` means ``X = Y`` almost surely (``dist_y`` is then
        ignored); ``"independent"`` takes ``X`` and ``Y`` independent.
    u : float
        Level, ``u >= 0``.

    Returns
    -------
    float
        ``inf{x >= 0 : E(|X| 1{|Y| > x}) <= u}``.
    """
    if not u >= 0:
        raise ValueError("H is defined for u >= 0")
    if coupling == "identical":
        phi = lambda x: dist_x.int_quantile(min(1.0, dist_x.survival(x)))
    elif coupling == "independent":
        ex = dist_x.mean
        phi = lambda x: ex * dist_y.survival(x)
    else:
        raise ValueError(f"unknown coupling {coupling!r}")
    if phi(0.0) <= u:
        return 0.0
    hi = 1.0
    while phi(hi) > u:
        hi *= 2.0
        if hi > 1e300:
            raise OverflowError("E(|X| 1{|Y|>x}) does not drop below u")
    lo = 0.0
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if phi(mid) <= u:
            hi = mid
        else:
            lo = mid
    return hi
