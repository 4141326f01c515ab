"""Signed cumulative mass ``F_mu`` and the envelope of the ball W_{1,q}(mu).

``F_mu(x) = mu(]0, x])`` for ``x >= 0`` and ``-mu([x, 0[)`` for ``x <= 0``.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from .records import register

__all__ = [
    "MeasureSpec", "LebesgueInterval", "LebesgueLine", "DensityWeighted",
    "Atomic", "EnvelopeWitness", "f_mu", "envelope_value",
]


class MeasureSpec:
    total_mass = math.inf
    support = (-math.inf, math.inf)

    def F(self, x):
        raise NotImplementedError

    @property
    def finite(self):
        return math.isfinite(self.total_mass)


def _scalar(a):
    return float(a) if np.ndim(a) == 0 else a


@register()
@dataclass(frozen=True)
class LebesgueInterval(MeasureSpec):
    a: float = 0.0
    b: float = 1.0

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError("LebesgueInterval needs a < b")

    @property
    def total_mass(self):
        return float(self.b - self.a)

    @property
    def support(self):
        return (float(self.a), float(self.b))

    def F(self, x):
        x = np.asarray(x, dtype=float)
        pos = np.clip(np.minimum(x, self.b) - max(0.0, self.a), 0.0, None)
        neg = np.clip(min(0.0, self.b) - np.maximum(x, self.a), 0.0, None)
        return _scalar(np.where(x >= 0, pos, -neg))


@register()
@dataclass(frozen=True)
class LebesgueLine(MeasureSpec):
    def F(self, x):
        return _scalar(np.asarray(x, dtype=float) + 0.0)


@register()
@dataclass(frozen=True)
class DensityWeighted(MeasureSpec):
    """Density tabulated at ``nodes``, linear in between, zero outside."""

    nodes: tuple = (0.0, 1.0)
    density: tuple = (1.0, 1.0)
    _cum: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        t = np.asarray(self.nodes, dtype=float)
        d = np.asarray(self.density, dtype=float)
        if t.ndim != 1 or t.shape != d.shape or t.size < 2:
            raise ValueError("DensityWeighted needs >= 2 nodes")
        if np.any(np.diff(t) <= 0) or np.any(d < 0):
            raise ValueError("nodes must increase and density must be >= 0")
        # trapezoid masses; exact for the linear interpolant
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (d[1:] + d[:-1]) * np.diff(t))])
        object.__setattr__(self, "_cum", cum)

    @property
    def total_mass(self):
        return float(self._cum[-1])

    @property
    def support(self):
        return (float(self.nodes[0]), float(self.nodes[-1]))

    def cumulative(self, x):
        """Mass of ``]-inf, x]``."""
        t, d = np.asarray(self.nodes), np.asarray(self.density)
        x = np.clip(np.asarray(x, dtype=float), t[0], t[-1])
        i = np.clip(np.searchsorted(t, x, side="right") - 1, 0, t.size - 2)
        h = t[i + 1] - t[i]
        s = x - t[i]
        return self._cum[i] + d[i] * s + (d[i + 1] - d[i]) * s * s / (2 * h)

    def F(self, x):
        return _scalar(self.cumulative(x) - self.cumulative(0.0))


@register()
@dataclass(frozen=True)
class Atomic(MeasureSpec):
    """Finite sum of point masses, ``atoms = [(location, mass), ...]``."""

    atoms: tuple = ((0.0, 1.0),)

    def __post_init__(self):
        a = np.asarray(self.atoms, dtype=float).reshape(-1, 2)
        if a.shape[0] == 0 or np.any(a[:, 1] <= 0) or not np.all(np.isfinite(a)):
            raise ValueError("atoms need finite locations and masses > 0")

    @property
    def locations(self):
        return np.asarray(self.atoms, dtype=float).reshape(-1, 2)[:, 0]

    @property
    def masses(self):
        return np.asarray(self.atoms, dtype=float).reshape(-1, 2)[:, 1]

    @property
    def total_mass(self):
        return float(self.masses.sum())

    @property
    def support(self):
        loc = self.locations
        return (float(loc.min()), float(loc.max()))

    def F(self, x):
        x = np.asarray(x, dtype=float)[..., None]
        loc, m = self.locations, self.masses
        pos = ((loc > 0) & (loc <= x)) @ m
        neg = ((loc < 0) & (loc >= x)) @ m
        return _scalar(np.where(x[..., 0] >= 0, pos, -neg))


def f_mu(measure, x):
    """Signed cumulative mass of ``measure`` at ``x``.

    Raises
    ------
    OverflowError
        If the mass between 0 and ``x`` is infinite.
    """
    x = np.asarray(x, dtype=float)
    lo, hi = measure.support
    if np.any(np.isinf(x) & (((x > 0) & (hi == math.inf)) | ((x < 0) & (lo == -math.inf)))):
        raise OverflowError(
            f"{type(measure).__name__} has infinite mass between 0 and x={x!r}"
        )
    return measure.F(x)


@dataclass(frozen=True)
class EnvelopeWitness:
    """The function ``g_x`` reaching the envelope at ``x``.

    ``g_x = sign * scale`` on ``support`` and zero elsewhere, with
    ``scale = |F_mu(x)|^(-1/q)``; ``sign = 0`` when ``F_mu(x) = 0``.
    """

    support: tuple
    sign: int
    scale: float
    q: float

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        lo, hi = self.support
        return np.where((t >= lo) & (t <= hi), self.sign * self.scale, 0.0)


def envelope_value(measure, p, x):
    """``|F_mu(x)|^(1/p)`` (smallest envelope of W_{1,q}(mu)) and its witness."""
    if not p >= 2:
        raise ValueError("p must be >= 2")
    q = p / (p - 1.0)
    fx = float(f_mu(measure, float(x)))
    if fx == 0.0:
        return 0.0, EnvelopeWitness((0.0, 0.0), 0, 0.0, q)
    if x > 0:
        w = EnvelopeWitness((0.0, float(x)), 1, abs(fx) ** (-1.0 / q), q)
    else:
        w = EnvelopeWitness((float(x), 0.0), -1, abs(fx) ** (-1.0 / q), q)
    return abs(fx) ** (1.0 / p), w
