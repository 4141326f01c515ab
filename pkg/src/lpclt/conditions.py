r"""Quantile-integral dependence conditions and their verdicts.

A series is judged from finitely many terms: increments over the tail
window ``[N_max/4, N_max]`` are fitted by a log-log line in ``n + 1``.
A slope below ``-1.05`` reads as convergent, above ``-0.95`` as divergent,
and anything in between is inconclusive.  Increments that vanish on the
whole tail window count as a finite sum.  ``strict=True`` drops the rule
and reports partial sums only.
"""
import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate

from .measures import f_mu
from .mixing import MixingProfile
from .records import dumps, register

__all__ = [
    "CONVERGES", "DIVERGES", "INCONCLUSIVE", "ConditionReport",
    "verdict_from_terms", "series_quantile_integral", "gamma_condition",
    "Moment", "Tail", "LogMoment", "rate_condition_check", "iid_reduction",
    "ReductionResult", "Threshold", "lsv_observable_threshold",
    "optimality_integral",
]

CONVERGES, DIVERGES, INCONCLUSIVE = "converges", "diverges", "inconclusive"
DEAD_ZONE = (-1.05, -0.95)


@dataclass
class ConditionReport:
    verdict: str
    partial_sums: list
    slope: float = None
    inputs: dict = field(default_factory=dict)
    reason: str = ""

    def to_dict(self):
        d = asdict(self)
        if d["slope"] is not None and not math.isfinite(d["slope"]):
            d["slope"] = None
        d["partial_sums"] = [[int(n), _json_num(s)] for n, s in self.partial_sums]
        return d

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def _json_num(x):
    x = float(x)
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")


def _schedule(start, n_max):
    pts, n = [], 1
    while n < n_max:
        if n >= start:
            pts.append(n)
        n *= 2
    pts.append(n_max)
    return sorted(set(pts))


def verdict_from_terms(terms, start=0, strict=False, inputs=None, window=0.25):
    """Apply the slope rule to nonnegative terms ``a_start .. a_N``.

    ``terms[i]`` is the term of index ``start + i``.
    """
    a = np.asarray(terms, dtype=float)
    if a.ndim != 1 or a.size == 0:
        raise ValueError("need at least one term")
    if np.any(a < 0) or np.any(np.isnan(a)):
        raise ValueError("terms must be nonnegative")
    n = start + np.arange(a.size)
    n_max = int(n[-1])
    S = np.cumsum(a)
    sched = _schedule(start, n_max) if n_max >= 1 else [n_max]
    partial = [[int(N), float(S[N - start])] for N in sched]
    inputs = dict(inputs or {})
    if np.isinf(a).any():
        first = int(n[np.isinf(a).argmax()])
        return ConditionReport(DIVERGES, partial, None, inputs,
                               f"term {first} is infinite")
    if strict:
        return ConditionReport(INCONCLUSIVE, partial, None, inputs,
                               "strict mode: partial sums only")
    lo = max(start, int(math.floor(window * n_max)))
    tail = n >= lo
    at, nt = a[tail], n[tail]
    if not np.any(at > 0):
        return ConditionReport(CONVERGES, partial, None, inputs,
                               f"terms vanish on [{lo}, {n_max}]: finite sum")
    pos = at > 0
    if pos.sum() < 2:
        return ConditionReport(INCONCLUSIVE, partial, None, inputs,
                               "fewer than two positive terms in the tail window")
    slope = float(np.polyfit(np.log(nt[pos] + 1.0), np.log(at[pos]), 1)[0])
    if slope < DEAD_ZONE[0]:
        v, why = CONVERGES, f"tail slope {slope:.4f} < {DEAD_ZONE[0]}"
    elif slope > DEAD_ZONE[1]:
        v, why = DIVERGES, f"tail slope {slope:.4f} > {DEAD_ZONE[1]}"
    else:
        v, why = INCONCLUSIVE, f"tail slope {slope:.4f} in the dead zone"
    return ConditionReport(v, partial, slope, inputs, why)


def _profile_values(profile, n_max):
    if isinstance(profile, MixingProfile):
        v = profile.values
        if n_max is None:
            n_max = v.size - 1
        if n_max > v.size - 1:
            raise ValueError(f"profile has {v.size} values, N_max={n_max} requested")
        return v[: n_max + 1], n_max, dict(profile.provenance)
    if callable(profile):
        n_max = 1024 if n_max is None else n_max
        v = np.asarray(profile(np.arange(n_max + 1)), dtype=float)
        return v, n_max, {"family": dumps(profile)}
    v = np.asarray(profile, dtype=float)
    n_max = v.size - 1 if n_max is None else n_max
    return v[: n_max + 1], n_max, {"kind": "values"}


def _dist_text(dist):
    try:
        return dumps(dist)
    except Exception:
        return type(dist).__name__


def series_quantile_integral(profile, dist, N_max=None, start=0, strict=False):
    r"""Verdict on ``sum_n \int_0^{beta(n)} Q^2(u) du``.

    ``profile`` is a :class:`MixingProfile`, a rate family (callable on
    lags) or a plain sequence; ``start`` is the first summation index.
    """
    beta, n_max, prov = _profile_values(profile, N_max)
    if np.any(~((beta >= 0) & (beta <= 1))):
        raise ValueError("profile values must lie in [0, 1]")
    terms = np.asarray(dist.int_quantile(beta[start:], 2.0), dtype=float)
    return verdict_from_terms(terms, start, strict, {
        "condition": "sum int_0^beta(n) Q^2", "dist": _dist_text(dist),
        "profile": prov, "N_max": n_max, "start": start})


def gamma_condition(gammas, dist, N_max=None, start=1, strict=False):
    r"""Verdict on ``sum_n \int_0^{gamma_n} Q o G(u) du``.

    Uses ``\int_0^g Q o G = \int_0^{G(g)} Q^2``; each ``gamma_n`` is clamped
    to ``E|X|`` before ``G`` is applied.  ``gammas[i]`` is ``gamma_i``.
    """
    g = np.asarray(gammas, dtype=float)
    if np.any(~(g >= 0)):
        raise ValueError("gamma_n must be >= 0")
    n_max = g.size - 1 if N_max is None else N_max
    g = g[start: n_max + 1]
    m = dist.mean
    clamped = int(np.sum(g > m))
    x = np.array([dist.ginv(min(v, m)) for v in g])
    terms = np.asarray(dist.int_quantile(np.clip(x, 0.0, 1.0), 2.0), dtype=float)
    return verdict_from_terms(terms, start, strict, {
        "condition": "sum int_0^gamma_n Q o G", "dist": _dist_text(dist),
        "N_max": n_max, "start": start, "clamped": clamped})


# --- rate conditions ---------------------------------------------------------

@register("moment")
@dataclass(frozen=True)
class Moment:
    """``E|X|^r < inf`` and ``sum (n+1)^(2/(r-2)) beta(n) < inf``."""

    r: float = 4.0

    def __post_init__(self):
        if not self.r > 2:
            raise ValueError("moment condition needs r > 2")


@register("tail")
@dataclass(frozen=True)
class Tail:
    """``P(|X| > x) <= (c/x)^r`` and ``sum beta(n)^(1-2/r) < inf``."""

    r: float = 4.0
    c: float = 1.0

    def __post_init__(self):
        if not (self.r > 2 and self.c > 0):
            raise ValueError("tail condition needs r > 2 and c > 0")


@register("logmoment")
@dataclass(frozen=True)
class LogMoment:
    """``E[X^2 log(1+X)^a] < inf`` and ``beta(n) = O(exp(-tau n^(1/a)))``."""

    a: float = 1.0
    tau: float = 1.0

    def __post_init__(self):
        if not (self.a > 0 and self.tau > 0):
            raise ValueError("log-moment condition needs a > 0 and tau > 0")


def _tail_bound_holds(dist, r, c):
    # sup_x x^r P(X > x) <= c^r, checked on a log grid plus the support's top
    xs = np.concatenate([np.logspace(-8, 12, 4001), [dist.upper]])
    xs = xs[np.isfinite(xs) & (xs > 0)]
    s = np.asarray(dist.survival(xs), dtype=float)
    with np.errstate(over="ignore"):
        lhs = s * xs ** r
    worst = float(np.max(lhs))
    return worst <= c ** r * (1 + 1e-9), worst


def _logmoment(dist, a):
    f = lambda u: dist.quantile(u) ** 2 * math.log1p(dist.quantile(u)) ** a
    if np.isfinite(dist.upper):
        val, _ = integrate.quad(f, 0.0, 1.0, limit=500, points=None)
        return val
    # dyadic pieces near 0; a log factor cannot rescue Q^2 ~ u^(-1) or worse
    total, last = 0.0, math.inf
    for j in range(0, 1000):
        lo, hi = 2.0 ** (-j - 1), 2.0 ** (-j)
        piece, _ = integrate.quad(f, lo, hi, limit=200)
        total += piece
        if j >= 20 and piece <= 1e-13 * total:
            return total
        if j >= 60 and piece >= 0.999 * last:
            return math.inf
        last = piece
    return math.inf


def rate_condition_check(variant, dist, profile, N_max=None):
    """Moment/tail hypothesis on ``dist`` plus summability of ``profile``.

    Returns ``(holds, evidence)``; ``holds`` is True only when the
    hypothesis holds and the derived series gets a "converges" verdict.
    """
    beta, n_max, prov = _profile_values(profile, N_max)
    ev = {"variant": dumps(variant), "dist": _dist_text(dist), "profile": prov}
    if isinstance(variant, Moment):
        m = dist.moment(variant.r)
        ev["moment"] = _json_num(m)
        hyp = math.isfinite(m)
        terms = (np.arange(beta.size) + 1.0) ** (2.0 / (variant.r - 2.0)) * beta
        rep = verdict_from_terms(terms, 0, inputs={"series": "(n+1)^(2/(r-2)) beta(n)"})
        summable = rep.verdict == CONVERGES
    elif isinstance(variant, Tail):
        hyp, worst = _tail_bound_holds(dist, variant.r, variant.c)
        ev["sup_x x^r P(X>x)"] = _json_num(worst)
        terms = beta ** (1.0 - 2.0 / variant.r)
        rep = verdict_from_terms(terms, 0, inputs={"series": "beta(n)^(1-2/r)"})
        summable = rep.verdict == CONVERGES
    elif isinstance(variant, LogMoment):
        m = _logmoment(dist, variant.a)
        ev["log_moment"] = _json_num(m)
        hyp = math.isfinite(m)
        n = np.arange(beta.size, dtype=float)
        with np.errstate(divide="ignore"):
            log_ratio = np.log(beta) + variant.tau * n ** (1.0 / variant.a)
        ratio = np.exp(np.minimum(log_ratio, 700.0))
        half = beta.size // 2
        head = float(np.max(ratio[: max(half, 1)]))
        tail = float(np.max(ratio[half:]))
        ev["ratio_head"], ev["ratio_tail"] = _json_num(head), _json_num(tail)
        # O(.) read as: the normalized ratio does not grow over the second half
        summable = math.isfinite(tail) and tail <= 2.0 * head
        rep = None
    else:
        raise TypeError(f"unknown rate variant {variant!r}")
    ev["hypothesis"] = bool(hyp)
    ev["summable"] = bool(summable)
    if rep is not None:
        ev["series"] = rep.to_dict()
    return bool(hyp and summable), ev


# --- i.i.d. reduction --------------------------------------------------------

@dataclass
class ReductionResult:
    """Outcome of the i.i.d. check; truthy iff the expectation is finite."""

    finite: bool
    value: float
    truncations: list = field(default_factory=list)

    def __bool__(self):
        return self.finite


def iid_reduction(measure, law, p, tol=0.01, max_doublings=40):
    r"""Is ``E |F_mu(Y_0)|^(2/p)`` finite?

    ``law`` is a frozen ``scipy.stats`` distribution of ``Y_0``.  Finite
    ``mu`` gives a bounded integrand.  Otherwise the integral over
    ``[-L, L]`` is tracked while ``L`` doubles, and the expectation is
    declared finite once the relative change drops below ``tol``.
    """
    if not p >= 2:
        raise ValueError("p must be >= 2")
    e = 2.0 / p

    def g(y):
        return abs(float(f_mu(measure, y))) ** e

    def over(lo, hi):
        # expectation of g(Y) 1{lo < Y <= hi} in quantile coordinates
        ulo, uhi = float(law.cdf(lo)), float(law.cdf(hi))
        if uhi <= ulo:
            return 0.0
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, _ = integrate.quad(lambda u: g(law.ppf(u)), ulo, uhi, limit=400)
        return val

    if measure.finite:
        lo, hi = law.support()
        return ReductionResult(True, over(lo, hi), [])
    med = float(law.median())
    iqr = float(law.ppf(0.75) - law.ppf(0.25))
    L = max(1.0, abs(med) + 4 * iqr)
    prev = over(-L, L)
    trail = [[L, prev]]
    for _ in range(max_doublings):
        inner = prev
        prev = inner + over(-2 * L, -L) + over(L, 2 * L)
        L *= 2
        trail.append([L, prev])
        if prev == inner or abs(prev - inner) <= tol * abs(prev):
            return ReductionResult(True, prev, trail)
    return ReductionResult(False, math.inf, trail)


# --- intermittent-map observables ---------------------------------------------

class Threshold(float):
    """Critical exponent; ``admissible`` is False when no exponent works."""

    def __new__(cls, value, admissible=True, note=""):
        obj = super().__new__(cls, value)
        obj.admissible = admissible
        obj.note = note
        return obj


def lsv_observable_threshold(gamma, p, kind):
    """Largest ``alpha`` (exclusive) for which the observable keeps the CLT.

    ``inv_pow``: ``(p/2)(1 - 2 gamma)``; ``inv_pow_right``:
    ``(p/2)(1 - 2 gamma)/(1 - gamma)``.
    """
    if not p >= 2:
        raise ValueError("p must be >= 2")
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    if kind not in ("inv_pow", "inv_pow_right"):
        raise ValueError(f"unknown observable kind {kind!r}")
    if gamma >= 0.5:
        return Threshold(0.0, False, "no admissible alpha for gamma >= 1/2")
    base = 0.5 * p * (1.0 - 2.0 * gamma)
    return Threshold(base if kind == "inv_pow" else base / (1.0 - gamma))


def optimality_integral(dist, a):
    r"""``\int_0^1 u^(-1/a) Q^2(u) du`` (``inf`` when it diverges), ``a > 1``."""
    if not a > 1:
        raise ValueError("need a > 1")
    f = lambda u: u ** (-1.0 / a) * dist.quantile(u) ** 2
    total, last = 0.0, math.inf
    for j in range(0, 1000):
        lo, hi = 2.0 ** (-j - 1), 2.0 ** (-j)
        piece, _ = integrate.quad(f, lo, hi, limit=200)
        total += piece
        if j >= 20 and piece <= 1e-13 * total:
            return total
        if j >= 60 and piece >= 0.999 * last:
            return math.inf
        last = piece
    return math.inf
