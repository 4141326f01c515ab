"""Monte Carlo checks of the CLT for ``sqrt(n)(F_n - F)`` in grid L^p.

Every random quantity is drawn from a keyed stream (see :mod:`lpclt.rng`),
so results depend only on the configuration and seed, never on chunking or
on the number of worker threads.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import lp
from .measures import LebesgueInterval, MeasureSpec
from .mixing import beta_tilde_exact_markov, chain_norm_law, chain_ypmu_law, gamma_from_chain
from .processes import (Composed, FiniteStateMarkov, InvPow, InvPowRight, LSVDual,
                        ProcessSpec, generate_paths, sample_invariant)
from .records import dumps
from .rng import rng_stream

__all__ = [
    "ExperimentConfig", "ResultBundle", "run_clt_experiment",
    "compare_distributions", "ks_critical", "statistic_sample", "DiagnosticsReport",
    "martingale_diagnostics", "block_rule", "ProbeReport", "divergence_probe",
    "hill_index", "proof_bound_audit",
]

# per-chunk working memory, in float64 entries (about 32 MB)
_CHUNK_ENTRIES = 4_000_000


def ks_critical(n_a, n_b=None, level=0.01):
    """Asymptotic two-sample KS critical value (1.628 at the 1% level)."""
    n_b = n_a if n_b is None else n_b
    c = {0.05: 1.358, 0.01: 1.628, 0.001: 1.949}[level]
    return c * math.sqrt((n_a + n_b) / (n_a * n_b))


def compare_distributions(a, b):
    """Two-sample KS statistic and first-order Wasserstein distance."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be nonempty")
    ks = float(stats.ks_2samp(a, b).statistic)
    if a.size == b.size:
        w1 = float(np.mean(np.abs(np.sort(a) - np.sort(b))))
    else:
        w1 = float(stats.wasserstein_distance(a, b))
    return ks, w1


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce a CLT experiment."""

    process: ProcessSpec
    measure: MeasureSpec = field(default_factory=LebesgueInterval)
    grid_size: int = 1024
    truncation: tuple = None
    p: float = 2.0
    n_schedule: tuple = (256, 1024, 4096)
    replicates: int = 2000
    max_lag: int = 50
    cov_budget: int = 10 ** 6
    levels: tuple = (0, 1, 2, 3, 4)
    seed: int = 0
    name: str = "experiment"
    grid: object = None

    def __post_init__(self):
        ns = list(self.n_schedule)
        if not ns or any(b <= a for a, b in zip(ns, ns[1:])) or ns[0] < 1:
            raise ValueError("n schedule must be increasing positive integers")
        if self.replicates < 100:
            raise ValueError("need R >= 100 replicates")
        if not self.p >= 2:
            raise ValueError("p must be >= 2")
        self.n_schedule = tuple(int(n) for n in ns)

    def make_grid(self):
        if self.grid is not None:
            return self.grid
        return lp.GridMeasure.from_measure(self.measure, self.grid_size, self.p,
                                           self.truncation)


@dataclass
class ResultBundle:
    config: ExperimentConfig
    grid: object
    statistics: dict = field(default_factory=dict)
    limit: np.ndarray = None
    covariance: object = None
    distances: list = field(default_factory=list)
    inter_n: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    clipped: int = 0
    partial: bool = False


def _chunks(total, per):
    return [(s, min(per, total - s)) for s in range(0, total, per)]


def statistic_sample(spec, n, grid, F, seed, replicates, key=("stat",), p=None, jobs=1):
    """``replicates`` draws of ``n^(p/2) int |F_n - F|^p dmu`` on the grid.

    Returns the values and the total clip count of the observable.
    """
    per = max(1, _CHUNK_ENTRIES // max(n, grid.size))
    F = np.asarray(F, dtype=float)

    def work(chunk):
        start, r = chunk
        y, clipped = generate_paths(spec, n, seed, r, key=(*key, n), start=start)
        return lp.statistic(y, F, grid, p), clipped

    parts = _chunks(replicates, per)
    if jobs > 1 and len(parts) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(work, parts))
    else:
        results = [work(c) for c in parts]
    return np.concatenate([r[0] for r in results]), sum(r[1] for r in results)


def run_clt_experiment(config, jobs=1, on_partial=None):
    """Statistic samples per ``n``, a Gaussian-limit sample and their distances.

    ``on_partial(bundle)`` is called with the incomplete bundle (``partial``
    set) if a step fails, before the exception propagates.
    """
    grid = config.make_grid()
    bundle = ResultBundle(config, grid)
    F = np.asarray(config.process.marginal_cdf(grid.nodes), dtype=float)
    R = config.replicates
    try:
        for n in config.n_schedule:
            s, clipped = statistic_sample(config.process, n, grid, F, config.seed, R,
                                          p=config.p, jobs=jobs)
            bundle.statistics[n] = s
            bundle.clipped += clipped
        K = lp.estimate_cov_operator(config.process, grid, config.max_lag,
                                     config.cov_budget, config.seed, F)
        bundle.covariance = K
        bundle.limit = lp.sample_gaussian_limit(K, grid, config.p,
                                                rng_stream(config.seed, "limit"), R)
    except Exception:
        bundle.partial = True
        if on_partial is not None:
            on_partial(bundle)
        raise
    for n in config.n_schedule:
        ks, w1 = compare_distributions(bundle.statistics[n], bundle.limit)
        bundle.distances.append((n, ks, w1))
    ns = config.n_schedule
    for a, b in zip(ns, ns[1:]):
        ks, w1 = compare_distributions(bundle.statistics[a], bundle.statistics[b])
        bundle.inter_n.append((a, b, ks))
    crit = ks_critical(R)
    inter = [k for _, _, k in bundle.inter_n]
    bundle.summary = {
        "ks_critical_99": crit,
        "ks_to_limit_last": bundle.distances[-1][1],
        "limit_consistent": bool(bundle.distances[-1][1] <= crit),
        "inter_n_ks": inter,
        # nonincreasing within the 1% two-sample noise band
        "inter_n_nonincreasing": bool(all(b <= a + crit for a, b in zip(inter, inter[1:]))),
        "stabilizing": bool(inter[-1] <= crit) if inter else None,
        "statistic_means": {str(n): float(np.mean(v)) for n, v in bundle.statistics.items()},
        "limit_mean": float(np.mean(bundle.limit)),
        "covariance": {"max_lag": K.max_lag, "clipped_mass": K.clipped_mass,
                       "min_eigenvalue": K.min_eigenvalue, **K.plateau},
        "grid": {"size": grid.size, "mass_loss": grid.mass_loss},
        "clipped": bundle.clipped,
    }
    return bundle


# --- martingale diagnostics for finite chains -------------------------------------

def block_rule(n):
    """Number of blocks ``m_n = floor(n^(1/3))`` (at least 1)."""
    return max(1, int(math.floor(n ** (1.0 / 3.0) + 1e-9)))


@dataclass
class DiagnosticsReport:
    """Per-n block-martingale diagnostics.

    ``a``: ``E||E(S_n|F_0)|| / sqrt(n)`` (exact).  ``sigma``: for each dual
    functional, ``(E sigma_n^2, rms distance to the lag-sum value)`` and the
    lag-sum value itself.  ``lindeberg[eps]``, ``tail[level]`` and ``ui[c]``
    are Monte Carlo averages (``tail`` is exact when ``p = 2``).
    """

    n: list
    blocks: list
    block_length: list
    a: list
    sigma: dict
    sigma_limit: dict
    lindeberg: dict
    tail: dict
    ui: dict
    methods: dict = field(default_factory=dict)

    def rows(self):
        """Long-format rows ``(n, quantity, key, value)``."""
        out = []
        for i, n in enumerate(self.n):
            out.append((n, "blocks", "", self.blocks[i]))
            out.append((n, "block_length", "", self.block_length[i]))
            out.append((n, "cond_exp_norm", "", self.a[i]))
            for name, vals in self.sigma.items():
                out.append((n, "sigma2_mean", name, vals[i][0]))
                out.append((n, "sigma2_rmsd", name, vals[i][1]))
                out.append((n, "sigma2_limit", name, self.sigma_limit[name]))
            for eps, vals in self.lindeberg.items():
                out.append((n, "lindeberg", repr(float(eps)), vals[i]))
            for lev, vals in self.tail.items():
                out.append((n, "tail_functional", str(lev), vals[i]))
            for c, vals in self.ui.items():
                out.append((n, "ui_tail_moment", repr(float(c)), vals[i]))
        return out


def _dual_panel(grid):
    t, w = grid.nodes, grid.weights
    a, b = grid.interval if grid.interval is not None else (t[0], t[-1])
    cw = np.cumsum(w)
    med = t[np.searchsorted(cw, 0.5 * cw[-1])]
    u = (t - a) / (b - a)

    def haar(j, k):
        lo, mid, hi = k / 2 ** j, (k + 0.5) / 2 ** j, (k + 1) / 2 ** j
        return np.where((u >= lo) & (u < mid), 1.0, np.where((u >= mid) & (u < hi), -1.0, 0.0))

    return {
        "one": np.ones_like(t), "t": t.copy(), "sign_median": np.sign(t - med),
        "haar_0_0": haar(0, 0), "haar_1_0": haar(1, 0), "haar_1_1": haar(1, 1),
        "haar_2_0": haar(2, 0),
    }


def _geom(A, n, inv):
    # sum_{k=1}^n A^k = A (I - A^n) (I - A)^{-1}
    I = np.eye(A.shape[0])
    return A @ (I - np.linalg.matrix_power(A, n)) @ inv


def martingale_diagnostics(chain, grid, n_schedule, blocks=block_rule, p=None,
                           levels=(0, 1, 2, 3, 4), eps=(0.1, 0.5, 1.0),
                           ui_levels=(1.0, 2.0, 4.0), mc_paths=1000, seed=0):
    """Block-martingale diagnostics of the indicator process of a finite chain.

    Blocks of length ``l = floor(n / m_n)``; ``X_{n,j}`` is the normalized
    sum over block ``j`` and ``X~_{n,j}`` its innovation given the state at
    the block's start.
    """
    if not isinstance(chain, FiniteStateMarkov):
        raise TypeError("martingale diagnostics need a FiniteStateMarkov chain: "
                        "conditional expectations are computed exactly from matrix powers")
    p = grid.p if p is None else p
    P, pi = chain.P, chain.pi
    S = pi.size
    ind = (chain.values[:, None] <= grid.nodes[None, :]).astype(float)
    Fm = ind - pi @ ind                       # f_s, centered grid functions
    # rows all equal: the chain forgets its start after one step
    A = np.zeros((S, S)) if np.all(P == P[0]) else P - np.outer(np.ones(S), pi)
    inv = np.linalg.inv(np.eye(S) - A)
    D = np.diag(pi)

    panel = _dual_panel(grid)
    phis = {k: Fm @ (grid.weights * h) for k, h in panel.items()}
    # lag-sum sigma^2(x*) = E phi^2 + 2 sum_k E phi(Y_0) phi(Y_k)
    psi = {k: float(pi @ (v * v) + 2 * pi @ (v * (A @ inv @ v))) for k, v in phis.items()}

    rep = DiagnosticsReport(list(n_schedule), [], [], [], {k: [] for k in phis}, psi,
                            {e: [] for e in eps}, {l: [] for l in levels},
                            {c: [] for c in ui_levels},
                            {"a": "exact", "sigma": "exact",
                             "lindeberg": "monte carlo", "ui": "monte carlo",
                             "tail": "exact" if p == 2 else "monte carlo"})
    R_rows = {l: Fm - lp.dyadic_projection(Fm, grid, l) for l in levels}

    for n in n_schedule:
        m = blocks(n)
        ell = n // m
        rep.blocks.append(m)
        rep.block_length.append(ell)
        E_sn = _geom(A, n, inv) @ Fm
        rep.a.append(float(pi @ lp.lp_norm(E_sn, grid, p)) / math.sqrt(n))

        # exact conditional block moments by recursion over the block length
        Pl = np.linalg.matrix_power(P, ell)
        for k, phi in phis.items():
            M = np.zeros(S)
            V = np.zeros(S)
            for _ in range(ell):
                M, V = P @ (phi + M), P @ (phi * phi + 2 * phi * M + V)
            c = V - M * M
            mean = m / n * float(pi @ c)
            cb = c - pi @ c
            var, Qd = m * float(pi @ (cb * cb)), np.eye(S)
            for d in range(1, m):
                Qd = Qd @ Pl
                var += 2 * (m - d) * float(pi @ (cb * (Qd @ cb)))
            var /= n * n
            rmsd = math.sqrt(max(var, 0.0) + (mean - psi[k]) ** 2)
            rep.sigma[k].append((mean, rmsd))

        if p == 2:
            B = _sum_cov(A, n, inv, D)
            for l in levels:
                G = R_rows[l]
                gram = (G * grid.weights) @ G.T
                rep.tail[l].append(float(np.sum(B * gram)) / n)

        lind, ui, tails = _mc_blocks(chain, grid, Fm, A, inv, n, m, ell, p, eps, ui_levels,
                                     R_rows if p != 2 else None, mc_paths, seed)
        for e in eps:
            rep.lindeberg[e].append(lind[e])
        for c in ui_levels:
            rep.ui[c].append(ui[c])
        if p != 2:
            for l in levels:
                rep.tail[l].append(tails[l])
    return rep


def _sum_cov(A, n, inv, D):
    # E S_n S_n^T = Fm^T B Fm with B = n D + sum_{k<n} (n-k)(D A^k + (D A^k)^T)
    I = np.eye(A.shape[0])
    An1 = np.linalg.matrix_power(A, n - 1)
    T = A @ ((n - 1) * I - A @ (I - An1) @ inv) @ inv
    DT = D @ T
    return n * D + DT + DT.T


def _mc_blocks(chain, grid, Fm, A, inv, n, m, ell, p, eps, ui_levels, R_rows, paths, seed):
    S = Fm.shape[0]
    Mv = _geom(A, ell, inv) @ Fm               # E(block sum | start state)
    per = max(1, _CHUNK_ENTRIES // max(n, m * grid.size))
    lind = {e: 0.0 for e in eps}
    ui = {c: 0.0 for c in ui_levels}
    tails = {l: 0.0 for l in (R_rows or {})}
    sq = math.sqrt(n)
    spec = chain
    for start, r in _chunks(paths, per):
        u = np.empty((r, n + 1))
        for i in range(r):
            u[i] = rng_stream(seed, "diag", n, start + i).random(n + 1)
        idx = chain._idx_paths(u)                # column 0 is Y_0
        body = idx[:, 1: m * ell + 1].reshape(r, m, ell)
        counts = np.zeros((r, m, S))
        for s in range(S):
            counts[:, :, s] = (body == s).sum(axis=2)
        first = idx[:, 0: m * ell: ell]          # state before each block
        Xt = (counts @ Fm - Mv[first]) / sq      # (r, m, M)
        nrm2 = lp.lp_norm(Xt, grid, p) ** 2
        for e in eps:
            lind[e] += float(np.sum(nrm2 * (nrm2 > e * e)))
        tot_counts = np.zeros((r, S))
        for s in range(S):
            tot_counts[:, s] = (idx[:, 1:] == s).sum(axis=1)
        Sn = tot_counts @ Fm / sq
        z2 = lp.lp_norm(Sn, grid, p) ** 2
        for c in ui_levels:
            ui[c] += float(np.sum(z2 * (z2 > c * c)))
        if R_rows:
            for l, G in R_rows.items():
                tails[l] += float(np.sum(lp.lp_norm(tot_counts @ G / sq, grid, p) ** 2))
    return ({e: v / paths for e, v in lind.items()}, {c: v / paths for c, v in ui.items()},
            {l: v / paths for l, v in tails.items()})


# --- proof-bound audit -----------------------------------------------------------

def proof_bound_audit(chain, grid, p=None, n_max=50, measure=None):
    """Rows ``(n, gamma_n, beta~(n), 2 int_0^beta~ Q_||X0||, 6 int_0^beta~ Q_Y)``.

    ``gamma_n = E||E(X_n|F_0)||`` is exact; ``Y = |F_mu(Y_0)|^(1/p)`` uses
    ``measure`` (default: the grid itself as an atomic measure).
    """
    import warnings

    from .mixing import MixingUnderflowWarning

    p = grid.p if p is None else p
    measure = grid.as_measure() if measure is None else measure
    law_x = chain_norm_law(chain, grid, p)
    law_y = chain_ypmu_law(chain, measure, p)
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MixingUnderflowWarning)
        for n in range(n_max + 1):
            b = beta_tilde_exact_markov(chain, n)
            g = gamma_from_chain(chain, grid, n, p)
            rows.append((n, g, b, 2 * float(law_x.int_quantile(b)),
                         6 * float(law_y.int_quantile(b))))
    return rows


# --- divergence probe --------------------------------------------------------------

def hill_index(sample, k=None):
    """Hill estimate of the tail index from the ``k`` largest points."""
    x = np.sort(np.asarray(sample, dtype=float).ravel())
    x = x[x > 0]
    if k is None:
        k = max(20, x.size // 50)
    if x.size <= k:
        raise ValueError("sample too small for the Hill estimator")
    top = x[-k:]
    return float(1.0 / np.mean(np.log(top / x[-k - 1])))


@dataclass
class ProbeReport:
    verdict: str
    heavy_tail: bool
    hill_marginal: float
    hill_statistic: float
    inter_n: list
    ks_critical_99: float
    threshold: float
    inputs: dict
    means: dict

    def to_dict(self):
        d = dict(vars(self))
        d["inter_n"] = [list(r) for r in self.inter_n]
        return d


def _probe_grid(lo, hi, size, p):
    edges = lo + (hi - lo) * (np.geomspace(1.0, hi - lo + 1.0, size + 1) - 1.0) / (hi - lo)
    nodes = 0.5 * (edges[1:] + edges[:-1])
    return lp.GridMeasure(nodes, np.diff(edges), p, None, math.inf)


def divergence_probe(gamma, p, alpha, kind="inv_pow", n_schedule=(1024, 2048, 4096, 8192),
                     R=5000, seed=0, truncation=1e6, grid_size=1024, burn_in=10_000,
                     hill_draws=20_000, ks_tol=0.05, base=None):
    """Stability of the statistic for an observable of the intermittent dual chain.

    ``mu`` is Lebesgue measure on the line, discretized on a geometric grid
    of the observable's range up to ``truncation`` (``alpha = 0`` gives the
    identity observable and the range ``[0, 1]``).  The verdict is
    "stabilizing" when the last inter-n KS distance is at most ``ks_tol``,
    "non-stabilizing" when it is larger and the distances fail to decrease
    across the doublings (last >= first - 1% noise level), and
    "inconclusive" otherwise.  The heavy-tail flag is raised when the Hill index of ``Y_{p,mu} = |phi(Y)|^(1/p)``
    is below 2, i.e. its second moment looks infinite.

    ``base`` replaces the dual chain by another process with values in
    ``[0, 1]`` (a control run); ``gamma`` then only enters the reported
    threshold.
    """
    from .conditions import lsv_observable_threshold

    control = base is not None
    base = LSVDual(gamma, burn_in) if base is None else base
    if alpha == 0:
        spec, lo, hi = base, 0.0, 1.0
        grid = lp.GridMeasure.uniform(0.0, 1.0, grid_size, p)
        thr = math.inf
    else:
        obs = InvPow(alpha) if kind == "inv_pow" else InvPowRight(alpha)
        spec = Composed(base, obs)
        grid = _probe_grid(1.0, float(truncation), grid_size, p)
        thr = float(lsv_observable_threshold(gamma, p, kind))
    if control:
        thr = math.nan
    F = np.asarray(spec.marginal_cdf(grid.nodes), dtype=float)
    stats_by_n = {}
    for n in n_schedule:
        stats_by_n[n], _ = statistic_sample(spec, n, grid, F, seed, R, key=("probe",), p=p)
    inter = []
    ns = list(n_schedule)
    for a, b in zip(ns, ns[1:]):
        inter.append((a, b, compare_distributions(stats_by_n[a], stats_by_n[b])[0]))
    crit = ks_critical(R)
    ks = [k for _, _, k in inter]
    if ks[-1] <= ks_tol:
        verdict = "stabilizing"
    elif ks[-1] >= ks[0] - crit:
        verdict = "non-stabilizing"
    else:
        verdict = "inconclusive"
    if control:
        z = generate_paths(base, 1, seed, hill_draws, key=("hill",))[0][:, 0]
    else:
        z = sample_invariant(gamma, rng_stream(seed, "hill"), burn_in, hill_draws)
    y = z if alpha == 0 else spec.observable(z)[0]
    h_marg = hill_index(np.abs(y) ** (1.0 / p))
    h_stat = hill_index(stats_by_n[ns[-1]])
    return ProbeReport(verdict, bool(h_marg < 2.0),
                       h_marg, h_stat, inter, crit, thr,
                       {"gamma": gamma, "p": p, "alpha": alpha, "kind": kind,
                        "n_schedule": ns, "R": R, "seed": seed, "truncation": truncation,
                        "ks_tol": ks_tol, "base": dumps(base)},
                       {str(n): float(np.mean(v)) for n, v in stats_by_n.items()})
