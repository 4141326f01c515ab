"""Command-line entry point: ``lpclt <command> --config FILE [options]``.

Exit status: 0 on success, 1 for usage or config errors, 2 for runtime
errors (any partial output is left in the bundle directory and flagged).
"""
import argparse
import csv
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .bundle import SUMMARY_SCHEMA, BundleWriter, bundle_dir, to_jsonable, write_path_csv
from .config import ConfigError, dump_config, load_config

__all__ = ["main", "parse_and_dispatch", "OUT_ENV"]

OUT_ENV = "LPCLT_OUT"
COMMANDS = ("simulate", "mixing", "check", "verify", "diagnose", "probe", "report")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", help="experiment config file")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help=f"output root (default ${OUT_ENV} or ./runs)")
    common.add_argument("--format", choices=("csv", "json"), default="csv",
                        help="format of tabular outputs")
    common.add_argument("--jobs", type=int, default=1, help="worker threads")
    common.add_argument("--force", action="store_true",
                        help="reuse an existing bundle directory")
    common.add_argument("--strict", action="store_true",
                        help="condition checks report partial sums only")
    parser = _Parser(prog="lpclt", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"lpclt {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    helps = {
        "simulate": "write sample paths of the configured process",
        "mixing": "compute a mixing-coefficient profile",
        "check": "evaluate a dependence condition",
        "verify": "run the Monte Carlo CLT experiment",
        "diagnose": "block-martingale diagnostics and proof-bound audit",
        "probe": "stability probe for intermittent-map observables",
        "report": "print the summary of an existing bundle",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common], help=helps[name])
        if name == "report":
            p.add_argument("bundle", help="bundle directory")
    return parser


# --- helpers ---------------------------------------------------------------------

class Context:
    def __init__(self, args, cfg, command):
        self.args, self.cfg, self.command = args, cfg, command
        exp = cfg.section("experiment")
        self.seed = args.seed if args.seed is not None else exp.get("seed", 0)
        if self.seed < 0:
            raise ConfigError("seed must be >= 0", field="--seed")
        stem = os.path.splitext(os.path.basename(args.config))[0]
        self.name = exp.get("name", stem)
        canon = dump_config(cfg)
        self.canonical = canon
        self.config_hash = hashlib.sha256(
            f"{canon}\nseed={self.seed}\n".encode()).hexdigest()[:16]
        root = args.out or os.environ.get(OUT_ENV) or "runs"
        self.dir = bundle_dir(root, f"{self.name}-{command}", args.force)
        self.writer = None

    def open(self):
        try:
            self.writer = BundleWriter(self.dir, self.args.format)
        except OSError as exc:
            raise RuntimeError(f"cannot create bundle directory {self.dir}: {exc.strerror}")
        self.writer.json("config.json", {"command": self.command, "seed": self.seed,
                                         "config": self.canonical})
        return self.writer

    def finish(self, results, partial=False):
        return self.writer.finish(self.command, self.name, self.seed, self.config_hash,
                                  results, partial)


def _typed(cfg, section, key, cls, what):
    v = cfg.require(section, key)
    if not isinstance(v, cls):
        raise cfg.error(section, key, f"expected {what}, got {type(v).__name__}")
    return v


def _grid(cfg, p=None):
    from .lp import GridMeasure
    from .measures import LebesgueInterval, MeasureSpec

    m = cfg.get("measure", "spec", LebesgueInterval(0.0, 1.0))
    if not isinstance(m, MeasureSpec):
        raise cfg.error("measure", "spec", "expected a measure record")
    p = cfg.get("measure", "p", 2.0) if p is None else p
    trunc = cfg.get("measure", "truncation")
    if trunc is not None and len(trunc) != 2:
        raise cfg.error("measure", "truncation", "expected [lo, hi]")
    try:
        return m, GridMeasure.from_measure(m, cfg.get("measure", "grid_size", 1024), p, trunc)
    except (ValueError, TypeError) as exc:
        raise cfg.error("measure", "spec", str(exc)) from None


def _process(cfg):
    from .processes import ProcessSpec

    return _typed(cfg, "process", "spec", ProcessSpec, "a process record")


# --- commands ------------------------------------------------------------------

def cmd_simulate(ctx):
    from .processes import generate_path
    from .rng import rng_stream

    spec = _process(ctx.cfg)
    n = ctx.cfg.get("simulate", "n", 1000)
    reps = ctx.cfg.get("simulate", "replicates", 1)
    w = ctx.open()
    clipped = 0
    for r in range(reps):
        path = generate_path(spec, n, rng_stream(ctx.seed, "simulate", r), ctx.seed, r)
        name = f"path_{r}.csv"
        w.files.append(name)
        write_path_csv(path, os.path.join(w.dir, name))
        clipped += path.clipped
    return {"n": n, "replicates": reps, "clipped": clipped}


def cmd_mixing(ctx):
    from .mixing import MixingProfile, beta_tilde_empirical, exact_profile
    from .processes import FiniteStateMarkov
    from .rng import rng_stream

    cfg = ctx.cfg
    method = cfg.get("mixing", "method", "exact")
    k_max = cfg.get("mixing", "k_max", 50)
    if method in ("exact", "exact_tv"):
        chain = _process(cfg)
        if not isinstance(chain, FiniteStateMarkov):
            raise cfg.error("process", "spec", "exact coefficients need a FiniteStateMarkov chain")
        prof = exact_profile(chain, k_max, "tilde" if method == "exact" else "tv")
    elif method == "empirical":
        spec = _process(cfg)
        ks = list(range(k_max + 1))
        est, se = beta_tilde_empirical(
            spec, ks, cfg.get("mixing", "replicates", 20_000),
            cfg.get("mixing", "thresholds"), rng_stream(ctx.seed, "mixing"),
            cfg.get("mixing", "bins", 32), cfg.get("mixing", "bootstrap", 200))
        prof = MixingProfile(est, {"kind": "empirical",
                                   "replicates": cfg.get("mixing", "replicates", 20_000)}, se)
    else:
        fam = cfg.require("mixing", "family")
        if not callable(fam):
            raise cfg.error("mixing", "family", "expected a rate family record")
        prof = MixingProfile.theoretical(fam, k_max)
    w = ctx.open()
    header = ["k", "value"] + (["se"] if prof.se is not None else [])
    rows = [[k, float(v)] + ([float(prof.se[k])] if prof.se is not None else [])
            for k, v in enumerate(prof.values)]
    w.table("profile", header, rows)
    return {"method": method, "k_max": k_max, "provenance": prof.provenance,
            "values": prof.values.tolist()}


def cmd_check(ctx):
    from . import conditions as C
    from .mixing import MixingProfile

    cfg = ctx.cfg
    cond = cfg.require("check", "condition")
    strict = ctx.args.strict
    n_max = cfg.get("check", "N_max")

    def profile(key="profile"):
        v = cfg.require("check", key)
        if isinstance(v, tuple):
            return MixingProfile(np.asarray(v, dtype=float), {"kind": "values"})
        if not callable(v):
            raise cfg.error("check", key, "expected a rate family record or a list")
        return v

    def dist():
        from .quantiles import DistributionSpec
        return _typed(cfg, "check", "dist", DistributionSpec, "a distribution record")

    if cond == "series":
        rep = C.series_quantile_integral(profile(), dist(), n_max,
                                         cfg.get("check", "start", 0), strict)
        out = rep.to_dict()
    elif cond == "gamma":
        g = cfg.require("check", "gammas")
        n = 1024 if n_max is None else n_max
        g = np.asarray(g if isinstance(g, tuple) else g(np.arange(n + 1)), dtype=float)
        out = C.gamma_condition(g, dist(), n_max, cfg.get("check", "start", 1), strict).to_dict()
    elif cond == "rate":
        variant = cfg.require("check", "variant")
        holds, ev = C.rate_condition_check(variant, dist(), profile(), n_max)
        out = {"verdict": C.CONVERGES if holds else C.DIVERGES, "holds": holds,
               "evidence": ev}
        if strict:
            out["verdict"] = C.INCONCLUSIVE
    elif cond == "iid":
        from scipy import stats
        name = cfg.require("check", "law")
        law_cls = getattr(stats, name, None)
        if law_cls is None or not hasattr(law_cls, "ppf"):
            raise cfg.error("check", "law", f"unknown scipy.stats law {name!r}")
        law = law_cls(*cfg.get("check", "law_args", ()))
        measure, _ = _grid(cfg)
        res = C.iid_reduction(measure, law, cfg.get("check", "p", 2.0))
        out = {"verdict": C.CONVERGES if res.finite else C.DIVERGES, "finite": res.finite,
               "value": res.value, "truncations": res.truncations}
    elif cond == "threshold":
        th = C.lsv_observable_threshold(cfg.require("check", "gamma"),
                                        cfg.get("check", "p", 2.0),
                                        cfg.get("check", "kind", "inv_pow"))
        out = {"threshold": float(th), "admissible": th.admissible, "note": th.note}
    else:
        val = C.optimality_integral(dist(), cfg.require("check", "a"))
        out = {"integral": val, "finite": bool(np.isfinite(val))}
    out = to_jsonable(out)
    w = ctx.open()
    w.json("report.json", out)
    print(json.dumps(out, indent=2, sort_keys=True))
    return {"condition": cond, "strict": strict, "report": out}


def cmd_verify(ctx):
    from .harness import ExperimentConfig, run_clt_experiment

    cfg = ctx.cfg
    measure, grid = _grid(cfg)
    clt = cfg.section("clt")
    try:
        ec = ExperimentConfig(
            process=_process(cfg), measure=measure, grid_size=grid.size,
            truncation=cfg.get("measure", "truncation"), p=grid.p,
            n_schedule=clt.get("n_schedule", (256, 1024, 4096)),
            replicates=clt.get("replicates", 2000), max_lag=clt.get("max_lag", 50),
            cov_budget=clt.get("cov_budget", 10 ** 6), levels=clt.get("levels", (0, 1, 2, 3, 4)),
            seed=ctx.seed, name=ctx.name, grid=grid)
    except ValueError as exc:
        raise ConfigError(str(exc), ctx.cfg.path, ctx.cfg.lines.get(("clt", None)), "clt")
    w = ctx.open()

    def write_stats(bundle):
        for n, s in bundle.statistics.items():
            w.table(f"statistics_n{n}", ["n", "replicate", "statistic"],
                    ([n, i, float(v)] for i, v in enumerate(s)))

    def partial(bundle):
        write_stats(bundle)
        ctx.finish({"completed_n": list(bundle.statistics)}, partial=True)

    bundle = run_clt_experiment(ec, jobs=ctx.args.jobs, on_partial=partial)
    write_stats(bundle)
    w.table("limit", ["replicate", "statistic"],
            ([i, float(v)] for i, v in enumerate(bundle.limit)))
    w.table("distances", ["n", "ks", "w1"], bundle.distances)
    w.table("inter_n", ["n", "n_next", "ks"], bundle.inter_n)
    return bundle.summary


def cmd_diagnose(ctx):
    from .harness import martingale_diagnostics, proof_bound_audit
    from .processes import FiniteStateMarkov

    cfg = ctx.cfg
    chain = _process(cfg)
    if not isinstance(chain, FiniteStateMarkov):
        raise cfg.error("process", "spec", "diagnostics need a FiniteStateMarkov chain")
    _, grid = _grid(cfg)
    d = cfg.section("diagnose")
    ns = d.get("n_schedule", tuple(2 ** k for k in range(8, 15)))
    rep = martingale_diagnostics(chain, grid, ns, levels=d.get("levels", (0, 1, 2, 3, 4)),
                                 mc_paths=d.get("mc_paths", 1000), seed=ctx.seed)
    audit = proof_bound_audit(chain, grid, n_max=d.get("audit_n_max", 50))
    w = ctx.open()
    w.table("diagnostics", ["n", "quantity", "key", "value"], rep.rows())
    w.table("audit", ["n", "gamma_n", "beta_tilde", "bound_a", "bound_b"], audit)
    ex_a = max(g - a for _, g, _, a, _ in audit)
    ex_b = max(g - b for _, g, _, _, b in audit)
    logn = np.log(np.asarray(rep.n, dtype=float))
    a = np.asarray(rep.a)
    slope = float(np.polyfit(logn, np.log(a), 1)[0]) if np.all(a > 0) and a.size > 1 else None
    return {"n_schedule": list(rep.n), "cond_exp_slope": slope, "methods": rep.methods,
            "sigma_limit": rep.sigma_limit,
            "sigma2_last": {k: v[-1][0] for k, v in rep.sigma.items()},
            "audit_max_excess_a": ex_a, "audit_max_excess_b": ex_b,
            "audit_holds": bool(ex_a <= 1e-9 and ex_b <= 1e-9)}


def cmd_probe(ctx):
    from .harness import divergence_probe

    pr = ctx.cfg.section("probe")
    if "gamma" not in pr or "alpha" not in pr:
        raise ConfigError("probe needs gamma and alpha", ctx.cfg.path,
                          ctx.cfg.lines.get(("probe", None)), "probe")
    rep = divergence_probe(pr["gamma"], pr.get("p", 2.0), pr["alpha"],
                           pr.get("kind", "inv_pow"),
                           pr.get("n_schedule", (1024, 2048, 4096, 8192)),
                           pr.get("replicates", 5000), ctx.seed,
                           pr.get("truncation", 1e6), pr.get("grid_size", 1024),
                           ks_tol=pr.get("ks_tol", 0.05))
    w = ctx.open()
    w.json("probe.json", rep.to_dict())
    return rep.to_dict()


def cmd_report(args):
    import jsonschema

    path = os.path.join(args.bundle, "summary.json")
    try:
        with open(path, encoding="utf-8") as fh:
            summary = json.load(fh)
        jsonschema.validate(summary, SUMMARY_SCHEMA)
    except OSError:
        raise ConfigError("no summary.json in bundle", args.bundle) from None
    except (ValueError, jsonschema.ValidationError) as exc:
        raise ConfigError(f"invalid summary: {str(exc).splitlines()[0]}", path) from None
    if args.format == "json":
        print(json.dumps(summary, indent=2, sort_keys=True))
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(["key", "value"])
        for k, v in _flatten(summary):
            w.writerow([k, v if isinstance(v, str) else json.dumps(v)])
    return 0


def _flatten(obj, prefix=""):
    if isinstance(obj, dict):
        for k in sorted(obj):
            yield from _flatten(obj[k], f"{prefix}{k}.")
    else:
        yield prefix[:-1], obj


_COMMANDS = {"simulate": cmd_simulate, "mixing": cmd_mixing, "check": cmd_check,
             "verify": cmd_verify, "diagnose": cmd_diagnose, "probe": cmd_probe}


def parse_and_dispatch(argv=None):
    """Run one command; returns the exit status."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage() + "lpclt: error: a command is required")
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    if args.command == "report":
        try:
            return cmd_report(args)
        except ConfigError as exc:
            print(f"lpclt: config error: {exc}", file=sys.stderr)
            return 1
    ctx = None
    try:
        if not args.config:
            raise ConfigError("--config is required", field="--config")
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1", field="--jobs")
        cfg = load_config(args.config)
        ctx = Context(args, cfg, args.command)
        results = _COMMANDS[args.command](ctx)
        ctx.finish(results)
    except ConfigError as exc:
        print(f"lpclt: config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure: keep what was written
        note = ""
        if ctx is not None and ctx.writer is not None:
            note = f"; partial output in {ctx.dir}"
            summary = os.path.join(ctx.dir, "summary.json")
            if not os.path.exists(summary):
                try:
                    ctx.finish({"error": f"{type(exc).__name__}: {exc}"}, partial=True)
                except Exception:
                    pass
        print(f"lpclt: runtime error: {type(exc).__name__}: {exc}{note}", file=sys.stderr)
        return 2
    print(ctx.dir)
    return 0


def main():
    sys.exit(parse_and_dispatch())
