"""``fracheat <kind> --config <file> [--out <dir>] [--seed <n>] [--grid-M <n>] [--grid-L <x>]``.

Exit codes: 0 success, 1 usage error, 2 a check failed.
"""

from __future__ import annotations

import argparse
import inspect
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .. import interp, rearrange, semigroup, solver, zygmund
from ..gridfn import GridFunction, GridSpec, SingularProfileSpec, delta_like, restrict_to_ball, sample_profile
from ..zygmund import NormSpec
from . import acceptance
from .config import KINDS, ConfigError, ExperimentConfig, load_config, parse_config
from .output import write_csv, write_json

log = logging.getLogger("fracheat")

EXIT_OK, EXIT_USAGE, EXIT_FAILED = 0, 1, 2


@dataclass
class Outcome:
    passed: bool
    summary: dict[str, Any]
    tables: dict[str, tuple[list[str], list[list[Any]]]] = field(default_factory=dict)


def _num(x: Any) -> float:
    if isinstance(x, str) and x.lower() in ("inf", "infinity"):
        return math.inf
    try:
        return float(x)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"expected a number, got {x!r}") from exc


def _echo(cfg: ExperimentConfig) -> str:
    g = cfg.grid
    items = [f"dim={g['dim']}", f"L={g['L']}", f"M={g['M']}", f"seed={cfg.seed}"]
    items += [f"{k}={json.dumps(cfg.params[k], sort_keys=True)}" for k in sorted(cfg.params)]
    return ";".join(items)


def build_source(spec: GridSpec, desc: Any) -> GridFunction:
    """``"delta"``, ``"zero"`` or a profile object ``{kind, theta, p, scale, exponent, radius, restrict}``."""
    if desc in (None, "delta"):
        return delta_like(spec)
    if desc == "zero":
        return GridFunction(spec, np.zeros(spec.shape))
    if not isinstance(desc, dict):
        raise ConfigError(f"unknown source {desc!r}")
    d = dict(desc)
    restrict = d.pop("restrict", None)
    if d.get("kind") == "custom-radial":
        raise ConfigError("custom-radial profiles cannot be described in a config")
    kw = {k: (_num(v) if k != "kind" else v) for k, v in d.items()}
    prof = SingularProfileSpec(**kw)
    f = sample_profile(spec, prof)
    if restrict is not None:
        f = restrict_to_ball(f, np.zeros(spec.dim), _num(restrict))
    return f


# --------------------------------------------------------------------------
# runners


def run_norms(cfg: ExperimentConfig) -> Outcome:
    spec = cfg.grid_spec()
    f = build_source(spec, cfg.param("source", "delta"))
    stride = int(cfg.param("stride", zygmund.DEFAULT_STRIDE))
    specs = cfg.param("norms", [{"q": 1, "alpha": 0, "flavor": "strong"}])
    rows, values = [], []
    for d in specs:
        ns = NormSpec(_num(d["q"]), _num(d.get("alpha", 0)), d.get("flavor", "weak"),
                      _num(d.get("rho", "inf")))
        v = zygmund.norm(f, ns, stride)
        values.append(v)
        rows.append([cfg.name, _echo(cfg), ns.q, ns.alpha, ns.flavor, ns.rho, stride, v])
    ok = all(math.isfinite(v) for v in values)
    header = ["name", "params", "q", "alpha", "flavor", "rho", "stride", "value"]
    return Outcome(ok, {"values": values}, {"norms": (header, rows)})


def run_semigroup_rates(cfg: ExperimentConfig) -> Outcome:
    spec = cfg.grid_spec()
    f = build_source(spec, cfg.param("source", "delta"))
    theta = _num(cfg.param("theta", 1.0))
    r, q = _num(cfg.param("r", 1.0)), _num(cfg.param("q", 2.0))
    alpha, beta = _num(cfg.param("alpha", 0.0)), _num(cfg.param("beta", 0.0))
    flavor = cfg.param("flavor", "strong")
    t = np.geomspace(_num(cfg.param("t_min", 0.05)), _num(cfg.param("t_max", 0.5)),
                     int(cfg.param("n_t", 9)))
    rep = semigroup.smoothing_rate_probe(f, theta, r, q, alpha, beta, flavor, t,
                                         _num(cfg.param("rho", "inf")),
                                         int(cfg.param("stride", 4)))
    tol_a, tol_b = _num(cfg.param("tol_a", 0.05)), _num(cfg.param("tol_b", 0.25))
    ok = abs(rep.fit.a - rep.predicted_a) <= tol_a and not rep.flagged
    if rep.fit.with_log:
        ok &= abs(rep.fit.b - rep.predicted_b) <= tol_b
    rows = [[cfg.name, _echo(cfg), ti, yi] for ti, yi in zip(rep.times, rep.values)]
    summary = {"a": rep.fit.a, "b": rep.fit.b, "predicted_a": rep.predicted_a,
               "predicted_b": rep.predicted_b, "residual": rep.fit.residual,
               "flagged": rep.flagged}
    return Outcome(bool(ok), summary, {"rates": (["name", "params", "t", "norm"], rows)})


def run_kernel_check(cfg: ExperimentConfig) -> Outcome:
    spec = cfg.grid_spec()
    theta = _num(cfg.param("theta", 1.0))
    times = [_num(x) for x in cfg.param("times", [1.0, 4.0])]
    rows, lo, hi = [], [], []
    for t in times:
        r = semigroup.kernel_bound_fit(semigroup.SemigroupParams(theta, t), spec)
        rows.append([cfg.name, _echo(cfg), t, r.c_lower, r.c_upper])
        lo.append(r.c_lower)
        hi.append(r.c_upper)
    ok = math.isfinite(max(hi)) and (theta == 2 or min(lo) > 0)
    spread = _num(cfg.param("max_spread", 1.2))
    if theta < 2:
        ok &= max(lo) / min(lo) <= spread
    ok &= max(hi) / min(hi) <= spread
    return Outcome(bool(ok), {"c_lower": lo, "c_upper": hi},
                   {"kernel": (["name", "params", "t", "c_lower", "c_upper"], rows)})


def _pair(cfg: ExperimentConfig) -> interp.InterpPairSpec:
    pattern = cfg.param("pattern", "critical")
    if pattern == "critical":
        return interp.critical_pair(int(cfg.grid["dim"]), _num(cfg.param("theta", 1.0)),
                                    _num(cfg.param("q0", 1.5)))
    if pattern == "supercritical":
        return interp.supercritical_pair(_num(cfg.param("p", 3.0)), _num(cfg.param("r", 4 / 3)),
                                         _num(cfg.param("q0", 3.0)))
    raise ConfigError(f"unknown interpolation pattern {pattern!r}")


def run_interp_check(cfg: ExperimentConfig) -> Outcome:
    pair = _pair(cfg)
    rng = np.random.default_rng(cfg.seed)
    suite = [acceptance.random_step_profile(rng) for _ in range(int(cfg.param("n_random", 100)))]
    if cfg.param("source") is not None:
        suite.append(rearrange.rearrangement(build_source(cfg.grid_spec(), cfg.param("source"))))
    rows, ok = [], True
    for i, f in enumerate(suite):
        rep = interp.interp_embedding_check(f, pair)
        ok &= rep.holds
        rows.append([cfg.name, _echo(cfg), i, rep.lhs, rep.rhs, rep.holds])
    return Outcome(bool(ok), {"all_hold": ok, "n": len(suite)},
                   {"interp": (["name", "params", "index", "lhs", "rhs", "holds"], rows)})


def run_hardy_check(cfg: ExperimentConfig) -> Outcome:
    q, alpha = _num(cfg.param("q", 2.0)), _num(cfg.param("alpha", 1.0))
    pair = int(cfg.param("pair", 1))
    grid = np.geomspace(_num(cfg.param("grid_lo", 1e-8)), 1.0, int(cfg.param("n_grid", 1500)))
    w = interp.primed_norm_weights(q, alpha, pair, grid, (0.0, 1.0))
    rng = np.random.default_rng(cfg.seed)
    rows, ok = [], True
    for i in range(int(cfg.param("n_random", 100))):
        c, e = rng.lognormal(0, 1, 3), rng.uniform(-0.9, 1.0, 3)
        f = sum(ci * grid**ei for ci, ei in zip(c, e))
        rep = interp.hardy_check(w, f)
        ok &= rep.bound_ok is True
        rows.append([cfg.name, _echo(cfg), i, rep.lhs, rep.rhs, rep.B, rep.constant,
                     "unverifiable" if rep.bound_ok is None else rep.bound_ok])
    header = ["name", "params", "index", "lhs", "rhs", "B", "constant", "bound_ok"]
    return Outcome(bool(ok), {"all_bound_ok": ok}, {"hardy": (header, rows)})


def _solve_config(cfg: ExperimentConfig) -> solver.SolveConfig:
    keys = {"theta": _num, "p": _num, "T": _num, "n_time": int, "grading": _num,
            "epsilon": _num, "max_iter": int, "divergence_cap": _num, "regime": str,
            "n_sub": int, "stride": int, "tol": _num}
    kw = {k: conv(cfg.params[k]) for k, conv in keys.items() if k in cfg.params}
    kw.setdefault("theta", 1.0)
    kw.setdefault("p", 2.0)
    kw.setdefault("T", 0.25)
    return solver.SolveConfig(**kw)


def run_solve(cfg: ExperimentConfig) -> Outcome:
    spec = cfg.grid_spec()
    sc = _solve_config(cfg)
    forcing = cfg.param("forcing", "mu_c")
    if forcing == "zero":
        mu = GridFunction(spec, np.zeros(spec.shape))
    elif forcing == "mu_c":
        mu = solver.forcing(spec, sc, sc.epsilon)
    else:
        raise ConfigError(f"unknown forcing {forcing!r}")
    res = solver.picard_iterate(mu, sc)
    rep = res.report
    ratios = (math.nan,) + rep.ratios
    rows = [[cfg.name, _echo(cfg), k + 1, d, n, r]
            for k, (d, n, r) in enumerate(zip(rep.distances, rep.norms, ratios))]
    bound = solver.solution_bound(res, sc) if rep.verdict == "converged" else None
    summary = {"verdict": rep.verdict, "iterations": rep.iterations,
               "final_ratio": rep.final_ratio, "forcing_gauge": rep.forcing_gauge,
               "global_fallback": rep.global_fallback, "note": rep.note,
               "C": None if bound is None else bound.constant}
    expect = cfg.param("expect", "converged")
    return Outcome(rep.verdict == expect, summary,
                   {"iterations": (["name", "params", "k", "distance", "norm", "ratio"], rows)})


def run_threshold(cfg: ExperimentConfig) -> Outcome:
    spec = cfg.grid_spec()
    sc = _solve_config(cfg)
    rep = solver.threshold_bisect(sc, _num(cfg.param("lambda_lo", 1.0)),
                                  _num(cfg.param("lambda_hi", 2.0)), solver.forcing(spec, sc))
    rows = [[cfg.name, _echo(cfg), lam, v] for lam, v in rep.evaluations]
    return Outcome(True, {"lambda_star_interval": rep.lambda_star_interval,
                          "widenings": rep.widenings},
                   {"threshold": (["name", "params", "lambda", "verdict"], rows)})


def run_acceptance(cfg: ExperimentConfig) -> Outcome:
    numbers = [int(n) for n in cfg.param("criteria", sorted(acceptance.CRITERIA))]
    results = []
    for n in numbers:
        fn = acceptance.CRITERIA.get(n)
        if fn is None:
            raise ConfigError(f"unknown criterion {n}")
        kw = {"seed": cfg.seed} if "seed" in inspect.signature(fn).parameters else {}
        res = fn(**kw)
        log.info("%s", res.line())
        print(res.line(), flush=True)
        results.append(res)
    rows = [[cfg.name, _echo(cfg), r.number, r.title, r.status] for r in results]
    ok = all(r.passed is not False for r in results)
    summary = {str(r.number): {"status": r.status, "title": r.title, "details": r.details}
               for r in results}
    return Outcome(ok, summary,
                   {"acceptance": (["name", "params", "criterion", "title", "status"], rows)})


RUNNERS: dict[str, Callable[[ExperimentConfig], Outcome]] = {
    "norms": run_norms, "semigroup-rates": run_semigroup_rates, "kernel-check": run_kernel_check,
    "interp-check": run_interp_check, "hardy-check": run_hardy_check, "solve": run_solve,
    "threshold": run_threshold, "acceptance": run_acceptance,
}
assert set(RUNNERS) == set(KINDS)


def run(config: ExperimentConfig) -> int:
    """Execute one experiment, write its CSVs and ``summary.json``, return the exit code."""
    try:
        outcome = RUNNERS[config.kind](config)
    except (ConfigError, ValueError, TypeError, KeyError) as exc:
        print(f"fracheat: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(config.output_dir)
    for name, (header, rows) in outcome.tables.items():
        write_csv(out / f"{config.name}.{name}.csv", header, rows)
    write_json(out / f"{config.name}.summary.json",
               {"name": config.name, "kind": config.kind, "seed": config.seed,
                "grid": dict(config.grid), "params": dict(config.params),
                "passed": outcome.passed, "summary": outcome.summary})
    return EXIT_OK if outcome.passed else EXIT_FAILED


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage errors exit with 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"fracheat: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fracheat", description=__doc__.splitlines()[0])
    p.add_argument("kind", choices=KINDS)
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--grid-M", type=int, dest="grid_M")
    p.add_argument("--grid-L", type=float, dest="grid_L")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config:
            cfg = load_config(args.config, args.kind)
        else:
            cfg = parse_config({"kind": args.kind})
        cfg = cfg.with_overrides(args.out, args.seed, args.grid_M, args.grid_L)
        cfg.grid_spec()
    except ConfigError as exc:
        print(f"fracheat: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return run(cfg)


if __name__ == "__main__":
    raise SystemExit(main())
