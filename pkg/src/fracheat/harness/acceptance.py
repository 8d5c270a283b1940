"""The acceptance suite: one function per criterion, each returning a :class:`CriterionResult`.

Every check is seeded and deterministic.  Criterion 17 (constants the theory
never quantifies, nonexistence above the threshold) is recorded as not
reproducible rather than run.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable

import numpy as np

from .. import interp, rearrange, semigroup, solver, zygmund
from ..gridfn import (GridFunction, SingularProfileSpec, critical_profile, delta_like, make_grid,
                      restrict_to_ball, sample_profile, supercritical_profile)
from ..rearrange import StepProfile
from ..zygmund import NormSpec


@dataclass(frozen=True)
class CriterionResult:
    number: int
    title: str
    passed: bool | None
    details: dict[str, Any] = field(default_factory=dict)
    seconds: float = 0.0

    @property
    def status(self) -> str:
        if self.passed is None:
            return "NOT REPRODUCIBLE"
        return "PASS" if self.passed else "FAIL"

    def line(self) -> str:
        return f"criterion {self.number:2d} {self.status:<16} {self.title}"


def _random_grid_function(rng: np.random.Generator, spec, zero_frac: float = 0.3) -> GridFunction:
    v = rng.standard_normal(spec.shape) * rng.lognormal(0.0, 1.0, spec.shape)
    v[rng.uniform(size=spec.shape) < zero_frac] = 0.0
    # some exact ties
    v = np.where(rng.uniform(size=spec.shape) < 0.1, np.round(v), v)
    return GridFunction(spec, v)


def random_step_profile(rng: np.random.Generator, max_steps: int = 40) -> StepProfile:
    k = int(rng.integers(1, max_steps + 1))
    widths = rng.lognormal(-2.0, 1.5, k)
    vals = np.sort(rng.lognormal(0.0, 2.0, k))[::-1]
    return StepProfile(np.r_[0.0, np.cumsum(widths)], vals)


def _mu_c_ball(M: int, theta: float = 1.0, L: float = 4.0) -> GridFunction:
    g = make_grid(2, L, M)
    return restrict_to_ball(sample_profile(g, critical_profile(theta, 2)), np.zeros(2), 1.0)


# --------------------------------------------------------------------------


def criterion_1(seed: int = 0) -> CriterionResult:
    rng = np.random.default_rng(seed)
    spec = make_grid(1, 16.0, 1024)
    h = spec.cell_measure
    worst = {"R1": 0.0, "R2": -math.inf, "R4": -math.inf, "R7": -math.inf}
    r1_dist_exact = True
    idx = np.unique(np.geomspace(1, 1000, 40).astype(int))
    for _ in range(200):
        f = _random_grid_function(rng, spec)
        g = _random_grid_function(rng, spec)
        pf, pg = rearrange.rearrangement(f), rearrange.rearrangement(g)
        for q in (1.0, 2.0, 3.5):
            direct = float(np.sum(np.abs(f.values) ** q) * h)
            if direct > 0:
                worst["R1"] = max(worst["R1"], abs(pf.integral(q=q) - direct) / direct)
        for lam in rng.uniform(0, np.max(np.abs(f.values)), 5):
            d = rearrange.distribution_function(f, lam)
            meas = float(pf.breakpoints[np.searchsorted(-pf.values, -lam, side="left")])
            r1_dist_exact &= d == meas
        t = (idx + 0.25) * h
        tt, ss = np.meshgrid(t, t, indexing="ij")
        pfg = rearrange.rearrangement(f + g)
        gap = pfg(tt + ss) - (pf(tt) + pg(ss))
        worst["R2"] = max(worst["R2"], float(gap.max()))
        s = np.geomspace(h / 7, 1024 * h, 200)
        fs = pf(s)
        worst["R4"] = max(worst["R4"], float(np.max((fs - pf.maximal(s)) / np.maximum(fs, 1e-300))))
        pp = rearrange.rearrangement(f * g)
        worst["R7"] = max(worst["R7"],
                          float(np.max(pp.maximal(s) - rearrange.product_average(pf, pg, s))))
    r3 = True
    for _ in range(20):
        mask = rng.uniform(size=spec.shape) < rng.uniform(0.05, 0.9)
        prof = rearrange.rearrangement(GridFunction(spec, mask.astype(float)))
        m = mask.sum() * h
        r3 &= bool(np.array_equal(prof.values, [1.0]) and prof.breakpoints[-1] == m)
    passed = (worst["R1"] <= 1e-12 and r1_dist_exact and worst["R2"] <= 1e-12
              and worst["R4"] <= 1e-12 and worst["R7"] <= 1e-9 and r3)
    return CriterionResult(1, "rearrangement calculus R1-R4, R7", passed,
                           {**worst, "R1_distribution_exact": r1_dist_exact, "R3_exact": r3})


def criterion_2(seed: int = 0) -> CriterionResult:
    rng = np.random.default_rng(seed)
    ordering_ok = True
    collapse = 0.0
    for _ in range(200):
        prof = random_step_profile(rng)
        q, a = float(rng.uniform(1, 4)), float(rng.uniform(0, 3))
        ordering_ok &= zygmund.norm_ordering_report(prof, q, a).holds(1e-9)
        fr = zygmund.norm(prof, NormSpec(q, 0.0, "frak"))
        st = zygmund.norm(prof, NormSpec(q, 0.0, "strong"))
        collapse = max(collapse, abs(fr - st) / st)
    mu = _mu_c_ball(256)
    rep = zygmund.norm_ordering_report(mu, 1.0, 1.0)
    passed = bool(ordering_ok and rep.holds(1e-9) and collapse <= 1e-10)
    return CriterionResult(2, "norm ordering strong >= frak >= weak; collapse at alpha = 0", passed,
                           {"random_ordering": ordering_ok, "collapse_rel": collapse,
                            "mu_c": [rep.strong, rep.frak, rep.weak]})


def criterion_3(seed: int = 0) -> CriterionResult:
    rng = np.random.default_rng(seed)
    spec = make_grid(1, 4.0, 256)
    worst = 0.0
    for i in range(100):
        f = _random_grid_function(rng, spec)
        while True:
            r, q = float(rng.uniform(0.25, 3.0)), float(rng.uniform(1.0, 4.0))
            if r * q >= 1:
                break
        rho = math.inf if i % 2 == 0 else float(rng.uniform(0.3, 2.0))
        rep = zygmund.power_identity_check(f, r, q, float(rng.uniform(0, 3)), rho, stride=4)
        worst = max(worst, rep.rel_error)
    return CriterionResult(3, "power identity || |f|^r ||_(q,a) = ||f||_(rq,a)^r", worst <= 1e-10,
                           {"max_rel_error": worst})


def criterion_4() -> CriterionResult:
    vals = {}
    for M in (256, 512):
        f = _mu_c_ball(M)
        vals[M] = zygmund.norm(f, NormSpec(1.0, 1.0, "frak"), s_range=(1e-6, math.pi))
    crit_ok = all(math.isfinite(v) for v in vals.values()) and abs(vals[512] / vals[256] - 1) <= 0.10
    sup, floored = {}, {}
    for M in (256, 512):
        g = make_grid(2, 4.0, M)
        f = restrict_to_ball(sample_profile(g, supercritical_profile(1.0, 3.0)), np.zeros(2), 1.0)
        # sup s^(3/4) f*(s) is the weak (4/3, 0) norm
        sup[M] = zygmund.norm(f, NormSpec(4.0 / 3.0, 0.0, "weak"))
        # the first cells carry square-cell averages that overshoot the radial profile
        floored[M] = zygmund.norm(f, NormSpec(4.0 / 3.0, 0.0, "weak"),
                                  s_range=(32 * g.cell_measure, math.pi))
    sup_ok = all(math.isfinite(v) for v in sup.values()) and abs(sup[512] / sup[256] - 1) <= 0.10
    return CriterionResult(4, "mu_c membership and stability under grid doubling",
                           bool(crit_ok and sup_ok),
                           {"critical": vals, "supercritical": sup,
                            "supercritical_floored_32_cells": floored,
                            "supercritical_exact": math.pi**0.75})


def _cauchy_oracle(x: np.ndarray, n: int = 1_000_000, cutoff: float = 40.0) -> np.ndarray:
    """``(1/pi) int_0^cutoff e^-xi cos(xi x) dxi`` by composite Simpson."""
    xi = np.linspace(0.0, cutoff, n + 1)
    w = np.ones(n + 1)
    w[1:-1:2], w[2:-1:2] = 4.0, 2.0
    w *= (cutoff / n) / 3.0 * np.exp(-xi) / math.pi
    out = np.empty(len(x))
    for i in range(0, len(x), 16):
        out[i : i + 16] = np.cos(np.outer(x[i : i + 16], xi)) @ w
    return out


def criterion_5(seed: int = 0) -> CriterionResult:
    rng = np.random.default_rng(seed)
    spec = make_grid(2, 8.0, 64)
    f = GridFunction(spec, rng.standard_normal(spec.shape))
    a = semigroup.apply(f, semigroup.SemigroupParams(1.0, 0.3))
    mass = abs(a.mean() - f.mean()) / np.abs(f.values).mean()
    ab = semigroup.apply(a, semigroup.SemigroupParams(1.0, 0.2))
    direct = semigroup.apply(f, semigroup.SemigroupParams(1.0, 0.5))
    law = float(np.max(np.abs(ab.values - direct.values)) / np.max(np.abs(direct.values)))
    g1 = make_grid(1, 32.0, 1024)
    k = semigroup.kernel(semigroup.SemigroupParams(2.0, 0.25), g1)
    x = k.displacement()
    gauss = float(np.max(np.abs(k.values - np.exp(-x * x) / math.sqrt(math.pi))))
    g2 = make_grid(1, 4096.0, 65536)
    kc = semigroup.kernel(semigroup.SemigroupParams(1.0, 1.0), g2)
    xc = kc.displacement()
    near = np.abs(xc) <= 10.0
    cauchy = float(np.max(np.abs(kc.values[near] - _cauchy_oracle(xc[near]))))
    passed = mass <= 1e-12 and law <= 1e-12 and gauss <= 1e-8 and cauchy <= 1e-7
    return CriterionResult(5, "semigroup exactness: mass, law, Gaussian and Cauchy kernels", passed,
                           {"mass": mass, "law": law, "gaussian_sup": gauss, "cauchy_sup": cauchy})


def criterion_6() -> CriterionResult:
    rows = {}
    ok = True
    for N, L, Ms, ts in ((1, 64.0, (4096, 8192), (1.0, 4.0)), (2, 16.0, (128, 256), (0.5, 1.0))):
        cl, cu = [], []
        for M in Ms:
            for t in ts:
                r = semigroup.kernel_bound_fit(semigroup.SemigroupParams(1.0, t), make_grid(N, L, M))
                cl.append(r.c_lower)
                cu.append(r.c_upper)
                rows[f"N={N} M={M} t={t}"] = (r.c_lower, r.c_upper)
        ok &= min(cl) > 0 and math.isfinite(max(cu))
        ok &= max(cl) / min(cl) <= 1.2 and max(cu) / min(cu) <= 1.2
    return CriterionResult(6, "two-sided kernel bounds, theta = 1", bool(ok), rows)


def criterion_7() -> CriterionResult:
    g = make_grid(1, 16.0, 2**14)
    t = np.geomspace(0.05, 0.5, 9)
    rows = {}
    ok = True
    for theta in (1.0, 2.0):
        d = delta_like(g)
        for q, fl in ((2.0, "strong"), (math.inf, "weak")):
            r = semigroup.smoothing_rate_probe(d, theta, 1.0, q, 0.0, 0.0, fl, t)
            rows[f"theta={theta} (1,{q})"] = (r.fit.a, r.predicted_a)
            ok &= abs(r.fit.a - r.predicted_a) <= 0.05
        # r = 2: the scale-critical member |x|^(-1/2) of the weak L^2 class
        f = sample_profile(g, SingularProfileSpec("power", exponent=-0.5))
        r = semigroup.smoothing_rate_probe(f, theta, 2.0, 4.0, 0.0, 0.0, "weak", t)
        rows[f"theta={theta} (2,4)"] = (r.fit.a, r.predicted_a)
        ok &= abs(r.fit.a - r.predicted_a) <= 0.05
    # log exponent: r = 1, source |x|^-1 Phi^-2 in weak (1, 2), so alpha = 1; q = inf, beta = 0
    gl = make_grid(1, 16.0, 2**16)
    src = sample_profile(gl, SingularProfileSpec(
        "custom-radial", func=lambda r: 1.0 / (r * np.log(np.e + 1.0 / r) ** 2), radius=1.0))
    tl = np.geomspace(1e-4, 1e-3, 9)
    r = semigroup.smoothing_rate_probe(src, 2.0, 1.0, math.inf, 1.0, 0.0, "weak", tl)
    rows["log case (a, b)"] = (r.fit.a, r.fit.b, r.predicted_a, r.predicted_b)
    ok &= abs(r.fit.b - r.predicted_b) <= 0.25
    return CriterionResult(7, "smoothing exponents", bool(ok), rows)


def criterion_8(seed: int = 0) -> CriterionResult:
    rng = np.random.default_rng(seed)
    grid = np.geomspace(1e-8, 1.0, 1500)
    ok, violated, verifiable = True, False, True
    Bs = {}
    for alpha in (0.0, 1.0):
        for pair in (1, 2):
            w = interp.primed_norm_weights(2.0, alpha, pair, grid, (0.0, 1.0))
            for _ in range(100):
                c = rng.lognormal(0, 1, 3)
                e = rng.uniform(-0.9, 1.0, 3)
                f = sum(ci * grid**ei for ci, ei in zip(c, e)) * (1 + 0.5 * np.sin(rng.uniform(1, 30) * np.log(grid)))
                rep = interp.hardy_check(w, f)
                verifiable &= rep.verifiable
                ok &= rep.bound_ok is True
                violated |= rep.lhs > rep.constant * rep.rhs * (1 + 1e-6)
            Bs[f"alpha={alpha} pair={pair}"] = (rep.B, rep.B_refined)
    return CriterionResult(8, "Hardy inequality for the primed-norm weight pairs",
                           bool(ok and verifiable and not violated),
                           {"B": Bs, "verifiable": verifiable, "violated": violated})


def criterion_9() -> CriterionResult:
    cases = {
        "lem31_1 q=0 a=0": interp.log_integral_estimates_check("lem31_1", 0.0, 0.0),
        "lem31_1 q=0.5 a=2": interp.log_integral_estimates_check("lem31_1", 0.5, 2.0),
        "lem31_2 a=-2 S=1": interp.log_integral_estimates_check("lem31_2", 0.0, -2.0, S=1.0),
        "lem31_3 q=-2 a=3": interp.log_integral_estimates_check("lem31_3", -2.0, 3.0),
    }
    ok = all(r.stable for r in cases.values())
    return CriterionResult(9, "log-weight integral estimates", ok,
                           {k: (r.fitted_C, r.fitted_C_refined) for k, r in cases.items()})


def criterion_10(seed: int = 0) -> CriterionResult:
    rng = np.random.default_rng(seed)
    rows = {}
    ok = True
    suite = [random_step_profile(rng) for _ in range(50)]
    c1 = max(interp.maximal_bound_check("lem33_1", f, r, a).fitted_C
             for f in suite for r, a in ((1.0, 1.0), (2.0, 0.0), (1.5, 2.0)))
    ok &= c1 <= 1 + 1e-9
    c2 = max(interp.maximal_bound_check("lem33_2", f, 2.0, 0.0).fitted_C for f in suite)
    ok &= math.isfinite(c2)
    rows["eq1_max_C"], rows["eq2_max_C"] = c1, c2
    for M in (128, 256):
        f = _mu_c_ball(M)
        m1 = interp.maximal_bound_check("lem33_1", f, 1.0, 1.0)
        prof = rearrange.rearrangement(f)
        m3 = interp.maximal_bound_check("lem33_3", prof, 1.0, 1.0, E_measure=prof.support)
        ok &= m1.fitted_C <= 1 + 1e-9 and math.isfinite(m3.fitted_C) and math.isfinite(m3.frak_C)
        rows[f"mu_c M={M}"] = {"eq1_C": m1.fitted_C, "eq3_C": m3.fitted_C, "frak_C": m3.frak_C}
    return CriterionResult(10, "maximal-function bounds", bool(ok), rows)


def _solver_snapshots() -> list[GridFunction]:
    g = make_grid(2, 4.0, 64)
    cfg = solver.SolveConfig(theta=1.0, p=2.0, T=0.25, n_time=16, stride=2)
    res = solver.picard_iterate(solver.forcing(g, cfg, 0.5), cfg)
    return list(res.source.slices[::4]) + list(res.solution.slices[::4])


def criterion_11(seed: int = 0) -> CriterionResult:
    rng = np.random.default_rng(seed)
    pairs = {"critical": interp.critical_pair(2, 1.0, 1.5),
             "supercritical": interp.supercritical_pair(3.0, 4.0 / 3.0, 3.0)}
    suite: list[StepProfile] = [random_step_profile(rng) for _ in range(100)]
    snaps = [rearrange.rearrangement(s) for s in _solver_snapshots()]
    ok = True
    worst = {}
    for name, pair in pairs.items():
        ratios = []
        for f in suite + snaps:
            rep = interp.interp_embedding_check(f, pair)
            ok &= rep.holds
            ratios.append(rep.lhs / rep.rhs if rep.rhs > 0 else 0.0)
        worst[name] = max(ratios)
    plain = interp.InterpPairSpec.from_endpoints(1.0, 4.0, 0.5, 0.0, "plain_lebesgue")
    r41 = [interp.lebesgue_interp_sanity(f, plain).ratio for f in suite]
    sanity = min(r41) >= 0.25 and max(r41) <= 4.0
    return CriterionResult(11, "interpolation embedding and the Lebesgue sanity check",
                           bool(ok and sanity),
                           {"max_lhs_over_rhs": worst, "lebesgue_ratio_range": (min(r41), max(r41))})


def criterion_12() -> CriterionResult:
    consts = {}
    for T, L in ((0.25, 4.0), (1.0, 8.0)):
        for M in (128, 256):
            cfg = solver.SolveConfig(theta=1.0, p=2.0, T=T, stride=8 if M == 256 else 4)
            g = make_grid(2, L, M)
            consts[f"T={T} M={M}"] = solver.inhomogeneous_estimate(solver.forcing(g, cfg), cfg).constant
    v = list(consts.values())
    spread = max(v) / min(v)
    return CriterionResult(12, "critical inhomogeneous estimate, fitted C*",
                           bool(all(math.isfinite(x) for x in v) and spread <= 1.25),
                           {"C_star": consts, "max_over_min": spread})


@lru_cache(maxsize=8)
def coarse_threshold(regime: str, p: float, n_time: int = 16) -> tuple[float, float]:
    g = make_grid(2, 4.0, 64)
    cfg = solver.SolveConfig(theta=1.0, p=p, T=0.25, n_time=n_time, stride=2, regime=regime)
    lo, hi = (1.0, 2.0) if regime == "critical" else (0.2, 0.4)
    return solver.threshold_bisect(cfg, lo, hi, solver.forcing(g, cfg)).lambda_star_interval


def _existence(number: int, regime: str, p: float) -> CriterionResult:
    lam = coarse_threshold(regime, p)[0]
    g = make_grid(2, 4.0, 256)
    cfg = solver.SolveConfig(theta=1.0, p=p, T=0.25, regime=regime)
    res = solver.picard_iterate(solver.forcing(g, cfg, lam / 4.0), cfg)
    bound = solver.solution_bound(res, cfg)
    rep = res.report
    ok = rep.verdict == "converged" and rep.final_ratio <= 0.5 and math.isfinite(bound.constant)
    return CriterionResult(number, f"existence, {regime} regime", bool(ok),
                           {"coarse_threshold": lam, "epsilon": lam / 4.0, "verdict": rep.verdict,
                            "iterations": rep.iterations, "final_ratio": rep.final_ratio,
                            "C": bound.constant, "gauge": rep.forcing_gauge})


def criterion_13() -> CriterionResult:
    return _existence(13, "critical", 2.0)


def criterion_14() -> CriterionResult:
    return _existence(14, "supercritical", 3.0)


def criterion_15(seed: int = 0) -> CriterionResult:
    rows = {}
    ok = True
    g = make_grid(2, 4.0, 128)
    for regime, p in (("critical", 2.0), ("supercritical", 3.0)):
        cfg = solver.SolveConfig(theta=1.0, p=p, T=0.25, regime=regime, stride=4)
        rep = solver.contraction_probe(solver.forcing(g, cfg), cfg, n_pairs=3,
                                       epsilons=[1e-3, 2e-3, 4e-3, 8e-3, 1.6e-2], seed=seed)
        rows[regime] = (rep.epsilon_power, rep.predicted)
        ok &= abs(rep.epsilon_power - rep.predicted) <= 0.25
    return CriterionResult(15, "contraction ratio scales like epsilon^(p-1)", bool(ok), rows)


def criterion_16() -> CriterionResult:
    g = make_grid(2, 4.0, 64)
    cfg = solver.SolveConfig(theta=1.0, p=2.0, T=0.25, n_time=16, stride=2)
    sweep = solver.threshold_sweep(cfg, solver.forcing(g, cfg), np.geomspace(0.25, 8.0, 20))
    verdicts = [ok for _, ok in sweep]
    monotone = verdicts == sorted(verdicts, reverse=True)
    a = coarse_threshold("critical", 2.0, 16)
    b = coarse_threshold("critical", 2.0, 32)
    rel = abs(a[0] - b[0]) / a[0], abs(a[1] - b[1]) / a[1]
    return CriterionResult(16, "threshold sweep monotone, bisection reproducible",
                           bool(monotone and max(rel) <= 0.05),
                           {"sweep": sweep, "interval_n16": a, "interval_n32": b,
                            "relative_change": rel})


def criterion_17() -> CriterionResult:
    return CriterionResult(17, "unquantified constants and nonexistence above the threshold", None,
                           {"reason": "the theory never states the constants; nonexistence "
                                      "proofs are out of scope for a numerical check"})


CRITERIA: dict[int, Callable[[], CriterionResult]] = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
    6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10,
    11: criterion_11, 12: criterion_12, 13: criterion_13, 14: criterion_14, 15: criterion_15,
    16: criterion_16, 17: criterion_17,
}


def run_criterion(n: int) -> CriterionResult:
    t0 = time.perf_counter()
    res = CRITERIA[n]()
    return CriterionResult(res.number, res.title, res.passed, res.details,
                           time.perf_counter() - t0)


def run_all(numbers=None) -> list[CriterionResult]:
    return [run_criterion(n) for n in (numbers or sorted(CRITERIA))]
