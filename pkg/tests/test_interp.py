from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fracheat import interp
from fracheat.gridfn import GridFunction, constant, critical_profile, make_grid, restrict_to_ball, sample_profile
from fracheat.harness.acceptance import random_step_profile
from fracheat.interp import (HardyWeights, InterpPairSpec, critical_pair, hardy_b, hardy_check,
                             interp_embedding_check, k_functional_upper, lebesgue_interp_sanity,
                             log_integral_estimates_check, maximal_bound_check,
                             primed_norm_weights, supercritical_pair, truncation_table)
from fracheat.rearrange import StepProfile
from fracheat.zygmund import NormSpec, norm

seeds = st.integers(0, 100_000)
PLAIN = InterpPairSpec.from_endpoints(1.0, 4.0, 2.0 / 3.0, space_family="plain_lebesgue")


def two_level() -> StepProfile:
    return StepProfile(np.array([0.0, 1.0, 9.0]), np.array([4.0, 1.0]))


def test_pair_validation():
    with pytest.raises(ValueError):
        InterpPairSpec(1.0, 4.0, 2.0, 0.5)
    with pytest.raises(ValueError):
        InterpPairSpec(2.0, 1.0, 1.5, 0.5)
    p = InterpPairSpec.from_endpoints(1.0, 4.0, 2.0 / 3.0)
    assert p.q == pytest.approx(2.0, rel=1e-15)


def test_named_pairs():
    c = critical_pair(2, 1.0, 1.5)
    assert (c.q, c.kappa, c.alpha) == (2.0, 0.5, 2.0)
    assert c.q1 == pytest.approx(3.0)
    s = supercritical_pair(3.0, 4.0 / 3.0, 3.0)
    assert s.q == pytest.approx(4.0) and s.q1 == pytest.approx(6.0) and s.alpha == 0.0


def test_k_of_zero_is_zero():
    z = GridFunction(make_grid(1, 4.0, 64), np.zeros(64))
    assert k_functional_upper(z, 1.0, PLAIN) == 0.0


def test_k_large_lambda_bounded_by_x0_norm():
    f = two_level()
    x0 = norm(f, PLAIN.endpoint_specs()[0])
    assert k_functional_upper(f, 1e12, PLAIN) <= x0 * (1 + 1e-12)


@pytest.mark.parametrize("lam", [0.01, 0.3, 1.0, 2.5, 100.0])
def test_k_two_level_against_brute_force_tau_grid(lam):
    # f = 4 on measure 1, 1 on measure 8; f0 = f chi(|f| > tau), f1 = f chi(|f| <= tau)
    taus = np.linspace(0.0, 5.0, 10_000)
    best = math.inf
    for tau in taus:
        hi = [(v, m) for v, m in ((4.0, 1.0), (1.0, 8.0)) if v > tau]
        lo = [(v, m) for v, m in ((4.0, 1.0), (1.0, 8.0)) if v <= tau]
        n0 = sum(v * m for v, m in hi)
        n1 = sum(v**4 * m for v, m in lo) ** 0.25
        best = min(best, n0 + lam * n1)
    assert k_functional_upper(two_level(), lam, PLAIN) == pytest.approx(best, rel=1e-3)


@given(seeds)
def test_k_monotone_concave_and_below_endpoints(seed):
    prof = random_step_profile(np.random.default_rng(seed))
    pair = critical_pair(2, 1.0, 1.5)
    table = truncation_table(prof, pair)
    lam = np.geomspace(1e-3, 1e3, 200)
    k = table.k_upper(lam)
    assert np.all(np.diff(k) >= -1e-9)
    # concavity: slopes between consecutive points do not increase
    slopes = np.diff(k) / np.diff(lam)
    assert np.all(np.diff(slopes) <= 1e-9 * np.maximum(1.0, np.abs(slopes[1:])))
    x0, x1 = (norm(prof, s) for s in pair.endpoint_specs())
    assert np.all(k <= np.minimum(x0, lam * x1) + 1e-9)


def test_embedding_indicator():
    g = make_grid(1, 4.0, 64)
    ind = restrict_to_ball(constant(g), np.zeros(1), 1.0)
    pair = InterpPairSpec.from_endpoints(1.0, 4.0, 2.0 / 3.0)
    assert interp_embedding_check(ind, pair).holds


@given(seeds)
def test_embedding_random_profiles(seed):
    prof = random_step_profile(np.random.default_rng(seed))
    for pair in (critical_pair(2, 1.0, 1.5), supercritical_pair(3.0, 4.0 / 3.0, 3.0)):
        rep = interp_embedding_check(prof, pair)
        assert rep.holds, (rep.lhs, rep.rhs)


def test_embedding_mu_c():
    g = make_grid(2, 4.0, 128)
    mu = restrict_to_ball(sample_profile(g, critical_profile(1.0, 2)), np.zeros(2), 1.0)
    rep = interp_embedding_check(mu, critical_pair(2, 1.0, 1.5))
    assert rep.holds


def test_embedding_rejects_plain_family():
    with pytest.raises(ValueError):
        interp_embedding_check(two_level(), PLAIN)


@given(seeds)
def test_lebesgue_sanity_within_factor_four(seed):
    prof = random_step_profile(np.random.default_rng(seed))
    rep = lebesgue_interp_sanity(prof, PLAIN)
    assert 0.25 <= rep.ratio <= 4.0


def test_hardy_unit_weights():
    grid = np.linspace(0.0, 1.0, 2001)
    w = HardyWeights("lower_limit", (0.0, 1.0), lambda t: np.ones_like(t),
                     lambda t: np.ones_like(t), 1.0, grid)
    assert hardy_b(w) == pytest.approx(1.0, abs=1e-3)
    rep = hardy_check(w, lambda t: 1.0 + np.sin(7 * t) ** 2)
    assert rep.bound_ok is True
    assert rep.lhs <= rep.B * rep.rhs


def test_hardy_upper_limit_direction():
    grid = np.linspace(0.0, 1.0, 2001)
    w = HardyWeights("upper_limit", (0.0, 1.0), lambda t: np.ones_like(t),
                     lambda t: np.ones_like(t), 2.0, grid)
    rep = hardy_check(w, lambda t: np.exp(-t))
    assert rep.bound_ok is True


def test_hardy_zero_function():
    grid = np.geomspace(1e-6, 1.0, 500)
    w = primed_norm_weights(2.0, 1.0, 1, grid, (0.0, 1.0))
    rep = hardy_check(w, np.zeros_like(grid))
    assert rep.lhs == 0.0


@pytest.mark.parametrize("pair", [1, 2])
def test_primed_norm_weights_bounded(pair):
    grid = np.geomspace(1e-8, 1.0, 1500)
    w = primed_norm_weights(2.0, 1.0, pair, grid, (0.0, 1.0))
    rng = np.random.default_rng(pair)
    for _ in range(20):
        c, e = rng.lognormal(0, 1, 3), rng.uniform(-0.9, 1.0, 3)
        rep = hardy_check(w, sum(ci * grid**ei for ci, ei in zip(c, e)))
        assert math.isfinite(rep.B)
        assert rep.bound_ok is True


@given(seeds, st.floats(0.01, 100.0))
def test_hardy_verdict_scale_invariant(seed, c):
    grid = np.geomspace(1e-6, 1.0, 400)
    w = primed_norm_weights(2.0, 1.0, 1, grid, (0.0, 1.0))
    u, v = w.tabulate()[1:]
    scaled = HardyWeights(w.direction, w.interval, c * u, v, w.q, grid)
    f = np.random.default_rng(seed).lognormal(size=grid.shape)
    a, b = hardy_check(w, f), hardy_check(scaled, f)
    assert b.lhs == pytest.approx(c * a.lhs, rel=1e-12)
    assert b.B == pytest.approx(c * a.B, rel=1e-12)
    assert a.bound_ok == b.bound_ok


def test_hardy_unverifiable_when_b_diverges():
    # U = t^-3/2, V = 1, q = 2: (int_s^1 t^-3)^(1/2) s^(1/2) ~ s^(-1/2) is unbounded at 0
    grid = np.geomspace(1e-8, 1.0, 400)
    w = HardyWeights("lower_limit", (0.0, 1.0), lambda t: t**-1.5, lambda t: np.ones_like(t),
                     2.0, grid)
    rep = hardy_check(w, np.ones_like(grid))
    assert not rep.verifiable and rep.bound_ok is None


def test_hardy_finite_b_near_singular_end():
    # U = 1/t, V = 1, q = 2: (1/s - 1)^(1/2) s^(1/2) stays below 1
    grid = np.geomspace(1e-8, 1.0, 400)
    w = HardyWeights("lower_limit", (0.0, 1.0), lambda t: 1.0 / t, lambda t: np.ones_like(t),
                     2.0, grid)
    rep = hardy_check(w, np.ones_like(grid))
    assert rep.B == pytest.approx(1.0, abs=1e-3)
    assert rep.bound_ok is True


def test_log_integral_case1_trivial():
    rep = log_integral_estimates_check("lem31_1", q=0.0, alpha=0.0)
    assert rep.fitted_C == pytest.approx(1.0, rel=1e-6)
    assert rep.stable


@pytest.mark.parametrize("case,kw", [("lem31_1", dict(q=0.5, alpha=2.0)),
                                     ("lem31_2", dict(alpha=-2.0, S=1.0)),
                                     ("lem31_3", dict(q=-2.0, alpha=3.0))])
def test_log_integral_cases_stable(case, kw):
    rep = log_integral_estimates_check(case, **kw)
    assert math.isfinite(rep.fitted_C) and rep.stable


@pytest.mark.parametrize("case,kw", [("lem31_1", dict(q=-1.0)), ("lem31_2", dict(alpha=-1.0)),
                                     ("lem31_3", dict(q=-1.0)), ("nope", {})])
def test_log_integral_hypotheses_enforced(case, kw):
    with pytest.raises(ValueError):
        log_integral_estimates_check(case, **kw)


def test_log_integral_case2_closed_form():
    # d/ds Phi(1/s)^-1 = Phi(1/s)^-2 / (s (1 + e s)) <= s^-1 Phi(1/s)^-2, so C >= 1
    # and the integral equals int_0^s ... which is below Phi(1/s)^-1 (1 + e S)
    rep = log_integral_estimates_check("lem31_2", alpha=-2.0, S=1.0)
    assert 1.0 <= rep.fitted_C <= 1.0 + math.e


@given(seeds, st.floats(1.0, 4.0), st.floats(0.0, 3.0))
def test_maximal_case1_constant_one(seed, r, alpha):
    prof = random_step_profile(np.random.default_rng(seed))
    rep = maximal_bound_check("lem33_1", prof, r, alpha)
    assert rep.holds


def test_maximal_case2_and_case3():
    prof = random_step_profile(np.random.default_rng(0))
    assert maximal_bound_check("lem33_2", prof, 2.0, 0.0).holds
    g = make_grid(2, 4.0, 128)
    mu = restrict_to_ball(sample_profile(g, critical_profile(1.0, 2)), np.zeros(2), 1.0)
    support = np.count_nonzero(mu.values) * g.cell_measure
    rep = maximal_bound_check("lem33_3", mu, 1.0, 1.0, support)
    assert rep.holds


@pytest.mark.parametrize("args", [("lem33_2", 1.0, 0.0, None), ("lem33_3", 2.0, 1.0, 10.0),
                                  ("lem33_3", 1.0, 0.0, 10.0), ("lem33_3", 1.0, 1.0, 1e-6),
                                  ("nope", 1.0, 1.0, None)])
def test_maximal_hypotheses_enforced(args):
    case, r, alpha, E = args
    with pytest.raises(ValueError):
        maximal_bound_check(case, random_step_profile(np.random.default_rng(1)), r, alpha, E)
