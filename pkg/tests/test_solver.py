from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from fracheat import solver
from fracheat.gridfn import GridFunction, constant, delta_like, make_grid
from fracheat.solver import (SolveConfig, SpaceTimeFunction, contraction_probe, duhamel_source,
                             duhamel_source_exact, forcing, graded_panels, picard_iterate,
                             picard_map, threshold_bisect, threshold_sweep, time_grid)
from fracheat.zygmund import norm

GRID = make_grid(2, 4.0, 32)
CFG = SolveConfig(1.0, 2.0, 0.25, n_time=16, stride=4)


def test_time_grid():
    t = time_grid(1.0, 16, 1.2)
    assert t[-1] == pytest.approx(1.0, rel=1e-15)
    assert np.all(np.diff(t) > 0) and t[0] > 0
    assert np.all(np.diff(np.diff(t)) > 0)  # graded toward 0
    np.testing.assert_allclose(time_grid(2.0, 16, 1.0), 2.0 * np.arange(1, 17) / 16)


def test_graded_panels_symmetric():
    b = graded_panels(1.0, 16, 1.3)
    assert b[0] == 0.0 and b[-1] == 1.0
    np.testing.assert_allclose(b, 1.0 - b[::-1], atol=1e-15)


@pytest.mark.parametrize("kw", [dict(theta=0.0), dict(theta=2.5), dict(p=1.0), dict(T=0.0),
                                dict(n_time=8), dict(grading=0.5), dict(epsilon=0.0),
                                dict(regime="bogus"), dict(divergence_cap=1.0)])
def test_solve_config_rejects(kw):
    base = dict(theta=1.0, p=2.0, T=0.25)
    base.update(kw)
    with pytest.raises(ValueError):
        SolveConfig(**base)


def test_regime_consistency():
    with pytest.raises(ValueError):
        SolveConfig(1.0, 3.0, 0.25).validate_for(GRID)
    with pytest.raises(ValueError):
        SolveConfig(1.0, 2.0, 0.25, regime="supercritical").validate_for(GRID)
    with pytest.raises(ValueError):
        SolveConfig(1.0, 2.0, 0.25).validate_for(make_grid(1, 4.0, 64))
    SolveConfig(1.0, 3.0, 0.25, regime="supercritical").validate_for(GRID)


def test_constant_source_is_linear_in_time():
    src = duhamel_source(constant(GRID, 2.0), CFG)
    for t, s in zip(src.times, src.slices):
        np.testing.assert_allclose(s.values, 2.0 * t, rtol=1e-12)
    assert all(src.quadrature_ok)


def test_delta_source_against_gaussian_time_integral():
    g = make_grid(1, 16.0, 1024)
    cfg = SolveConfig(2.0, 2.0, 0.5, n_time=16)
    src = duhamel_source(delta_like(g), cfg)
    x = g.axis()
    pick = (np.abs(x) > 0.5) & (np.abs(x) < 3.0)
    t = src.times[-1]

    def heat(xx):
        # the discrete delta sits on the two cells at +-h/2
        f = lambda s, y: math.exp(-y * y / (4 * s)) / math.sqrt(4 * math.pi * s)  # noqa: E731
        return 0.5 * sum(integrate.quad(f, 0.0, t, args=(xx + d,), epsabs=1e-14,
                                        epsrel=1e-12, limit=200)[0] for d in (g.h / 2, -g.h / 2))

    oracle = np.array([heat(xx) for xx in x[pick][::8]])
    got = src.slices[-1].values[pick][::8]
    np.testing.assert_allclose(got, oracle, rtol=1e-5)


def test_graded_source_matches_closed_form():
    mu = forcing(GRID, CFG)
    a, b = duhamel_source(mu, CFG), duhamel_source_exact(mu, CFG)
    err = max(np.max(np.abs(x.values - y.values)) / np.max(np.abs(y.values))
              for x, y in zip(a.slices, b.slices))
    assert err < 1e-5


def test_zero_forcing_converges_in_one_iteration():
    res = picard_iterate(GridFunction(GRID, np.zeros(GRID.shape)), CFG)
    assert res.report.verdict == "converged"
    assert res.report.iterations == 1
    assert res.solution.sup_abs() == 0.0


def test_linearised_heat_solution_is_the_source():
    g = make_grid(3, 8.0, 16)
    cfg = SolveConfig(2.0, 3.0, 0.1, n_time=16, nonlinear=False, stride=4)
    mu = forcing(g, cfg, 0.1)
    res = picard_iterate(mu, cfg)
    assert res.report.verdict == "converged"
    np.testing.assert_array_equal(res.solution.stack(), res.source.stack())


def test_small_critical_forcing_converges_with_contracting_ratios():
    res = picard_iterate(forcing(GRID, CFG, 0.5), CFG)
    rep = res.report
    assert rep.verdict == "converged"
    assert rep.final_ratio <= 0.5
    bound = solver.solution_bound(res, CFG)
    assert math.isfinite(bound.constant) and bound.constant > 0


def test_supercritical_converges():
    cfg = SolveConfig(1.0, 3.0, 0.25, n_time=16, stride=4, regime="supercritical")
    res = picard_iterate(forcing(GRID, cfg, 0.1), cfg)
    assert res.report.verdict == "converged"


def test_large_forcing_diverges():
    res = picard_iterate(forcing(GRID, CFG, 4.0), CFG)
    assert res.report.verdict == "diverged"
    assert res.report.note


def test_non_finite_iterates_reported_as_diverged():
    cfg = SolveConfig(1.0, 2.0, 0.25, n_time=16, stride=4, divergence_cap=1e300, max_iter=400)
    res = picard_iterate(forcing(GRID, cfg, 50.0), cfg)
    assert res.report.verdict == "diverged"
    assert "non-finite" in res.report.note


def _iterates(mu, cfg, n):
    src = duhamel_source(mu, cfg)
    out, u = [src], src
    for _ in range(n):
        u = picard_map(u, src, cfg)
        out.append(u)
    return out


def test_iterates_increase_for_nonnegative_forcing():
    its = _iterates(forcing(GRID, CFG, 1.0), CFG, 5)
    for a, b in zip(its, its[1:]):
        assert np.all(a.stack() <= b.stack() + 1e-9)


def test_comparison_principle():
    lo = picard_iterate(forcing(GRID, CFG, 0.5), CFG)
    hi = picard_iterate(forcing(GRID, CFG, 1.0), CFG)
    assert lo.report.verdict == hi.report.verdict == "converged"
    assert np.all(lo.solution.stack() <= hi.solution.stack() + 1e-9)


def test_metric_triangle_inequality_on_iterates():
    its = _iterates(forcing(GRID, CFG, 1.0), CFG, 3)
    d = lambda u, v: solver._metric(u - v, CFG, None)  # noqa: E731
    for a, b, c in ((its[0], its[1], its[2]), (its[1], its[3], its[0])):
        assert d(a, c) <= (d(a, b) + d(b, c)) * (1 + 1e-9)


def test_space_time_interpolation():
    src = duhamel_source(constant(GRID, 1.0), CFG)
    t = 0.5 * (src.times[3] + src.times[4])
    np.testing.assert_allclose(src.at(t).values, t, rtol=1e-12)
    assert np.all(src.at(0.0).values == 0.0)
    with pytest.raises(ValueError):
        src.at(2 * CFG.T)


def test_space_time_function_validation():
    f = constant(GRID)
    with pytest.raises(ValueError):
        SpaceTimeFunction(np.array([0.2, 0.1]), (f, f))
    with pytest.raises(ValueError):
        SpaceTimeFunction(np.array([0.1, 0.2]), (f, constant(make_grid(2, 2.0, 32))))


def test_inhomogeneous_estimate_constant_finite():
    rep = solver.inhomogeneous_estimate(forcing(GRID, CFG), CFG)
    assert 0 < rep.constant < math.inf


@pytest.mark.parametrize("regime,p", [("critical", 2.0), ("supercritical", 3.0)])
def test_contraction_exponent(regime, p):
    cfg = SolveConfig(1.0, p, 0.25, n_time=16, stride=4, regime=regime)
    rep = contraction_probe(forcing(GRID, cfg), cfg, n_pairs=2,
                            epsilons=[1e-3, 2e-3, 4e-3, 8e-3, 1.6e-2])
    assert abs(rep.epsilon_power - (p - 1)) <= 0.25
    assert np.all(rep.max_ratios > 0)


def test_threshold_sweep_monotone_with_zero():
    lams = [0.0, 0.5, 1.0, 2.0, 4.0]
    verdicts = threshold_sweep(CFG, forcing(GRID, CFG), lams)
    assert verdicts[0] == (0.0, True)
    flags = [ok for _, ok in verdicts]
    assert flags == sorted(flags, reverse=True)
    assert flags[-1] is False


def test_threshold_bisect_brackets():
    rep = threshold_bisect(CFG, 1.0, 2.0, forcing(GRID, CFG), shrink=2.0**-6)
    lo, hi = rep.lambda_star_interval
    assert 1.0 <= lo < hi <= 4.0
    assert rep.widenings == 1  # lambda=2 still converges on this grid
    assert hi - lo <= (4.0 - 1.0) * 2.0**-6 * (1 + 1e-12)
    seen = dict(rep.evaluations)
    assert seen[lo] == "converged" and seen[hi] == "diverged"
    with pytest.raises(ValueError):
        threshold_bisect(CFG, 2.0, 1.0, forcing(GRID, CFG))


def test_gauges_are_recorded():
    res = picard_iterate(forcing(GRID, CFG, 0.5), CFG)
    gauge = norm(forcing(GRID, CFG, 0.5), CFG.forcing_gauge_spec(2), CFG.stride)
    assert res.report.forcing_gauge == gauge
