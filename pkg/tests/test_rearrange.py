from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fracheat.gridfn import GridFunction, constant, make_grid
from fracheat.harness.acceptance import random_step_profile
from fracheat.rearrange import (StepProfile, distribution_function, maximal_average,
                                oneil_bound_check, product_average, rearrangement)

from conftest import compact_function, grid_function

seeds = st.integers(0, 100_000)


def test_distribution_function_constant():
    f = constant(make_grid(1, 32.0, 1024))
    assert distribution_function(f, 0.5) == 64.0
    assert distribution_function(f, 1.0) == 0.0


@given(seeds, st.floats(0.0, 5.0))
def test_distribution_function_matches_scan(seed, lam):
    f = grid_function(seed, dim=2, M=16, signed=True)
    count = sum(1 for v in f.values.ravel() if abs(v) > lam)
    assert distribution_function(f, lam) == count * f.spec.cell_measure


def test_indicator_rearranges_to_interval():
    g = make_grid(1, 4.0, 64)
    v = np.zeros(64)
    v[[3, 10, 11, 40]] = 1.0
    prof = rearrangement(GridFunction(g, v))
    np.testing.assert_array_equal(prof.breakpoints, [0.0, 4 * g.h])
    np.testing.assert_array_equal(prof.values, [1.0])


def test_constant_rearranges_to_constant():
    g = make_grid(2, 2.0, 16)
    prof = rearrangement(constant(g, 3.0))
    assert prof.support == g.total_measure
    np.testing.assert_array_equal(prof.values, [3.0])


@given(seeds, st.floats(1.0, 5.0))
def test_equimeasurability(seed, q):
    f = grid_function(seed, dim=2, M=16, signed=True)
    direct = np.sum(np.abs(f.values) ** q) * f.spec.cell_measure
    assert rearrangement(f).integral(q=q) == pytest.approx(direct, rel=1e-12)


@given(seeds, st.floats(-5.0, 5.0).filter(lambda k: abs(k) > 1e-3))
def test_scaling(seed, k):
    f = grid_function(seed, signed=True)
    a, b = rearrangement(k * f), rearrangement(f)
    np.testing.assert_array_equal(a.breakpoints, b.breakpoints)
    np.testing.assert_allclose(a.values, abs(k) * b.values, rtol=1e-15)


@given(seeds, st.floats(0.25, 4.0))
def test_power_commutes_with_rearrangement(seed, q):
    f = grid_function(seed, signed=True)
    a, b = rearrangement(abs(f) ** q), rearrangement(f)
    np.testing.assert_array_equal(a.breakpoints, b.breakpoints)
    np.testing.assert_allclose(a.values, b.values**q, rtol=1e-13)


@given(seeds)
def test_subadditivity(seed):
    f, g = grid_function(seed, signed=True), grid_function(seed + 1, signed=True)
    fs, gs, hs = rearrangement(f), rearrangement(g), rearrangement(f + g)
    lattice = np.linspace(0.0, 4.0, 41)
    t, s = np.meshgrid(lattice, lattice)
    assert np.all(hs(t + s) <= fs(t) + gs(s) + 1e-12)


@given(seeds)
def test_maximal_dominates_rearrangement(seed):
    prof = rearrangement(grid_function(seed))
    s = np.geomspace(1e-4, 10.0, 400)
    # equality on the first step holds only up to rounding of (v s) / s
    assert np.all(prof.maximal(s) >= prof(s) * (1 - 1e-12))


@given(seeds)
def test_product_maximal_bound(seed):
    f, g = grid_function(seed, signed=True), grid_function(seed + 7, signed=True)
    s = np.geomspace(1e-3, 8.0, 200)
    lhs = rearrangement(f * g).maximal(s)
    rhs = product_average(rearrangement(f), rearrangement(g), s)
    assert np.all(lhs <= rhs + 1e-9)


def test_maximal_average_examples():
    ind = StepProfile(np.array([0.0, 1.0]), np.array([1.0]))
    assert maximal_average(ind, 2.0) == 0.5
    c = rearrangement(constant(make_grid(1, 4.0, 64), 2.0))
    for s in (0.1, 1.0, 8.0):
        assert maximal_average(c, s) == pytest.approx(2.0, rel=1e-15)
    with pytest.raises(ValueError):
        maximal_average(c, 0.0)


@given(seeds, st.floats(1e-3, 50.0))
def test_maximal_average_matches_midpoint_oracle(seed, s):
    prof = random_step_profile(np.random.default_rng(seed))
    # midpoint rule on the breakpoints refined by s is exact for a step function
    nodes = np.union1d(prof.breakpoints, [s])
    nodes = nodes[nodes <= s]
    mids = 0.5 * (nodes[1:] + nodes[:-1])
    oracle = np.sum(prof(mids) * np.diff(nodes)) / s
    assert maximal_average(prof, s) == pytest.approx(oracle, rel=1e-10, abs=1e-300)


def test_ties_are_deduplicated():
    g = make_grid(1, 4.0, 16)
    v = np.array([3, 1, 3, 2, 2, 0, 1, 3] * 2, dtype=float)
    prof = rearrangement(GridFunction(g, v))
    np.testing.assert_array_equal(prof.values, [3.0, 2.0, 1.0])
    np.testing.assert_allclose(prof.breakpoints, np.array([0, 6, 10, 14]) * g.h)


def test_step_profile_validation():
    with pytest.raises(ValueError):
        StepProfile(np.array([0.0, 1.0, 2.0]), np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        StepProfile(np.array([0.5, 1.0]), np.array([1.0]))


def test_oneil_indicator_pair():
    g = make_grid(1, 4.0, 256)
    x = g.axis()
    f = GridFunction(g, ((x >= -0.5) & (x < 0.5)).astype(float))
    rep = oneil_bound_check(f, f, 1.0)
    assert np.isfinite(rep.lhs) and np.isfinite(rep.rhs)
    assert rep.holds and not rep.wraps
    # the triangle function f*f has (f*f)**(1) = 3/4
    assert rep.lhs == pytest.approx(0.75, abs=2 * g.h)


def test_oneil_zero():
    g = make_grid(1, 4.0, 64)
    z = GridFunction(g, np.zeros(64))
    rep = oneil_bound_check(z, z, 1.0)
    assert rep.lhs == 0.0 and rep.rhs == 0.0 and rep.holds


@given(seeds, st.floats(0.01, 4.0))
def test_oneil_random_small_support(seed, s):
    f, g = compact_function(seed), compact_function(seed + 1)
    rep = oneil_bound_check(f, g, s)
    assert not rep.wraps
    assert rep.holds
