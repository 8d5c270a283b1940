from __future__ import annotations

import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from fracheat.gridfn import (GridFunction, SingularProfileSpec, constant, critical_profile,
                             delta_like, make_grid, phi, restrict_to_ball, sample_profile)

from conftest import grid_function


def test_make_grid_1d_arithmetic():
    g = make_grid(1, 32.0, 1024)
    assert g.h == 0.0625
    assert g.total_measure == 64.0


def test_make_grid_2d_cell_measure():
    g = make_grid(2, 4.0, 512)
    assert g.h == 0.015625
    assert g.cell_measure == pytest.approx(2.4414e-4, rel=1e-4)


@pytest.mark.parametrize("args", [(1, 32.0, 1000), (1, 0.0, 64), (1, -1.0, 64), (4, 1.0, 16),
                                  (0, 1.0, 16), (1, 1.0, 8)])
def test_make_grid_rejects(args):
    with pytest.raises(ValueError):
        make_grid(*args)


def test_cell_centres():
    g = make_grid(1, 2.0, 16)
    np.testing.assert_allclose(g.axis(), -2.0 + (np.arange(16) + 0.5) * 0.25)


def test_constant_profile_samples_to_one():
    g = make_grid(1, 4.0, 64)
    f = sample_profile(g, SingularProfileSpec("constant"))
    assert np.all(f.values == 1.0)
    assert np.all(constant(g, 2.5).values == 2.5)


def test_critical_profile_away_from_origin():
    g = make_grid(2, 4.0, 64)
    f = sample_profile(g, critical_profile(1.0, 2))
    r = g.radius()
    far = r > 4 * g.h
    expected = r[far] ** -2.0 * np.log(np.e + 1.0 / r[far]) ** -2.0
    np.testing.assert_allclose(f.values[far], expected, rtol=1e-12)


def test_power_cell_average_1d():
    # average of |x|^(-1/2) over [0, h] is 2 h^(-1/2)
    g = make_grid(1, 2.0, 64)
    f = sample_profile(g, SingularProfileSpec("power", exponent=-0.5, radius=1.0))
    centre = g.points_per_axis // 2
    for j in (centre - 1, centre):
        assert f.values[j] == pytest.approx(2.0 * g.h**-0.5, rel=1e-10)


def test_power_cell_average_3d_against_spherical_oracle():
    # int over [0, 1]^3 of r^-2: split by the largest coordinate and integrate the
    # radial extent in spherical coordinates, giving 3 int_0^(pi/4) log(1 + sec^2) dphi
    mp.mp.dps = 20
    total = 3 * mp.quad(lambda ph: mp.log(1 + mp.sec(ph) ** 2), [0, mp.pi / 4])
    g = make_grid(3, 4.0, 32)
    f = sample_profile(g, SingularProfileSpec("power", exponent=-2.0))
    assert f.values.max() == pytest.approx(float(total) / g.h**2, rel=1e-6)
    assert f.values.max() == pytest.approx(30.6964968897749, rel=1e-9)


def test_critical_cell_average_2d_against_log_substitution_oracle():
    # int_0^R r^-1 Phi(1/r)^-2 dr = 1/w(R) + e int_w(R)^inf w^-2 / (e^w - e) dw, w = log(e + 1/r)
    mp.mp.dps = 30
    g = make_grid(2, 4.0, 256)
    h = mp.mpf(g.h)

    def radial(R):
        wR = mp.log(mp.e + 1 / R)
        return 1 / wR + mp.e * mp.quad(lambda w: w**-2 / (mp.exp(w) - mp.e), [wR, wR + 1, mp.inf])

    # cell [0, h]^2 in polar coordinates, symmetric about the diagonal
    ang = 2 * mp.quad(lambda t: radial(h / mp.cos(t)), [0, mp.pi / 4])
    oracle = float(ang / h**2)
    f = sample_profile(g, critical_profile(1.0, 2))
    assert f.values.max() == pytest.approx(oracle, rel=1e-6)
    assert f.values.max() == pytest.approx(475.38730094806147, rel=1e-9)


def test_sampled_mass_within_recorded_error():
    g = make_grid(1, 2.0, 256)
    f = sample_profile(g, SingularProfileSpec("power", exponent=-0.5, radius=1.0))
    assert f.error_bound is not None
    assert abs(f.integral() - 4.0) <= f.error_bound


def test_restrict_large_radius_is_identity():
    f = grid_function(0, dim=2, M=32)
    assert restrict_to_ball(f, np.zeros(2), 4.0 * math.sqrt(2) + 1e-9) is f


def test_restrict_constant_to_unit_ball():
    g = make_grid(1, 4.0, 64)
    f = restrict_to_ball(constant(g), np.zeros(1), 1.0)
    assert abs(f.integral() - 2.0) <= g.h


@given(st.integers(0, 10_000), st.floats(0.1, 3.0), st.floats(-4.0, 4.0))
def test_restrict_idempotent_and_contracting(seed, radius, c):
    f = grid_function(seed, dim=1, M=64, signed=True)
    once = restrict_to_ball(f, np.array([c]), radius)
    twice = restrict_to_ball(once, np.array([c]), radius)
    np.testing.assert_array_equal(once.values, twice.values)
    assert np.all(np.abs(once.values) <= np.abs(f.values))


def test_restrict_uses_torus_distance():
    g = make_grid(1, 4.0, 64)
    f = restrict_to_ball(constant(g), np.array([3.9]), 0.5)
    # the ball around 3.9 wraps to the left end of the box
    assert f.values[0] == 1.0 and f.values[-1] == 1.0


def test_delta_like_has_unit_mass():
    for dim in (1, 2, 3):
        g = make_grid(dim, 2.0, 16)
        d = delta_like(g)
        assert d.integral() == pytest.approx(1.0, rel=1e-14)
        assert np.count_nonzero(d.values) == 2**dim


def test_phi_values():
    assert phi(0.0) == 1.0
    assert phi(np.e**2 - np.e) == pytest.approx(2.0, rel=1e-15)


def test_grid_function_is_immutable():
    f = grid_function(1)
    with pytest.raises(ValueError):
        f.values[0] = 1.0


def test_mismatched_grids_rejected():
    a = GridFunction(make_grid(1, 4.0, 64), np.ones(64))
    b = GridFunction(make_grid(1, 2.0, 64), np.ones(64))
    with pytest.raises(ValueError):
        a + b
