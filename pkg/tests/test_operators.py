"""Tests of the pointwise static operators and their origin limits.

The origin limits are checked against the quadrature oracle from
test_geometry (cubic mean of eta''') and against closed forms of the
round-sphere profile.
"""

import math

import numpy as np
import pytest

from wmlab import geometry, operators
from wmlab.errors import ConfigurationError
from wmlab.operators import (RadialField, apply_nonlinearity,
                             decompose_static, epsilon_remainder, gauge_mode,
                             nonlinear_remainder, potential,
                             quadratic_leading_term, static_residual)

from conftest import make_target
from test_geometry import cubic_mean_oracle

T0 = make_target(3, 0.0)
GRID = np.linspace(0.0, 20.0, 801)


def flat_base(profiles, d=3):
    sol = profiles(d, 0.0)
    return RadialField(GRID, sol.psi1(GRID), parity="even", component=1)


# ---------------------------------------------------------------------------
# RadialField container

def test_field_validation():
    with pytest.raises(ConfigurationError):
        RadialField(GRID, GRID[:-1])
    with pytest.raises(ConfigurationError):
        RadialField(GRID[::-1], np.ones(GRID.size))
    with pytest.raises(ConfigurationError):
        RadialField(GRID - 1.0, np.ones(GRID.size))
    with pytest.raises(ConfigurationError):
        RadialField(GRID, np.ones(GRID.size), parity="both")
    with pytest.raises(ConfigurationError):
        RadialField(GRID, np.ones(GRID.size), component=3)
    with pytest.raises(ConfigurationError):
        RadialField(GRID, np.ones(GRID.size), parity="odd")  # nonzero at 0


def test_field_parity_defect():
    even = RadialField(GRID, np.cos(GRID), parity="even")
    assert abs(even.parity_defect()) <= 1e-6
    odd = RadialField(GRID, np.sin(GRID), parity="odd")
    assert odd.parity_defect() == 0.0
    skew = RadialField(GRID, GRID + 1.0, parity="even")
    assert abs(skew.parity_defect() - 1.0) <= 1e-10


def test_with_values_keeps_grid():
    f = RadialField(GRID, np.cos(GRID), parity="even", component=1)
    g = f.with_values(np.sin(GRID), parity="odd", component=2)
    assert g.parity == "odd" and g.component == 2
    assert g.grid is f.grid or np.array_equal(g.grid, f.grid)


# ---------------------------------------------------------------------------
# forcing term N

def test_nonlinearity_of_zero_is_zero():
    z = RadialField(GRID, np.zeros(GRID.size), parity="even", component=1)
    out = apply_nonlinearity(T0, z)
    assert np.all(out.values == 0.0)


def test_nonlinearity_origin_limit_flat(profiles):
    # (n-3) b^3 eta'''(0)/6 with n = 5, b = 2, eta'''(0) = 4: exactly 32/3
    out = apply_nonlinearity(T0, flat_base(profiles))
    assert out.values[0] == pytest.approx(32.0 / 3.0, abs=1e-14)
    # same limit from the quadrature oracle: eta(a)/a^3 -> eta'''(0)/6
    a = 1e-3
    oracle = 2.0 * 2.0 ** 3 * cubic_mean_oracle(T0, a) / a ** 3
    assert out.values[0] == pytest.approx(oracle, rel=1e-5)


def test_nonlinearity_finite_and_even(profiles):
    t = make_target(3, 0.05)
    out = apply_nonlinearity(t, flat_base(profiles))
    assert np.all(np.isfinite(out.values))
    assert out.parity == "even" and out.component == 2
    # h^4 truncation of the origin stencil on a curved output, not asymmetry
    assert abs(out.parity_defect()) <= 1e-3


# ---------------------------------------------------------------------------
# linearization potential V

def test_potential_origin_value_flat(profiles):
    out = potential(T0, flat_base(profiles))
    # (n-3) b^2 eta'''(0)/2 = 2 * 4 * 2 = 16
    assert out.values[0] == pytest.approx(16.0, abs=1e-13)


def test_potential_closed_form_d5(profiles):
    # n = 7: V(1) = 4 (1 - cos(2 f0(1))) with f0(1) = pi/3, so V(1) = 6
    sol = profiles(5, 0.0)
    base = RadialField(GRID, sol.psi1(GRID), parity="even", component=1)
    out = potential(make_target(5, 0.0), base)
    i = int(np.argmin(np.abs(GRID - 1.0)))
    assert GRID[i] == 1.0
    assert out.values[i] == pytest.approx(6.0, abs=1e-12)


def test_potential_of_zero_vanishes():
    z = RadialField(GRID, np.zeros(GRID.size), parity="even", component=1)
    assert np.all(potential(T0, z).values == 0.0)


def test_potential_weighted_limit(profiles):
    # rho^2 V approaches (n-3) eta'(c1); the approach has a 1/rho tail, so
    # compare through one Richardson step over the dyadic stations
    t = make_target(3, 0.05)
    sol = profiles(3, 0.05)
    grid = np.linspace(0.0, 200.0, 2001)
    base = RadialField(grid, sol.psi1(grid), parity="even", component=1)
    r2v = grid ** 2 * potential(t, base).values
    v50, v100, v200 = (r2v[int(np.argmin(np.abs(grid - r)))]
                       for r in (50.0, 100.0, 200.0))
    limit = (t.n - 3) * geometry.eta_deriv(t, sol.c1, 1)
    rich = 2.0 * v200 - v100
    assert rich == pytest.approx(limit, rel=0.01)
    assert abs(rich - limit) < abs(v200 - limit)


# ---------------------------------------------------------------------------
# quadratic remainder

def test_remainder_of_zero_increment(profiles):
    z = RadialField(GRID, np.zeros(GRID.size), parity="even", component=1)
    out = nonlinear_remainder(make_target(3, 0.05), flat_base(profiles), z)
    assert np.all(out.values == 0.0)


def test_remainder_quadratic_scaling(profiles):
    t = make_target(3, 0.05)
    base = flat_base(profiles)
    u1 = RadialField(GRID, np.exp(-GRID ** 2) * (1.0 + 0.3 * GRID ** 2),
                     parity="even", component=1)
    lead = quadratic_leading_term(t, base, u1)

    def defect(s):
        small = nonlinear_remainder(t, base, u1.with_values(s * u1.values))
        return np.max(np.abs(small.values / s ** 2 - lead.values))

    d2, d3 = defect(1e-2), defect(1e-3)
    assert d3 <= 1e-2  # remainder/s^2 has converged onto the half-Hessian
    assert d2 / d3 == pytest.approx(10.0, rel=0.15)  # error linear in s


def test_remainder_grid_mismatch():
    base = RadialField(GRID, np.ones(GRID.size), parity="even", component=1)
    other = RadialField(GRID[:-1], np.ones(GRID.size - 1), parity="even",
                        component=1)
    with pytest.raises(ConfigurationError):
        nonlinear_remainder(T0, base, other)


# ---------------------------------------------------------------------------
# deformation remainder

def test_epsilon_remainder_vanishes_at_zero(profiles):
    out = epsilon_remainder(T0, flat_base(profiles))
    assert np.all(out.values == 0.0)


def test_epsilon_remainder_linear_smallness(profiles):
    # sup|R_eps|/eps -> (n-3) b^3 |d eta'''(0)/d eps|/6 = 2*8*4 = 64 at the
    # origin, where the sup is attained
    base = flat_base(profiles)
    for eps in (1e-2, 1e-3):
        out = epsilon_remainder(make_target(3, eps), base)
        peak = np.max(np.abs(out.values)) / eps
        assert int(np.argmax(np.abs(out.values))) == 0
        assert peak == pytest.approx(64.0, rel=1e-4)


def test_epsilon_remainder_pointwise_direct(profiles):
    t = make_target(3, 0.05)
    base = flat_base(profiles)
    out = epsilon_remainder(t, base)
    sol = profiles(3, 0.0)
    for rho in (0.5, 1.0, 2.0):
        i = int(np.argmin(np.abs(GRID - rho)))
        f_here = float(sol.evaluate(rho))
        direct = (t.n - 3) * (geometry.eta_deriv(t, f_here)
                              - geometry.eta_deriv(T0, f_here)) / rho ** 3
        assert out.values[i] == pytest.approx(direct, abs=1e-14)
    # rho = 1 is degenerate for the flat base: f0(1) = pi/2 where w w'
    # vanishes for every eps, so both sides are exactly zero there
    i = int(np.argmin(np.abs(GRID - 1.0)))
    assert out.values[i] == 0.0
    i = int(np.argmin(np.abs(GRID - 0.5)))
    assert out.values[i] != 0.0


# ---------------------------------------------------------------------------
# static decomposition identity

def test_decomposition_identity(profiles):
    t = make_target(3, 0.05)
    base_profile = profiles(3, 0.0)
    dec = decompose_static(t, base_profile, GRID)
    base = RadialField(GRID, base_profile.psi1(GRID), parity="even",
                       component=1)
    rng = np.random.default_rng(5)
    for _ in range(5):
        c = rng.uniform(-0.5, 0.5, size=3)
        phi_vals = np.exp(-GRID ** 2 / 4) * (c[0] + c[1] * np.cos(GRID)
                                             + c[2] * GRID ** 2 * np.exp(-GRID))
        phi = RadialField(GRID, phi_vals, parity="even", component=1)
        lhs = (apply_nonlinearity(t, base.with_values(base.values + phi.values)).values
               - apply_nonlinearity(T0, base).values)
        rhs = ((dec.potential_round.values + dec.potential_shift.values) * phi.values
               + dec.remainder.values
               + nonlinear_remainder(t, base, phi).values)
        assert np.max(np.abs(lhs - rhs)) <= 1e-11


def test_decomposition_requires_round_base(profiles):
    with pytest.raises(ConfigurationError):
        decompose_static(make_target(3, 0.05), profiles(3, 0.05), GRID)
    with pytest.raises(ConfigurationError):
        decompose_static(make_target(5, 0.05), profiles(3, 0.0), GRID)


# ---------------------------------------------------------------------------
# gauge mode

def test_gauge_mode_flat_closed_form(profiles):
    g1, g2 = gauge_mode(profiles(3, 0.0), GRID)
    # first component is f0' = 2/(1 + rho^2), i.e. proportional to the
    # normalized mode 1/(rho^2 + n - 4)
    assert np.max(np.abs(g1.values * (GRID ** 2 + 1.0) / 2.0 - 1.0)) <= 1e-10
    assert g1.values[0] == pytest.approx(2.0, abs=1e-12)  # 2/sqrt(n-4)
    # after dividing by the normalization 2 sqrt(n-4), the origin value
    # is 1/(n-4)
    assert g1.values[0] / (2.0 * math.sqrt(1.0)) == pytest.approx(1.0, abs=1e-12)


def test_gauge_mode_component_identity(profiles):
    sol = profiles(3, 0.05)
    g1, g2 = gauge_mode(sol, GRID)
    fp = sol.evaluate(GRID, 1)
    fpp = sol.evaluate(GRID, 2)
    assert np.max(np.abs(g1.values - fp)) == 0.0
    assert np.max(np.abs(g2.values - (2.0 * fp + GRID * fpp))) == 0.0
    assert np.max(np.abs(g1.values - sol.psi2(GRID))) == 0.0


# ---------------------------------------------------------------------------
# static residual

def test_static_residual_small(profiles):
    for d, eps in ((3, 0.0), (3, 0.05), (5, 0.05)):
        r1, r2 = static_residual(profiles(d, eps))
        assert np.max(np.abs(r1.values)) <= 1e-10
        assert np.max(np.abs(r2.values)) <= 1e-10


def test_static_residual_flags_wrong_state(profiles):
    # scaling the profile breaks the static equation at order one
    sol = profiles(3, 0.0)
    r1, r2 = static_residual(sol, GRID)
    base = np.max(np.abs(r2.values))
    assert base <= 1e-10
    t = T0
    psi1 = RadialField(GRID, 1.1 * sol.psi1(GRID), parity="even", component=1)
    forced = apply_nonlinearity(t, psi1)
    assert np.max(np.abs(forced.values)) > 0.1
