"""Tests of the derivative stencils, radial norms and tail-decay fits.

The seminorm values are checked against scipy.integrate.quad applied to
closed-form derivatives of a Gaussian, an oracle with no shared code.
"""

import math
import warnings

import numpy as np
import pytest
from scipy import integrate

from wmlab import norms
from wmlab.errors import ConfigurationError, UnsupportedOrderError
from wmlab.norms import (AccuracyWarning, NormSpec, decay_exponent,
                         evaluate_norms, fractional_norm, radial_derivatives,
                         sobolev_seminorm, uniform_derivatives, weighted_sup)
from wmlab.operators import RadialField
from wmlab.profile import verification_grid

N_AMBIENT = 7


def gaussian_field(m=2801, r_max=14.0):
    grid = np.linspace(0.0, r_max, m)
    return RadialField(grid, np.exp(-grid * grid), parity="even")


def gaussian_seminorm_oracle(j, n=N_AMBIENT):
    """quad of the closed-form seminorm content of u = exp(-rho^2)."""
    u = lambda r: math.exp(-r * r)
    u1 = lambda r: -2 * r * math.exp(-r * r)
    u2 = lambda r: (4 * r * r - 2) * math.exp(-r * r)
    u3 = lambda r: (12 * r - 8 * r ** 3) * math.exp(-r * r)
    if j == 0:
        content = lambda r: u(r) ** 2
    elif j == 1:
        content = lambda r: u1(r) ** 2
    elif j == 2:
        content = lambda r: u2(r) ** 2 + (n - 1) * (u1(r) / r) ** 2
    else:
        content = lambda r: (u3(r) ** 2
                             + 3 * (n - 1) * (u2(r) / r - u1(r) / r ** 2) ** 2)
    val, _ = integrate.quad(lambda r: content(r) * r ** (n - 1), 0.0, np.inf,
                            limit=200)
    return math.sqrt(val)


# ---------------------------------------------------------------------------
# derivative stencils

def test_stencils_exact_on_quartic():
    h = 0.01
    x = np.arange(0, 101) * h
    d1, d2, d3 = uniform_derivatives(x ** 4, h, "even", 3)
    assert np.max(np.abs(d1 - 4 * x ** 3)) <= 1e-10
    assert np.max(np.abs(d2 - 12 * x ** 2)) <= 1e-8
    assert np.max(np.abs(d3 - 24 * x)) <= 1e-6


def test_stencil_convergence_order():
    def interior_error(m):
        x = np.linspace(0.0, 2.0, m + 1)
        d1, = uniform_derivatives(np.cos(3 * x), 2.0 / m, "even", 1)
        return np.max(np.abs(d1 + 3 * np.sin(3 * x))[: m // 2])

    ratio = interior_error(200) / interior_error(400)
    assert 12.0 < ratio < 20.0  # fourth order: halving h cuts the error 16x


def test_odd_parity_ghost_extension():
    h = 0.02
    x = np.arange(0, 200) * h
    d1, d2 = uniform_derivatives(np.sin(x), h, "odd", 2)
    assert abs(d1[0] - 1.0) <= 1e-8
    assert abs(d2[0]) <= 1e-7
    assert np.max(np.abs(d1 - np.cos(x))) <= 1e-7  # edge stencil is one order lower


def test_radial_derivatives_guards():
    field = RadialField(np.linspace(0.5, 1.5, 32), np.ones(32))
    with pytest.raises(ConfigurationError):
        radial_derivatives(field, 1)
    tiny = RadialField(np.linspace(0.0, 1.0, 6), np.ones(6))
    with pytest.raises(ConfigurationError):
        radial_derivatives(tiny, 1)
    coarse = RadialField(np.linspace(0.0, 1.0, 10), np.ones(10))
    with pytest.warns(AccuracyWarning):
        radial_derivatives(coarse, 1)
    geom = RadialField(np.geomspace(1e-3, 1.0, 32), np.ones(32))
    with pytest.raises(ConfigurationError):
        norms._grid_spacing(geom.grid)
    with pytest.raises(UnsupportedOrderError):
        uniform_derivatives(np.ones(32), 0.1, "even", 4)


# ---------------------------------------------------------------------------
# Sobolev seminorms

def test_gaussian_seminorms_match_quad_oracle():
    field = gaussian_field()
    for j in range(4):
        value = sobolev_seminorm(field, j, N_AMBIENT)
        assert value == pytest.approx(gaussian_seminorm_oracle(j), rel=1e-8)


def test_gaussian_seminorms_frozen():
    # regression pins of the implementation on the standard grid
    field = gaussian_field()
    expect = [0.383239808040162, 1.013957225018, 3.04187167452375,
              10.0887470077692]
    for j in range(4):
        assert sobolev_seminorm(field, j, N_AMBIENT) == pytest.approx(
            expect[j], rel=1e-12)


def test_seminorms_stable_under_halving():
    coarse, fine = gaussian_field(2801), gaussian_field(5601)
    for j in range(4):
        a = sobolev_seminorm(coarse, j, N_AMBIENT)
        b = sobolev_seminorm(fine, j, N_AMBIENT)
        assert abs(a - b) <= 1e-8 * b


def test_seminorm_guards():
    field = gaussian_field(64, 2.0)
    with pytest.raises(UnsupportedOrderError):
        sobolev_seminorm(field, 4, N_AMBIENT)
    with pytest.raises(ConfigurationError):
        sobolev_seminorm(field, 0, 0)


def test_weighted_sup():
    grid = np.linspace(0.0, 4.0, 65)
    field = RadialField(grid, np.exp(-grid))
    expect = float(np.max(np.sqrt(1 + grid ** 2) ** 2 * np.exp(-grid)))
    assert weighted_sup(field, 2.0) == pytest.approx(expect, rel=1e-15)


def test_weighted_sup_flat_profile_frozen():
    g = verification_grid(100.0)
    safe = np.where(g == 0.0, 1.0, g)
    psi1 = np.where(g == 0.0, 2.0, 2.0 * np.arctan(g) / safe)
    field = RadialField(g, psi1, parity="even")
    # sup <rho> |psi1| is attained at the last node, just below pi
    assert weighted_sup(field, 1.0) == pytest.approx(3.121749395980677,
                                                     rel=1e-13)


# ---------------------------------------------------------------------------
# fractional seminorm

def test_fractional_zero_field():
    grid = np.linspace(0.0, 14.0, 2801)
    z = RadialField(grid, np.zeros(grid.size))
    assert fractional_norm(z, 3.0, N_AMBIENT) == 0.0


def test_fractional_matches_integer_order_at_window_top():
    field = gaussian_field()
    j3 = sobolev_seminorm(field, 3, N_AMBIENT)
    v = fractional_norm(field, 3.0, N_AMBIENT, resolution=4096)
    assert v == pytest.approx(j3, rel=1e-6)


def test_fractional_interior_exponent_refinement_stable():
    field = gaussian_field()
    v1 = fractional_norm(field, 2.75, N_AMBIENT, resolution=4096)
    v2 = fractional_norm(field, 2.75, N_AMBIENT, resolution=8192)
    assert np.isfinite(v1) and v1 > 0.0
    assert abs(v1 - v2) <= 1e-5 * v2


def test_fractional_refusals():
    field = gaussian_field()
    with pytest.raises(ConfigurationError):
        fractional_norm(field, 2.0, N_AMBIENT)  # window is (2.5, 3.5) at n = 7
    with pytest.raises(ConfigurationError):
        fractional_norm(field, 3.5, N_AMBIENT)
    grid = np.linspace(0.0, 2.0, 401)  # tail has not decayed at rho = 2
    short = RadialField(grid, np.exp(-grid * grid))
    with pytest.raises(ConfigurationError):
        fractional_norm(short, 3.0, N_AMBIENT)


# ---------------------------------------------------------------------------
# tail decay fits

def test_decay_exponent_of_profile_tails():
    grid = np.linspace(0.0, 100.0, 4001)
    safe = np.where(grid == 0.0, 1.0, grid)
    psi1 = np.where(grid == 0.0, 2.0, 2.0 * np.arctan(grid) / safe)
    psi2 = 2.0 / (1.0 + grid * grid)
    fit1 = decay_exponent(RadialField(grid, psi1))
    fit2 = decay_exponent(RadialField(grid, psi2))
    assert fit1.exponent == pytest.approx(-1.0, abs=0.02)
    assert fit2.exponent == pytest.approx(-2.0, abs=0.02)
    assert not fit1.envelope


def test_decay_exponent_constant_is_zero():
    grid = np.linspace(0.0, 100.0, 2001)
    fit = decay_exponent(RadialField(grid, np.full(grid.size, 0.7)))
    assert fit.exponent == pytest.approx(0.0, abs=1e-12)


def test_decay_exponent_oscillating_envelope():
    grid = np.linspace(0.0, 100.0, 8001)
    vals = np.sin(3.0 * grid) * (1.0 + grid * grid) ** -0.75
    fit = decay_exponent(RadialField(grid, vals, parity="odd"))
    assert fit.envelope
    assert fit.exponent == pytest.approx(-1.5, abs=0.1)


def test_decay_exponent_refusals():
    grid = np.linspace(0.0, 100.0, 2001)
    field = RadialField(grid, np.exp(-0.1 * grid))
    with pytest.raises(ConfigurationError):
        decay_exponent(field, window=(99.9, None))
    zero = RadialField(grid, np.zeros(grid.size))
    with pytest.raises(ConfigurationError):
        decay_exponent(zero)


# ---------------------------------------------------------------------------
# norm bundles

def test_evaluate_norms_keys_and_values():
    field = gaussian_field()
    spec = NormSpec(orders=(0, 1), sup_weights=(1.0,), fractional=2.75,
                    resolution=2048)
    out = evaluate_norms(field, spec, N_AMBIENT)
    assert sorted(out) == ["fractional2.75", "sobolev0", "sobolev1", "sup1"]
    assert out["sobolev0"] == pytest.approx(
        sobolev_seminorm(field, 0, N_AMBIENT), rel=1e-15)
    assert out["sup1"] == pytest.approx(weighted_sup(field, 1.0), rel=1e-15)


def test_norm_spec_validation():
    with pytest.raises(UnsupportedOrderError):
        NormSpec(orders=(0, 4))
    with pytest.raises(ConfigurationError):
        NormSpec(resolution=32)
