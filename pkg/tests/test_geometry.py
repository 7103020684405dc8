"""Tests of the warped-target geometry: alpha, w, w w', eta and their jets.

The integral identities are checked against an independent tensor
Gauss-Legendre quadrature oracle built here from numpy's leggauss nodes.
"""

import math

import numpy as np
import pytest

from wmlab import geometry
from wmlab.errors import ConfigurationError, UnsupportedOrderError
from wmlab.geometry import (DEFAULT_BASIS, JET_CAP, K_MAX, PerturbationBasis,
                            WarpedTarget, alpha, eta_cubic_coefficient,
                            eta_deriv, ps_eval, taylor_jet, w_deriv, ww_deriv)

from conftest import make_target

T0 = make_target(3, 0.0)


# ---------------------------------------------------------------------------
# quadrature oracle (nodes mapped to [0, 1])

def _gl(n=32):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def cubic_mean_oracle(target, a, n=32):
    """a^3 * triple integral of x^2 y eta'''(a x y z); should equal eta(a)."""
    x, wx = _gl(n)
    arg = a * np.einsum("i,j,k->ijk", x, x, x)
    wgt = np.einsum("i,j,k->ijk", wx * x * x, wx * x, wx)
    return a ** 3 * float(np.sum(wgt * eta_deriv(target, arg, 3)))


def quadratic_mean_oracle(target, a, n=32):
    """a^2 * double integral of x eta'''(a x y); should equal eta'(a)."""
    x, wx = _gl(n)
    arg = a * np.outer(x, x)
    wgt = np.outer(wx * x, wx)
    return a ** 2 * float(np.sum(wgt * eta_deriv(target, arg, 3)))


def remainder_oracle(target, a, b, c, n=32):
    """Triple integral for eta(a+c) - eta(a+b) - eta'(a)(c-b)."""
    x, wx = _gl(n)
    u = (b + x * (c - b))[:, None, None]
    v = a + x[None, :, None] * u
    arg = x[None, None, :] * v
    wgt = np.einsum("i,j,k->ijk", wx, wx, wx)
    return (c - b) * float(np.sum(wgt * u * v * eta_deriv(target, arg, 3)))


# ---------------------------------------------------------------------------
# deformation profile alpha

def test_default_basis_is_sin_squared():
    assert DEFAULT_BASIS.terms == ((1, 0.5),)
    u = np.linspace(0.0, math.pi, 201)
    assert np.allclose(DEFAULT_BASIS.alpha(u), np.sin(u) ** 2, atol=1e-15)


def test_alpha_derivatives_closed_form():
    # alpha = sin^2 u, so alpha' = sin 2u and alpha'' = 2 cos 2u
    assert alpha(T0, math.pi / 4) == pytest.approx(0.5, abs=1e-15)
    assert alpha(T0, math.pi / 4, 1) == pytest.approx(1.0, abs=1e-15)
    assert alpha(T0, math.pi / 4, 2) == pytest.approx(0.0, abs=1e-15)
    assert alpha(T0, 0.3, 2) == pytest.approx(2.0 * math.cos(0.6), abs=1e-14)


def test_alpha_derivative_matches_central_difference():
    h = 1e-5
    for order in (1, 2, 3, 4):
        for u in (0.3, 1.1, 2.5):
            fd = (alpha(T0, u + h, order - 1) - alpha(T0, u - h, order - 1)) / (2 * h)
            assert alpha(T0, u, order) == pytest.approx(fd, rel=1e-6, abs=1e-6)


def test_default_epsilon0_is_one():
    assert DEFAULT_BASIS.epsilon0 == pytest.approx(1.0, abs=1e-12)
    u_star, peak = DEFAULT_BASIS.alpha_peak
    assert u_star == pytest.approx(math.pi / 2, abs=1e-7)
    assert peak == pytest.approx(1.0, abs=1e-13)


def test_epsilon0_against_dense_scan():
    basis = PerturbationBasis(((1, 0.3), (2, 0.2)))
    u = np.linspace(0.0, math.pi, 2_000_001)
    peak = float(np.max(basis.alpha(u)))
    assert basis.epsilon0 == pytest.approx(1.0 / peak, rel=1e-9)


def test_basis_validation():
    with pytest.raises(ConfigurationError):
        PerturbationBasis(())
    with pytest.raises(ConfigurationError):
        PerturbationBasis(((0, 0.5),))
    with pytest.raises(ConfigurationError):
        PerturbationBasis(((1, -0.1),))
    with pytest.raises(ConfigurationError):
        PerturbationBasis(((1, 0.0), (2, 0.0)))


def test_target_validation():
    with pytest.raises(ConfigurationError):
        WarpedTarget(d=2)
    with pytest.raises(ConfigurationError):
        WarpedTarget(d=3.5)
    with pytest.raises(ConfigurationError):
        WarpedTarget(d=3, epsilon=1.2)  # epsilon0 = 1 for the default basis
    assert WarpedTarget(d=3).n == 5


# ---------------------------------------------------------------------------
# warping factor w

def test_w_reduces_to_sine_at_zero_eps():
    u = np.linspace(-3.0, 3.0, 101)
    assert np.allclose(w_deriv(T0, u), np.sin(u), atol=1e-15)
    assert np.allclose(w_deriv(T0, u, 1), np.cos(u), atol=1e-15)


def test_w_perturbed_pointwise():
    t = make_target(3, 0.1)
    # w = sin u (1 + eps sin^2 u): at pi/2 the factor is 1 + eps
    assert w_deriv(t, math.pi / 2) == pytest.approx(1.1, abs=1e-15)
    assert w_deriv(t, 0.0, 1) == pytest.approx(1.0, abs=1e-15)


def test_w_derivatives_match_central_difference():
    t = make_target(3, 0.3)
    h = 1e-5
    for order in (1, 2, 3, 4):
        for u in (0.4, 1.3, 2.2):
            fd = (w_deriv(t, u + h, order - 1) - w_deriv(t, u - h, order - 1)) / (2 * h)
            assert w_deriv(t, u, order) == pytest.approx(fd, rel=1e-6, abs=1e-6)


def test_w_is_odd():
    rng = np.random.default_rng(7)
    u = rng.uniform(-4.0, 4.0, size=1000)
    for eps in (0.0, 0.5, -0.5, 0.99, -0.99):
        t = make_target(3, eps)
        w = w_deriv(t, u)
        assert np.max(np.abs(w_deriv(t, -u) + w)) <= 1e-14 * (1.0 + np.max(np.abs(w)))


# ---------------------------------------------------------------------------
# eta = id - w w'

def test_eta_flat_closed_form():
    # eps = 0: w w' = sin y cos y, so eta = y - sin(2y)/2 and eta' = 1 - cos 2y
    y = np.linspace(-2.0, 2.0, 81)
    assert np.allclose(eta_deriv(T0, y), y - 0.5 * np.sin(2 * y), atol=1e-14)
    assert np.allclose(eta_deriv(T0, y, 1), 1.0 - np.cos(2 * y), atol=1e-14)
    assert np.allclose(eta_deriv(T0, y, 2), 2.0 * np.sin(2 * y), atol=1e-13)
    assert np.allclose(eta_deriv(T0, y, 3), 4.0 * np.cos(2 * y), atol=1e-13)


def test_eta_triple_zero_and_cubic_coefficient():
    assert eta_deriv(T0, 0.0) == 0.0
    assert eta_deriv(T0, 0.0, 1) == 0.0
    assert eta_deriv(T0, 0.0, 2) == 0.0
    assert eta_deriv(T0, 0.0, 3) == pytest.approx(4.0, abs=1e-14)
    # w = sin u + eps sin^3 u has cubic Taylor term (eps - 1/6) u^3, whence
    # w w' = u - (2/3 - 4 eps) u^3 + O(u^5) and eta'''(0) = 4 - 24 eps
    for eps in (0.0, 0.05, -0.3, 0.7):
        t = make_target(3, eps)
        assert eta_deriv(t, 0.0, 3) == pytest.approx(4.0 - 24.0 * eps, abs=1e-13)
        assert eta_cubic_coefficient(t) == pytest.approx(2.0 / 3.0 - 4.0 * eps,
                                                         abs=1e-14)


def test_eta_is_odd():
    rng = np.random.default_rng(11)
    u = rng.uniform(-3.0, 3.0, size=1000)
    for eps in (0.0, 0.5, -0.5, 0.99, -0.99):
        t = make_target(3, eps)
        e = eta_deriv(t, u)
        assert np.max(np.abs(eta_deriv(t, -u) + e)) <= 1e-14 * (1.0 + np.max(np.abs(e)))


def test_eta_jet_branch_matches_direct_formula():
    # below |y| = 0.25 eta comes from the origin jet; the direct formula
    # y - w w' (served by ww_deriv, which never switches) must agree there
    t = make_target(3, 0.4)
    y = np.linspace(0.05, 0.249, 40)
    direct = [y - ww_deriv(t, y), 1.0 - ww_deriv(t, y, 1),
              -ww_deriv(t, y, 2), -ww_deriv(t, y, 3)]
    for order in range(4):
        jet = eta_deriv(t, y, order)
        assert np.max(np.abs(jet - direct[order])) <= 1e-12


def test_eta_derivatives_match_central_difference():
    h = 1e-5
    for eps in (0.0, 0.05, -0.3):
        t = make_target(3, eps)
        for order in (1, 2, 3, 4):
            for y in (0.1, 0.6, 1.7, 2.9):
                fd = (eta_deriv(t, y + h, order - 1)
                      - eta_deriv(t, y - h, order - 1)) / (2 * h)
                assert eta_deriv(t, y, order) == pytest.approx(fd, rel=1e-6,
                                                               abs=1e-6)


def test_ww_deriv_matches_product_rule():
    # the fused order-0 path must agree with w * w' evaluated separately
    rng = np.random.default_rng(3)
    y = rng.uniform(-3.0, 3.0, size=200)
    for eps in (0.0, 0.05, -0.5):
        t = make_target(3, eps)
        direct = w_deriv(t, y) * w_deriv(t, y, 1)
        assert np.max(np.abs(ww_deriv(t, y) - direct)) <= 1e-15 * np.max(
            1.0 + np.abs(direct))
        leibniz = (w_deriv(t, y, 1) ** 2 + w_deriv(t, y) * w_deriv(t, y, 2))
        assert np.allclose(ww_deriv(t, y, 1), leibniz, atol=1e-13)


# ---------------------------------------------------------------------------
# integral identities (quadrature oracle)

def test_cubic_mean_identity():
    rng = np.random.default_rng(101)
    for _ in range(100):
        a = rng.uniform(-2.0, 2.0)
        t = make_target(3, rng.uniform(-0.8, 0.8))
        lhs = eta_deriv(t, a)
        assert abs(lhs - cubic_mean_oracle(t, a)) <= 1e-10 * max(1.0, abs(lhs))


def test_quadratic_mean_identity():
    rng = np.random.default_rng(103)
    for _ in range(100):
        a = rng.uniform(-2.0, 2.0)
        t = make_target(3, rng.uniform(-0.8, 0.8))
        lhs = eta_deriv(t, a, 1)
        assert abs(lhs - quadratic_mean_oracle(t, a)) <= 1e-10 * max(1.0, abs(lhs))


def test_taylor_remainder_identity():
    rng = np.random.default_rng(107)
    for _ in range(100):
        a, b, c = rng.uniform(-1.5, 1.5, size=3)
        t = make_target(3, rng.uniform(-0.8, 0.8))
        lhs = (eta_deriv(t, a + c) - eta_deriv(t, a + b)
               - eta_deriv(t, a, 1) * (c - b))
        assert abs(lhs - remainder_oracle(t, a, b, c)) <= 1e-10 * max(1.0, abs(lhs))


def test_third_derivative_lipschitz_in_eps_and_position():
    # |eta_eps'''(x) - eta_kap'''(y)| <= C (|eps - kap| + |x - y|) with a
    # finite C per derivative order; the fitted constant must be stable
    # under sample doubling
    rng = np.random.default_rng(109)
    for order in (3, 4, 5):
        ratios = []
        for _ in range(400):
            e1, e2 = rng.uniform(-0.8, 0.8, size=2)
            x1, x2 = rng.uniform(-3.0, 3.0, size=2)
            gap = abs(e1 - e2) + abs(x1 - x2)
            if gap < 1e-3:
                continue
            num = abs(eta_deriv(make_target(3, e1), x1, order)
                      - eta_deriv(make_target(3, e2), x2, order))
            ratios.append(num / gap)
        ratios = np.asarray(ratios)
        c_fit = float(np.max(ratios))
        assert np.isfinite(c_fit) and c_fit < 1e4
        half = float(np.max(ratios[: ratios.size // 2]))
        assert c_fit <= 2.0 * half + 1e-12


# ---------------------------------------------------------------------------
# Taylor jets

def test_origin_jet_parity_and_leading_terms():
    for eps in (0.0, 0.05, -0.3):
        jet = taylor_jet(make_target(3, eps), 0.0, 12)
        even = jet.eta[0::2]
        assert np.max(np.abs(even)) <= 1e-14
        assert abs(jet.eta[1]) <= 1e-14
        assert jet.eta[3] == pytest.approx(2.0 / 3.0 - 4.0 * eps, abs=1e-14)


def test_flat_w_jet_is_sine_series():
    jet = taylor_jet(T0, 0.0, 9)
    expect = [0.0, 1.0, 0.0, -1.0 / 6.0, 0.0, 1.0 / 120.0, 0.0,
              -1.0 / 5040.0, 0.0, 1.0 / 362880.0]
    assert np.allclose(jet.w, expect, atol=1e-16)


def test_jet_at_interior_center_matches_pointwise():
    t = make_target(3, 0.2)
    jet = taylor_jet(t, math.pi / 2, 30)
    for delta in (-0.2, 0.07, 0.25):
        for order in range(4):
            val = ps_eval(jet.eta, delta, order)
            assert val == pytest.approx(eta_deriv(t, math.pi / 2 + delta, order),
                                        rel=1e-12, abs=1e-12)


def test_jet_of_ww_consistent_with_eta():
    jet = taylor_jet(make_target(3, 0.1), 0.4, 8)
    # eta = y - w w' termwise at the jet's center
    expect = -jet.ww.copy()
    expect[0] += 0.4
    expect[1] += 1.0
    assert np.allclose(jet.eta, expect, atol=1e-16)


# ---------------------------------------------------------------------------
# order caps

def test_order_caps():
    with pytest.raises(UnsupportedOrderError):
        eta_deriv(T0, 0.5, K_MAX + 1)
    with pytest.raises(UnsupportedOrderError):
        w_deriv(T0, 0.5, -1)
    with pytest.raises(UnsupportedOrderError):
        alpha(T0, 0.5, K_MAX + 3)
    with pytest.raises(UnsupportedOrderError):
        ww_deriv(T0, 0.5, K_MAX + 1)
    with pytest.raises(UnsupportedOrderError):
        taylor_jet(T0, 0.0, JET_CAP + 1)
    with pytest.raises(UnsupportedOrderError):
        eta_deriv(T0, 0.5, 2.5)
