"""Geometry of the deformed target sphere.

The target is a round sphere whose metric is warped by a small even
deformation: the warping factor is

    w(u) = sin(u) * (1 + eps * alpha(u)),

with the deformation profile restricted to the cosine family

    alpha(u) = sum_m c_m * (1 - cos(2 m u)),   c_m >= 0, some c_m > 0.

Each basis element is smooth, even, 2pi-periodic, nonnegative, vanishes at
u = 0 and u = pi, and is symmetric under u -> pi - u, so admissibility of
alpha holds term by term and derivatives of every order are available in
closed form:

    alpha^(k)(u) = -sum_m c_m (2m)^k cos(2 m u + k pi/2),   k >= 1.

The equivariant reduction only ever sees the combination

    eta(y) = y - w(y) w'(y),

an odd function with a triple zero at the origin (eta(y) = y - sin(2y)/2
when eps = 0). Pointwise derivatives of w and eta up to order K_MAX and
truncated Taylor jets up to JET_CAP terms are exposed; both are exact
(Leibniz sums over the closed-form pieces, no differencing).
"""

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
from scipy import optimize

from .errors import ConfigurationError, UnsupportedOrderError

K_MAX = 8  # highest pointwise derivative order served
JET_CAP = 64  # highest Taylor-jet truncation order served

_ALPHA_SAMPLES = 10_000  # dense scan used to locate the maximum of alpha
_ETA_SMALL = 0.25  # below this, eta and its derivatives come from the origin jet
_ETA_JET_ORDER = 40  # jet truncation; terms at the switch radius are ~1e-30


def _check_order(order, cap, what):
    if not isinstance(order, (int, np.integer)) or order < 0 or order > cap:
        raise UnsupportedOrderError(
            f"{what} order must lie in 0..{cap}, got {order!r}")


@dataclass(frozen=True)
class PerturbationBasis:
    """Deformation profile alpha(u) = sum c_m (1 - cos(2 m u)).

    ``terms`` maps the frequency index m (positive integer) to the
    coefficient c_m (nonnegative, at least one positive).
    """

    terms: tuple = ((1, 0.5),)

    def __post_init__(self):
        try:
            pairs = tuple(sorted((int(m), float(c)) for m, c in dict(self.terms).items()))
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"bad basis terms {self.terms!r}") from exc
        if not pairs:
            raise ConfigurationError("deformation basis needs at least one term")
        for m, c in pairs:
            if m < 1:
                raise ConfigurationError(f"frequency index must be >= 1, got {m}")
            if not (c >= 0.0):
                raise ConfigurationError(f"coefficient c_{m} = {c} must be >= 0")
        if not any(c > 0.0 for _, c in pairs):
            raise ConfigurationError("deformation basis must have a positive coefficient")
        object.__setattr__(self, "terms", pairs)

    def alpha(self, u, order=0):
        """Exact order-th derivative of alpha at u (array-friendly)."""
        u = np.asarray(u, dtype=float)
        out = np.zeros(u.shape)
        if order == 0:
            for m, c in self.terms:
                out += c * (1.0 - np.cos(2.0 * m * u))
        else:
            for m, c in self.terms:
                # cos(x + k pi/2) cycles through cos, -sin, -cos, sin exactly
                x = 2.0 * m * u
                shifted = (np.cos(x), -np.sin(x), -np.cos(x), np.sin(x))[order % 4]
                out -= c * float(2 * m) ** order * shifted
        return out if out.shape else float(out)

    @cached_property
    def alpha_peak(self):
        """(u*, alpha(u*)) with alpha(u*) = max over [0, pi].

        Dense scan (10^4 intervals) followed by local refinement.
        """
        us = np.linspace(0.0, math.pi, _ALPHA_SAMPLES + 1)
        vals = self.alpha(us)
        i = int(np.argmax(vals))
        lo = us[max(i - 1, 0)]
        hi = us[min(i + 1, _ALPHA_SAMPLES)]
        res = optimize.minimize_scalar(
            lambda u: -self.alpha(u), bounds=(lo, hi), method="bounded",
            options={"xatol": 1e-14})
        u_star, peak = float(res.x), float(-res.fun)
        if vals[i] > peak:  # refinement can only improve; keep the better point
            u_star, peak = float(us[i]), float(vals[i])
        return u_star, peak

    @property
    def epsilon0(self):
        """Admissible half-width of the deformation interval, 1/max(alpha)."""
        return 1.0 / self.alpha_peak[1]


DEFAULT_BASIS = PerturbationBasis()


@dataclass(frozen=True)
class WarpedTarget:
    """A d-sphere warped by eps * alpha, the arena for one experiment.

    d >= 3 is the target dimension; the equivariant reduction lifts it to
    n = d + 2 spatial dimensions. |eps| <= epsilon0 keeps 1 + eps*alpha
    positive, so the warping stays a metric.
    """

    d: int = 3
    epsilon: float = 0.0
    basis: PerturbationBasis = field(default_factory=PerturbationBasis)

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 3:
            raise ConfigurationError(f"target dimension must be an integer >= 3, got {self.d}")
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "epsilon", float(self.epsilon))
        eps0 = self.basis.epsilon0
        if not abs(self.epsilon) <= eps0 * (1.0 + 1e-12):
            raise ConfigurationError(
                f"|eps| = {abs(self.epsilon)} exceeds epsilon0 = {eps0}")

    @property
    def n(self):
        """Spatial dimension of the lifted problem."""
        return self.d + 2


def alpha(target, u, order=0):
    """order-th derivative of the deformation profile at u, order <= K_MAX."""
    _check_order(order, K_MAX, "alpha derivative")
    return target.basis.alpha(u, order)


def _w_deriv_any(target, u, order):
    # Leibniz over sin^(j) * (1 + eps*alpha)^(order-j); no order cap.
    u = np.asarray(u, dtype=float)
    sin_u, cos_u = np.sin(u), np.cos(u)
    sin_cycle = (sin_u, cos_u, -sin_u, -cos_u)  # sin(u + j pi/2), exactly
    total = np.zeros(u.shape)
    for j in range(order + 1):
        sin_j = sin_cycle[j % 4]
        k = order - j
        if k == 0:
            fac = 1.0 + target.epsilon * target.basis.alpha(u)
        else:
            fac = target.epsilon * target.basis.alpha(u, k)
        total += math.comb(order, j) * sin_j * fac
    return total if total.shape else float(total)


def w_deriv(target, u, order=0):
    """order-th derivative of the warping factor w at u, order <= K_MAX."""
    _check_order(order, K_MAX, "w derivative")
    return _w_deriv_any(target, u, order)


def _ww_deriv_any(target, y, order):
    # order-th derivative of w*w' by Leibniz; needs w-derivatives to order+1.
    if order == 0:
        # fused w * w' sharing sin/cos and the deformation factor; this is
        # the per-stage hot path of the evolution right-hand side
        y = np.asarray(y, dtype=float)
        sin_y, cos_y = np.sin(y), np.cos(y)
        eps = target.epsilon
        fac = 1.0 + eps * target.basis.alpha(y)
        return sin_y * fac * (cos_y * fac + eps * sin_y * target.basis.alpha(y, 1))
    ws = [_w_deriv_any(target, y, j) for j in range(order + 2)]
    total = np.zeros(np.asarray(y, dtype=float).shape)
    for j in range(order + 1):
        total = total + math.comb(order, j) * ws[j] * ws[order + 1 - j]
    return total


def eta_deriv(target, y, order=0):
    """order-th derivative of eta(y) = y - w(y) w'(y), order <= K_MAX.

    eta vanishes to third order at 0, so the direct difference loses all
    significant digits for small arguments (and eta' similarly, against 1).
    Inside |y| < 0.25 the value is served from the origin Taylor jet,
    whose even coefficients are exactly zero and whose truncation error at
    the switch radius sits far below roundoff.
    """
    _check_order(order, K_MAX, "eta derivative")
    y = np.asarray(y, dtype=float)
    scalar = y.ndim == 0
    ya = np.atleast_1d(y).astype(float)
    ww = np.atleast_1d(_ww_deriv_any(target, ya, order))
    if order == 0:
        out = ya - ww
    elif order == 1:
        out = 1.0 - ww
    else:
        out = -ww
    small = np.abs(ya) < _ETA_SMALL
    if small.any():
        out = np.array(out, dtype=float)
        out[small] = ps_eval(_origin_eta_jet(target), ya[small], order)
    return float(out[0]) if scalar else out


@lru_cache(maxsize=64)
def _origin_eta_jet(target):
    # targets are frozen/hashable; evolution calls eta_deriv every stage
    return taylor_jet(target, 0.0, _ETA_JET_ORDER).eta


def ww_deriv(target, y, order=0):
    """order-th derivative of the product w(y) w'(y), order <= K_MAX.

    This is the restoring term of the reduced flow; eta = id - w w'.
    """
    _check_order(order, K_MAX, "w w' derivative")
    out = _ww_deriv_any(target, y, order)
    return out if np.asarray(out).shape else float(out)


@lru_cache(maxsize=64)
def eta_cubic_coefficient(target):
    """Coefficient of y^3 in eta, i.e. eta'''(0)/6.  Positive for |eps| < eps0.

    Cached: the origin forcing limit asks for this every evolution stage.
    """
    return float(eta_deriv(target, 0.0, 3)) / 6.0


# ---------------------------------------------------------------------------
# Truncated power series (plain coefficient arrays, index = power).

def ps_mul(a, b, cap):
    """Product of two coefficient arrays, truncated to cap+1 terms."""
    return np.convolve(a, b)[:cap + 1]


def ps_diff(a):
    """Derivative of a coefficient array (one term shorter)."""
    a = np.asarray(a, dtype=float)
    return a[1:] * np.arange(1, len(a))


def ps_compose(outer, inner, cap):
    """outer(inner(t)) as a series in t, truncated to cap+1 terms.

    ``inner`` must have zero constant term, otherwise truncation at cap is
    not a well-defined operation on these finite arrays.
    """
    inner = np.asarray(inner, dtype=float)[:cap + 1]
    if inner.shape[0] and inner[0] != 0.0:
        raise ValueError("ps_compose needs inner[0] == 0")
    out = np.zeros(cap + 1)
    if len(outer) == 0:
        return out
    out[0] = outer[-1]
    for c in outer[-2::-1]:  # Horner on series
        out = ps_mul(out, inner, cap)
        out[0] += c
    return out


def ps_eval(a, t, k=0):
    """Evaluate the k-th derivative of the truncated series at t."""
    a = np.asarray(a, dtype=float)
    for _ in range(k):
        a = ps_diff(a)
    return np.polynomial.polynomial.polyval(t, a) if a.size else np.zeros(np.shape(t))


@dataclass(frozen=True)
class TaylorJet:
    """Taylor coefficients about a common center, powers 0..order.

    ``w``   : warping factor w
    ``ww``  : the product w * w'
    ``eta`` : eta = y - w(y) w'(y)
    """

    center: float
    order: int
    w: np.ndarray
    ww: np.ndarray
    eta: np.ndarray


def taylor_jet(target, center, order):
    """Exact Taylor jets of w, w*w' and eta about ``center``, order <= JET_CAP."""
    _check_order(order, JET_CAP, "jet")
    c = float(center)
    k1 = order + 1  # w is built one order higher so its derivative reaches `order`
    sin_cycle = (math.sin(c), math.cos(c), -math.sin(c), -math.cos(c))
    sin_jet = np.array([sin_cycle[j % 4] / math.factorial(j) for j in range(k1 + 1)])
    one_plus = np.zeros(k1 + 1)
    one_plus[0] = 1.0
    if target.epsilon != 0.0:
        alpha_jet = np.array(
            [target.basis.alpha(c, j) / math.factorial(j) for j in range(k1 + 1)])
        one_plus += target.epsilon * alpha_jet
    w_long = ps_mul(sin_jet, one_plus, k1)
    wp = ps_diff(w_long)  # length k1 = order+1
    ww = ps_mul(w_long[:order + 1], wp, order)
    eta = -ww.copy()
    eta[0] += c
    if order >= 1:
        eta[1] += 1.0
    return TaylorJet(center=c, order=order, w=w_long[:order + 1].copy(), ww=ww, eta=eta)
