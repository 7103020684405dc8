"""Self-similar profile of the equivariant flow into the warped target.

Inside the backward light cone the profile f(rho), rho = r/(T-t), solves

    (1 - rho^2) f'' + ((d-1)/rho - 2 rho) f' - (d-1)/rho^2 w(f) w'(f) = 0

on (0, 1], smooth at both singular endpoints, f(0) = 0.  The substitution
u = f/rho and n = d+2 gives the equivalent regular-at-origin form

    (1 - rho^2) u'' + ((n-1)/rho - 4 rho) u' - 2 u + (n-3)/rho^3 eta(rho u) = 0,

whose residual is exactly 1/rho times the f-form residual.  At eps = 0 the
closed form f(rho) = 2 arctan(rho / sqrt(d-2)) solves the equation for
every d >= 3 and seeds all continuations.

Construction runs two independent routes:

* shooting: Frobenius series at rho = 0 (odd powers, slope b free) and at
  the cone rho = 1 (exponents {0, (d-1)/2}; for odd d the analytic branch
  needs a compatibility root in a = f(1) and frees the coefficient of
  sigma^((d-1)/2)), high-order integration from both sides, Newton on the
  matching mismatch, arclength-free continuation in eps;
* global collocation: Chebyshev nodes in the compactified variable
  y = rho/(1+rho) acting on q(y) = (1+rho) u, Newton with analytic
  Jacobian, optional Picard mode with the linearization frozen at eps = 0.

Beyond the cone both characteristics point outward and the equation is
regular in x = 1/rho, so the exterior is plain outward integration; f
approaches c1 with correction ctilde1/rho, estimated by Richardson
extrapolation across dyadic checkpoints.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg, optimize

from . import geometry
from .errors import (ConfigurationError, DegenerateProfileError,
                     ContractionFailureError, DivergedSeriesError,
                     NoAnalyticBranchError, NonconvergenceError)


# ---------------------------------------------------------------------------
# residual evaluators (value-based, shared by every route and by the tests)

def ode_residual_f(target, rho, f, fp, fpp):
    """Pointwise residual of the f-form equation; needs rho > 0."""
    rho = np.asarray(rho, dtype=float)
    d = target.d
    g = geometry.ww_deriv(target, f)
    return (1.0 - rho ** 2) * fpp + ((d - 1) / rho - 2.0 * rho) * fp \
        - (d - 1) / rho ** 2 * g


def ode_residual_u(target, rho, u, up, upp):
    """Pointwise residual of the u = f/rho form; rho = 0 allowed.

    At rho = 0 the even parity of u turns the equation into the limit row
    n u''(0) - 2 u(0) + (n-3) eta'''(0)/6 u(0)^3, which is what is
    evaluated there (`up` is ignored at such points, `upp` must be the
    genuine second derivative).
    """
    rho = np.asarray(rho, dtype=float)
    u = np.asarray(u, dtype=float)
    up = np.asarray(up, dtype=float)
    upp = np.asarray(upp, dtype=float)
    n = target.n
    at0 = rho == 0.0
    rho_safe = np.where(at0, 1.0, rho)
    eta = geometry.eta_deriv(target, rho_safe * u)
    reg = (1.0 - rho ** 2) * upp + ((n - 1) / rho_safe - 4.0 * rho) * up \
        - 2.0 * u + (n - 3) / rho_safe ** 3 * eta
    eta3 = geometry.eta_cubic_coefficient(target)
    lim = n * upp - 2.0 * u + (n - 3) * eta3 * u ** 3
    out = np.where(at0, lim, reg)
    return out if out.shape else float(out)


def flat_profile_slope(d):
    """Central slope of the eps = 0 closed form, 2/sqrt(d-2)."""
    return 2.0 / math.sqrt(d - 2)


def flat_profile(d, rho, k=0):
    """k-th derivative (k <= 3) of the eps = 0 closed form 2 arctan(rho/c)."""
    rho = np.asarray(rho, dtype=float)
    c = math.sqrt(d - 2)
    den = c * c + rho ** 2
    if k == 0:
        out = 2.0 * np.arctan(rho / c)
    elif k == 1:
        out = 2.0 * c / den
    elif k == 2:
        out = -4.0 * c * rho / den ** 2
    elif k == 3:
        out = -4.0 * c * (c * c - 3.0 * rho ** 2) / den ** 3
    else:
        raise ConfigurationError(f"flat_profile serves k <= 3, got {k}")
    return out if out.shape else float(out)


# ---------------------------------------------------------------------------
# Frobenius branches

@dataclass(frozen=True)
class FrobeniusSeries:
    """Truncated series of f in powers of (rho - center).

    ``exponents`` are the indicial roots at the center; if one of them is
    a positive integer (``resonant_index``) the analytic branch exists
    only when a compatibility condition holds, whose measured size is
    ``compat_residual``, and the coefficient at that index is the free
    datum named in ``free_names``.  ``check_residual`` is the largest
    relative residual of the coefficient recurrence, recomputed from the
    finished coefficients by independent series arithmetic.
    """

    center: float
    coeff: np.ndarray
    exponents: tuple
    free_names: tuple
    resonant_index: int | None = None
    compat_residual: float = 0.0
    check_residual: float = 0.0

    @property
    def order(self):
        return len(self.coeff) - 1

    def __call__(self, rho, k=0):
        return geometry.ps_eval(self.coeff, np.asarray(rho, dtype=float) - self.center, k)


def _guard(k, value):
    if not np.isfinite(value) or abs(value) > 1e60:
        raise DivergedSeriesError(
            f"series coefficient {k} diverged to {value!r}", order=k, coefficient=value)


def series_at_origin(target, b, order=40):
    """Odd power series of f at rho = 0 with free slope b = f'(0).

    Multiplying the equation by rho^2 and matching powers gives, for odd
    k >= 3,

        (k-1)(k+d-1) f_k = (k-2)(k-1) f_{k-2} - (d-1) [eta o f]_k,

    where [eta o f]_k only involves f_1 .. f_{k-2} because eta has a
    triple zero.  Even coefficients vanish identically.
    """
    if order < 3 or order > geometry.JET_CAP:
        raise ConfigurationError(f"origin series order must be in 3..{geometry.JET_CAP}")
    d = target.d
    eta_jet = geometry.taylor_jet(target, 0.0, order).eta
    f = np.zeros(order + 1)
    f[1] = float(b)
    for k in range(3, order + 1, 2):
        comp = geometry.ps_compose(eta_jet, f, k)[k]
        f[k] = ((k - 2) * (k - 1) * f[k - 2] - (d - 1) * comp) / ((k - 1) * (k + d - 1))
        _guard(k, f[k])
    # independent recheck: assemble the rho^2-scaled residual series
    fp = geometry.ps_diff(f)
    fpp = geometry.ps_diff(fp)
    t1 = geometry.ps_mul(np.array([0.0, 0.0, 1.0, 0.0, -1.0]), fpp, order)
    t2 = geometry.ps_mul(np.array([0.0, d - 1.0, 0.0, -2.0]), fp, order)
    t3 = -(d - 1.0) * (f[:order + 1] - geometry.ps_compose(eta_jet, f, order))
    parts = [np.pad(t, (0, order + 1 - len(t))) for t in (t1, t2, t3)]
    resid = parts[0] + parts[1] + parts[2]
    scale = np.maximum(1.0, abs(parts[0]) + abs(parts[1]) + abs(parts[2]))
    check = float(np.max(np.abs(resid) / scale))
    return FrobeniusSeries(center=0.0, coeff=f, exponents=(1.0,),
                           free_names=("slope",), check_residual=check)


def _cone_polys(d, order):
    # sigma-coefficient arrays of (1-rho^2), (d-1)/rho - 2 rho, (d-1)/rho^2
    j = np.arange(order + 1, dtype=float)
    sgn = (-1.0) ** j
    A = np.zeros(order + 1)
    if order >= 1:
        A[1] = -2.0
    if order >= 2:
        A[2] = -1.0
    B = (d - 1.0) * sgn
    B[0] -= 2.0
    if order >= 1:
        B[1] -= 2.0
    C = (d - 1.0) * sgn * (j + 1.0)
    return A, B, C


def _cone_residual_series(target, coeff, cap):
    # residual of the f-equation as a sigma-series, truncated to `cap`
    d = target.d
    order = len(coeff) - 1
    A, B, C = _cone_polys(d, max(cap, 2))
    jet = geometry.taylor_jet(target, float(coeff[0]), order)
    inner = coeff.copy()
    inner[0] = 0.0
    gcomp = geometry.ps_compose(jet.ww, inner, cap)
    fp = geometry.ps_diff(coeff)
    fpp = geometry.ps_diff(fp)
    t1 = geometry.ps_mul(A, fpp, cap) if len(fpp) else np.zeros(cap + 1)
    t2 = geometry.ps_mul(B, fp, cap) if len(fp) else np.zeros(cap + 1)
    t3 = -geometry.ps_mul(C, gcomp, cap)
    parts = [np.pad(t, (0, cap + 1 - len(t))) for t in (t1, t2, t3)]
    return parts[0] + parts[1] + parts[2], \
        np.maximum(1.0, abs(parts[0]) + abs(parts[1]) + abs(parts[2]))


def cone_resonance_index(d):
    """Index of the resonant power at the cone for odd d, else None."""
    return (d - 1) // 2 if d % 2 == 1 else None


def cone_compatibility(target, a, order=None):
    """Resonance obstruction at the cone as a function of a = f(1).

    Returns the coefficient that must vanish for an analytic branch to
    exist (odd d only).  For d = 3 this reduces to -2 w(a) w'(a).
    """
    kstar = cone_resonance_index(target.d)
    if kstar is None:
        raise ConfigurationError("cone compatibility only constrains odd d")
    coeff = _build_cone_coeffs(target, a, kstar, resonant_value=0.0, collect_only=True)
    resid, _ = _cone_residual_series(target, coeff[:kstar + 1], kstar - 1)
    return float(resid[kstar - 1])


def _build_cone_coeffs(target, a, order, resonant_value, compat_tol=1e-9,
                       collect_only=False):
    d = target.d
    kstar = cone_resonance_index(d)
    coeff = np.zeros(order + 1)
    coeff[0] = float(a)
    compat = 0.0
    for k in range(1, order + 1):
        resid, scale = _cone_residual_series(target, coeff[:k + 1], k - 1)
        rhs = resid[k - 1]
        if kstar is not None and k == kstar:
            compat = rhs / scale[k - 1]
            if collect_only:
                return coeff
            if abs(compat) > compat_tol:
                raise NoAnalyticBranchError(
                    f"cone compatibility violated at sigma^{kstar}: "
                    f"relative obstruction {compat:.3e}", residual=float(compat))
            coeff[k] = float(resonant_value)
        else:
            mult = k * (d - 1.0 - 2.0 * k)
            coeff[k] = -rhs / mult
        _guard(k, coeff[k])
    return coeff, float(compat)


def series_at_lightcone(target, a, order=40, resonant_value=0.0, compat_tol=1e-9):
    """Analytic branch of f at the cone, f(1) = a, powers of sigma = rho - 1.

    The sigma^{k-1} coefficient equation carries the multiplier
    k (d - 1 - 2k), so the indicial exponents are {0, (d-1)/2}.  For odd d
    the order k* = (d-1)/2 is resonant: the right-hand side must vanish
    (up to ``compat_tol``, else NoAnalyticBranchError) and the sigma^{k*}
    coefficient becomes the free datum ``resonant_value``.  For even d
    every order is forced and ``resonant_value`` is ignored.
    """
    if order < 2 or order > geometry.JET_CAP:
        raise ConfigurationError(f"cone series order must be in 2..{geometry.JET_CAP}")
    d = target.d
    kstar = cone_resonance_index(d)
    coeff, compat = _build_cone_coeffs(target, a, order, resonant_value, compat_tol)
    resid, scale = _cone_residual_series(target, coeff, order - 1)
    rel = np.abs(resid) / scale
    if kstar is not None and 0 <= kstar - 1 < len(rel):
        rel[kstar - 1] = 0.0  # that row is the recorded obstruction, not an error
    check = float(np.max(rel))
    free = ("resonant_coefficient",) if kstar is not None else ("cone_value",)
    return FrobeniusSeries(center=1.0, coeff=coeff, exponents=(0.0, (d - 1) / 2.0),
                           free_names=free, resonant_index=kstar,
                           compat_residual=compat, check_residual=check)


def pin_cone_value(target, seed, tol=1e-13):
    """Root of the cone compatibility function near ``seed`` (odd d)."""
    fun = lambda a: cone_compatibility(target, a)
    res = optimize.root_scalar(fun, x0=float(seed), x1=float(seed) + 1e-3,
                               method="secant", xtol=tol, maxiter=60)
    if not res.converged:
        raise NonconvergenceError("cone compatibility root did not converge",
                                  detail={"seed": seed, "last": res.root})
    return float(res.root)


# ---------------------------------------------------------------------------
# Taylor marching: the integrator used for the interior and the exterior.
# Each step builds the local solution series from the coefficient
# recurrence, so the stored representation satisfies the equation to
# truncation order and serves exact derivatives.

def _local_series(target, t0, f0, f1, order, form):
    """Solution series about an ordinary point t0 with data (f0, f1).

    form "interior": the f-equation in rho (needs 0 < t0, t0 != 1).
    form "exterior": the equation for F(x) = f(1/x),
        (1-x^2) F'' + (d-3) x F' + (d-1) w w'(F) = 0.
    """
    d = target.d
    A = np.zeros(order + 1)
    A[:3] = (1.0 - t0 * t0, -2.0 * t0, -1.0)
    S = np.zeros(order + 1)
    if form == "interior":
        j = np.arange(order + 1, dtype=float)
        inv = (-1.0) ** j / t0 ** (j + 1.0)
        B = (d - 1.0) * inv
        B[0] -= 2.0 * t0
        if order >= 1:
            B[1] -= 2.0
        S[:order + 1] = -(d - 1.0) * inv * (j + 1.0) / t0
    else:
        B = np.zeros(order + 1)
        B[0] = (d - 3.0) * t0
        if order >= 1:
            B[1] = d - 3.0
        S[0] = d - 1.0
    jet = geometry.taylor_jet(target, float(f0), order).ww
    c = np.zeros(order + 1)
    c[0], c[1] = float(f0), float(f1)
    inner = np.zeros(order + 1)
    inner[1] = c[1]
    for k in range(order - 1):
        gcomp = geometry.ps_compose(jet, inner, k)
        fp = geometry.ps_diff(c[:k + 2])
        fpp = geometry.ps_diff(fp)
        ek = 0.0
        if len(fpp):
            ek += geometry.ps_mul(A[:k + 1], fpp, k)[k]
        ek += geometry.ps_mul(B[:k + 1], fp, k)[k]
        ek += geometry.ps_mul(S[:k + 1], gcomp, k)[k]
        c[k + 2] = -ek / (A[0] * (k + 2) * (k + 1))
        _guard(k + 2, c[k + 2])
        inner[k + 2] = c[k + 2]
    return c


def _taylor_march(target, t_start, t_end, f0, f1, form, order=32,
                  series_tol=1e-16, max_steps=400):
    """March the local-series integrator from t_start to t_end.

    Returns (panels, f, f') with panels a list of (center, coeffs, delta);
    each panel is valid on the step interval it produced.
    """
    t = float(t_start)
    y0, y1 = float(f0), float(f1)
    direction = 1.0 if t_end >= t_start else -1.0
    panels = []
    for _ in range(max_steps):
        remaining = (t_end - t) * direction
        if remaining <= 1e-14 * max(1.0, abs(t_end)):
            return panels, y0, y1
        c = _local_series(target, t, y0, y1, order, form)
        scale = max(1.0, abs(y0))
        h_tail = np.inf
        for k in range(order - 6, order + 1):
            if c[k] != 0.0:
                h_tail = min(h_tail, (series_tol * scale / abs(c[k])) ** (1.0 / k))
        # the recurrence excites the equation's nearest singularity even
        # when the solution itself is analytic further out, so cap the
        # step by the coefficient growth ratio as well
        hi_mag = np.max(np.abs(c[order - 3:order + 1]))
        lo_mag = np.max(np.abs(c[order - 11:order - 7]))
        if hi_mag > lo_mag > 0.0:
            r_est = (lo_mag / hi_mag) ** 0.125
        else:
            r_est = np.inf
        h_cap = min(0.85 * h_tail, 0.3 * r_est, 0.5)
        if h_cap < 1e-13:
            raise NonconvergenceError("Taylor march step collapsed",
                                      detail={"t": t, "form": form})
        if remaining <= h_cap:
            delta = t_end - t  # land exactly on the endpoint
            t_next = t_end
        else:
            delta = direction * h_cap
            t_next = t + delta
        panels.append((t, c, delta))
        y0 = float(geometry.ps_eval(c, delta))
        y1 = float(geometry.ps_eval(c, delta, 1))
        t = t_next
    raise NonconvergenceError("Taylor march exceeded its step budget",
                              detail={"t": t, "form": form})


def _eval_panels(panels, t, k=0):
    """Evaluate the k-th derivative of a panel chain at points t."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.full(t.shape, np.nan)
    lo = min(min(c, c + dl) for c, _, dl in panels)
    hi = max(max(c, c + dl) for c, _, dl in panels)
    for (c0, coeffs, dl) in panels:
        a, b = (c0, c0 + dl) if dl > 0 else (c0 + dl, c0)
        m = (t >= a - 1e-12) & (t <= b + 1e-12) & np.isnan(out)
        if m.any():
            out[m] = geometry.ps_eval(coeffs, t[m] - c0, k)
    bad = np.isnan(out)
    if bad.any():
        raise ConfigurationError(
            f"panel evaluation outside [{lo}, {hi}]: t = {t[bad][:3]}")
    return out


@dataclass
class ShootResult:
    """Mismatch of the two interior half-solutions at the matching point."""
    mismatch: np.ndarray
    series0: FrobeniusSeries
    series1: FrobeniusSeries
    left: list
    right: list
    match_point: float
    handoff0: float
    handoff1: float


def _series_handoff(coeff, h_default, scale, floor=0.05):
    # largest handoff (<= default) at which the series tail is negligible
    h = h_default
    tail = np.abs(coeff[-8:])
    k = np.arange(len(coeff) - 8, len(coeff), dtype=float)
    while h > floor and np.max(tail * h ** k) > 1e-14 * scale:
        h *= 0.75
    return h


def shoot_interior(target, b, a, resonant_value=0.0, *, order=40,
                   match_point=0.5, handoff=0.2, compat_tol=1e-9):
    """Integrate from both singular endpoints and report the matching gap.

    Launch data come from the Frobenius branches: the origin series with
    slope ``b`` evaluated at rho = handoff, and the cone series with value
    ``a`` (and, for odd d, free coefficient ``resonant_value``) evaluated
    at rho = 1 - handoff.  Each handoff shrinks automatically while the
    series tail at that distance is above round-off.
    """
    s0 = series_at_origin(target, b, order)
    s1 = series_at_lightcone(target, a, order, resonant_value, compat_tol)
    h0 = _series_handoff(s0.coeff, handoff, max(1.0, abs(b)))
    h1 = _series_handoff(s1.coeff, handoff, max(1.0, abs(a)))
    lo, hi = h0, 1.0 - h1
    left, fL, fpL = _taylor_march(target, lo, match_point,
                                  s0(lo), s0(lo, 1), "interior")
    right, fR, fpR = _taylor_march(target, hi, match_point,
                                   s1(hi), s1(hi, 1), "interior")
    mismatch = np.array([fL - fR, fpL - fpR])
    return ShootResult(mismatch=mismatch, series0=s0, series1=s1,
                       left=left, right=right, match_point=match_point,
                       handoff0=h0, handoff1=h1)


def _flat_cone_jet(d, order):
    # sigma-jet of the eps = 0 closed form about rho = 1
    c = math.sqrt(d - 2)
    den0 = c * c + 1.0
    r = np.zeros(order + 1)
    r[0] = 1.0 / den0
    for k in range(1, order + 1):
        prev2 = r[k - 2] if k >= 2 else 0.0
        r[k] = -(2.0 * r[k - 1] + prev2) / den0
    f = np.zeros(order + 1)
    f[0] = 2.0 * math.atan(1.0 / c)
    f[1:] = 2.0 * c * r[:order] / np.arange(1, order + 1)
    return f


def _newton2(fun, x0, tol, max_iter=30, fd_step=1e-7):
    # damped Newton on a 2-vector map with forward-difference Jacobian
    x = np.asarray(x0, dtype=float).copy()
    m = fun(x)
    for _ in range(max_iter):
        norm = np.max(np.abs(m))
        if norm <= tol:
            return x
        J = np.empty((2, 2))
        for i in range(2):
            h = fd_step * max(1.0, abs(x[i]))
            xp = x.copy()
            xp[i] += h
            J[:, i] = (fun(xp) - m) / h
        try:
            dx = np.linalg.solve(J, -m)
        except np.linalg.LinAlgError as exc:
            raise NonconvergenceError("singular shooting Jacobian",
                                      detail={"x": x.tolist()}) from exc
        lam = 1.0
        for _ in range(8):
            xt = x + lam * dx
            mt = fun(xt)
            if np.max(np.abs(mt)) < norm:
                x, m = xt, mt
                break
            lam *= 0.5
        else:
            raise NonconvergenceError("shooting line search stalled",
                                      detail={"x": x.tolist(), "mismatch": m.tolist()})
    if np.max(np.abs(m)) <= tol:
        return x
    raise NonconvergenceError("shooting Newton did not reach tolerance",
                              detail={"x": x.tolist(), "mismatch": m.tolist()})


# ---------------------------------------------------------------------------
# profile container

@dataclass
class ProfileSolution:
    """A solved profile with evaluators, boundary data and diagnostics.

    ``grid``/``f``/``fp`` tabulate the solution on [0, r_max];
    ``evaluate`` serves derivatives up to order 3 at arbitrary rho
    (including beyond r_max, through the far-field expansion).
    ``checkpoints`` holds rows (rho_j, f(rho_j), rho_j^2 f'(rho_j)) at the
    dyadic stations used for the Richardson estimate of (c1, ctilde1);
    the collocation route instead reads those constants off the
    compactified boundary and leaves ``checkpoints`` empty.
    """

    target: geometry.WarpedTarget
    method: str
    b: float
    a: float
    resonant_value: float | None
    c1: float
    ctilde1: float
    grid: np.ndarray
    f: np.ndarray
    fp: np.ndarray
    series0: FrobeniusSeries
    series1: FrobeniusSeries
    residual_norm: float
    checkpoints: np.ndarray
    _eval: object = field(repr=False, compare=False, default=None)
    _ueval: object = field(repr=False, compare=False, default=None)

    def evaluate(self, rho, k=0):
        """k-th derivative of f at rho, k <= 3."""
        if k < 0 or k > 3:
            raise ConfigurationError(f"profile evaluation serves k <= 3, got {k}")
        return self._eval(np.asarray(rho, dtype=float), k)

    def u_derivs(self, rho):
        """(u, u', u'') for u = f/rho, with the parity limits at rho = 0."""
        return self._ueval(np.asarray(rho, dtype=float))

    def psi1(self, rho):
        """First similarity component f/rho (value b at the origin)."""
        return self.u_derivs(rho)[0]

    def psi2(self, rho):
        """Second similarity component f'."""
        return self.evaluate(rho, 1)

    def residual(self, rho):
        """Pointwise u-form residual of this solution's evaluators."""
        u, up, upp = self.u_derivs(rho)
        return ode_residual_u(self.target, rho, u, up, upp)

    def as_dict(self):
        t = self.target
        return {
            "d": t.d,
            "epsilon": t.epsilon,
            "basis_terms": [list(p) for p in t.basis.terms],
            "method": self.method,
            "b": self.b,
            "a": self.a,
            "resonant_value": self.resonant_value,
            "c1": self.c1,
            "ctilde1": self.ctilde1,
            "residual_norm": self.residual_norm,
            "grid": self.grid.tolist(),
            "f": self.f.tolist(),
            "fp": self.fp.tolist(),
            "series0_coeff": self.series0.coeff.tolist(),
            "series1_coeff": self.series1.coeff.tolist(),
            "checkpoints": self.checkpoints.tolist(),
        }


def verification_grid(r_max=100.0):
    """Nodes where residuals and norms of a profile are checked."""
    inner = np.linspace(0.0, 1.4, 141)
    outer = np.geomspace(1.45, r_max, 90)
    return np.unique(np.concatenate([inner, outer, [12.5, 25.0, 50.0, r_max]]))


# ---------------------------------------------------------------------------
# exterior extension

@dataclass
class ExteriorExtension:
    """Outward continuation of the profile past the cone.

    ``xpanels`` represent F(x) = f(1/x) on [1/r_far, 1/(1+handoff)];
    ``far_coeffs`` are the first four coefficients of f in powers of
    x = 1/rho, used beyond ``r_far``; ``checkpoints`` holds the rows
    (rho_j, f, rho^2 f') at the dyadic Richardson stations.
    """
    xpanels: list
    r_start: float
    r_far: float
    checkpoints: np.ndarray
    c1: float
    ctilde1: float
    far_coeffs: np.ndarray


def extend_exterior(target, cone_series, r_max=100.0, handoff=0.2):
    """Continue past the cone to 8*r_max, Richardson-estimate (c1, ctilde1).

    The continuation integrates the regular x = 1/rho form of the
    equation.  The checkpoints sit at rho_j = r_max * 2^j, j = 0..4;
    fitting f = c1 + sum_{i<=4} beta_i rho^-i and
    rho^2 f' = ctilde1 + sum_i gamma_i rho^-i through them eliminates the
    slow tails, and with ratio-2 nodes the elimination constants stay
    O(1), so the leftover error is set by the rho^-5 term at r_max.
    """
    r0 = 1.0 + handoff
    r_far = 16.0 * r_max
    x0, x_far = 1.0 / r0, 1.0 / r_far
    # F'(x) = -rho^2 f'(rho)
    F0, F1 = cone_series(r0), -r0 * r0 * cone_series(r0, 1)
    xpanels, _, _ = _taylor_march(target, x0, x_far, F0, F1, "exterior")
    rj = r_max * 2.0 ** np.arange(5)
    xj = 1.0 / rj
    fj = _eval_panels(xpanels, xj)
    fpj = _eval_panels(xpanels, xj, 1)  # dF/dx; rho^2 f' = -dF/dx
    V = np.vander(xj, 5, increasing=True)
    beta = np.linalg.solve(V, fj)
    gamma = np.linalg.solve(V, -fpj)
    c1, ctilde1 = float(beta[0]), float(gamma[0])
    g1 = float(geometry.ww_deriv(target, c1))
    dg1 = float(geometry.ww_deriv(target, c1, 1))
    d = target.d
    far = np.array([c1,
                    -ctilde1,
                    -(d - 1) * g1 / 2.0,
                    ctilde1 * ((d - 3) + (d - 1) * dg1) / 6.0])
    checkpoints = np.column_stack([rj, fj, -fpj])
    return ExteriorExtension(xpanels=xpanels, r_start=r0, r_far=r_far,
                             checkpoints=checkpoints, c1=c1, ctilde1=ctilde1,
                             far_coeffs=far)


# ---------------------------------------------------------------------------
# assembled evaluator for the shooting route

def _x_chain(x, Fd, k):
    # derivatives of f(rho) = F(1/rho) from x-derivatives of F
    if k == 0:
        return Fd[0]
    if k == 1:
        return -x ** 2 * Fd[1]
    if k == 2:
        return 2.0 * x ** 3 * Fd[1] + x ** 4 * Fd[2]
    return -6.0 * x ** 4 * Fd[1] - 6.0 * x ** 5 * Fd[2] - x ** 6 * Fd[3]


class _ShootingEvaluator:
    """Piecewise representation of f: Frobenius series at the singular
    points, Taylor panels through the integrated segments (interior in
    rho, exterior in x = 1/rho), truncated expansion past r_far."""

    def __init__(self, target, s0, s1, panels, ext, handoff0, handoff1):
        self.target = target
        self.s0, self.s1 = s0, s1
        self.handoff0 = handoff0
        self.handoff1 = handoff1
        self.r_far = ext.r_far
        self.far = ext.far_coeffs
        self.panels = panels
        self.xpanels = ext.xpanels

    def _far_eval(self, r, k):
        x = 1.0 / r
        F = self.far
        Fd = (F[0] + x * (F[1] + x * (F[2] + x * F[3])),
              F[1] + x * (2.0 * F[2] + 3.0 * F[3] * x),
              2.0 * F[2] + 6.0 * F[3] * x,
              6.0 * F[3] * np.ones_like(x))
        return _x_chain(x, Fd, k)

    def __call__(self, rho, k=0):
        r = np.asarray(rho, dtype=float)
        scalar = r.ndim == 0
        r = np.atleast_1d(r).copy()
        out = np.empty_like(r)
        done = np.zeros(r.shape, dtype=bool)
        m = r < self.handoff0
        if m.any():
            out[m] = self.s0(r[m], k)
            done |= m
        m = ~done & (r <= 1.0 - self.handoff1)
        if m.any():
            out[m] = _eval_panels(self.panels, r[m], k)
            done |= m
        m = ~done & (np.abs(r - 1.0) <= self.handoff1)
        if m.any():
            out[m] = self.s1(r[m], k)
            done |= m
        m = ~done & (r < self.r_far)
        if m.any():
            x = 1.0 / r[m]
            Fd = [_eval_panels(self.xpanels, x, j) for j in range(k + 1)]
            while len(Fd) < 4:
                Fd.append(None)
            out[m] = _x_chain(x, Fd, k)
            done |= m
        m = ~done
        if m.any():
            out[m] = self._far_eval(r[m], k)
        return float(out[0]) if scalar else out


def _ueval_from_feval(target, feval, s0, small):
    # u = f/rho derivatives: shifted origin series inside `small`, value
    # formulas elsewhere (safe: rho bounded away from zero)
    ucoef = s0.coeff[1:].copy()  # u-series: f-coefficients shifted down once

    def ueval(rho):
        r = np.atleast_1d(np.asarray(rho, dtype=float))
        u = np.empty_like(r)
        up = np.empty_like(r)
        upp = np.empty_like(r)
        m = r < small
        if m.any():
            u[m] = geometry.ps_eval(ucoef, r[m])
            up[m] = geometry.ps_eval(ucoef, r[m], 1)
            upp[m] = geometry.ps_eval(ucoef, r[m], 2)
        mm = ~m
        if mm.any():
            rr = r[mm]
            fv, fpv, fppv = feval(rr, 0), feval(rr, 1), feval(rr, 2)
            uv = fv / rr
            upv = (fpv - uv) / rr
            u[mm], up[mm] = uv, upv
            upp[mm] = (fppv - 2.0 * upv) / rr
        if np.ndim(rho) == 0:
            return float(u[0]), float(up[0]), float(upp[0])
        return u, up, upp

    return ueval


def _assemble_shooting(target, b, a, resonant_value, order, r_max,
                       match_point, handoff, tol):
    shot = shoot_interior(target, b, a, resonant_value, order=order,
                          match_point=match_point, handoff=handoff)
    ext = extend_exterior(target, shot.series1, r_max, shot.handoff1)
    panels = shot.left + shot.right
    feval = _ShootingEvaluator(target, shot.series0, shot.series1, panels, ext,
                               shot.handoff0, shot.handoff1)
    ueval = _ueval_from_feval(target, feval, shot.series0, small=shot.handoff0)
    grid = verification_grid(r_max)
    sol = ProfileSolution(
        target=target, method="shooting", b=float(b), a=float(a),
        resonant_value=None if cone_resonance_index(target.d) is None else float(resonant_value),
        c1=ext.c1, ctilde1=ext.ctilde1, grid=grid,
        f=feval(grid, 0), fp=feval(grid, 1),
        series0=shot.series0, series1=shot.series1,
        residual_norm=0.0, checkpoints=ext.checkpoints,
        _eval=feval, _ueval=ueval)
    sol.residual_norm = float(np.max(np.abs(sol.residual(grid))))
    if sol.residual_norm > tol:
        raise NonconvergenceError(
            f"profile residual {sol.residual_norm:.3e} exceeds tol {tol:.1e}",
            detail={"residual_norm": sol.residual_norm})
    return sol


def solve_profile(target, *, order=40, r_max=100.0, tol=1e-10,
                  match_point=0.5, handoff=0.2, depsilon=0.01,
                  newton_tol=1e-12):
    """Shooting solution of the profile at the target's eps.

    Continuation starts from the eps = 0 closed form and walks eps in
    steps of ``depsilon`` (halved on failure, floored at 1e-4).  For odd d
    the unknowns are (slope b, resonant cone coefficient) with the cone
    value pinned per step by the compatibility root; for even d they are
    (b, cone value).
    """
    d = target.d
    kstar = cone_resonance_index(d)
    b = flat_profile_slope(d)
    a = float(flat_profile(d, 1.0))
    if kstar is not None:
        v = float(_flat_cone_jet(d, kstar)[kstar])
    else:
        v = 0.0

    eps_final = target.epsilon
    eps_now = 0.0
    step = math.copysign(depsilon, eps_final) if eps_final else depsilon
    first = True
    while first or (eps_final and eps_now != eps_final):
        if first:
            eps_here = 0.0
        else:
            eps_here = eps_now + step
            if (step > 0 and eps_here > eps_final) or (step < 0 and eps_here < eps_final):
                eps_here = eps_final
        t_here = replace(target, epsilon=eps_here)
        try:
            if kstar is not None:
                a = pin_cone_value(t_here, a)
                fun = lambda x: shoot_interior(t_here, x[0], a, x[1], order=order,
                                               match_point=match_point,
                                               handoff=handoff).mismatch
                b, v = _newton2(fun, (b, v), newton_tol)
            else:
                fun = lambda x: shoot_interior(t_here, x[0], x[1], order=order,
                                               match_point=match_point,
                                               handoff=handoff).mismatch
                b, a = _newton2(fun, (b, a), newton_tol)
        except (NonconvergenceError, DivergedSeriesError, NoAnalyticBranchError):
            if first:
                raise
            if abs(step) <= 1e-4:
                raise
            step *= 0.5
            continue
        eps_now = eps_here
        first = False
        if not eps_final:
            break
    if abs(b) < 1e-8:
        raise DegenerateProfileError(
            f"profile slope collapsed to b = {b:.3e}; only the zero solution remains")
    return _assemble_shooting(target, b, a, v, order, r_max, match_point, handoff, tol)


# ---------------------------------------------------------------------------
# global collocation route (compactified Chebyshev grid)

def _cheb_diff(n):
    """Differentiation matrix on the n + 1 points cos(pi j / n), j = 0..n."""
    j = np.arange(n + 1)
    x = np.cos(np.pi * j / n)
    c = np.ones(n + 1)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** j
    dx = x[:, None] - x[None, :] + np.eye(n + 1)
    mat = np.outer(c, 1.0 / c) / dx
    mat -= np.diag(mat.sum(axis=1))
    return mat, x


class _CollocationSystem:
    """Discretized static u-equation on Chebyshev nodes in y = rho/(1+rho).

    The unknown vector holds q(y_i) = (1+rho_i) u(rho_i) at the ascending
    nodes y_i = (1 - cos(pi i/n))/2, so f = y q exactly and the far-field
    constants sit on the boundary: c1 = q(1), ctilde1 = q(1) + q'(1).
    Row 0 is the parity limit of the equation at rho = 0; rows 1..n-1 are
    the u-equation at the interior nodes; row n is the coefficient of t^3
    (t = 1 - y) in the equation's expansion at y = 1, the first one that
    does not vanish identically:

        q''(1) + 4 q'(1) + 2 q(1) + (d-1) w(q(1)) w'(q(1)) = 0.

    Rows are equilibrated by their linear-part sup norms; ``residual`` and
    ``jacobian`` both return equilibrated quantities, so Newton steps are
    unchanged while the factorization is well scaled.
    """

    def __init__(self, target, nodes):
        nodes = int(nodes)
        if nodes < 32:
            raise ConfigurationError(f"collocation needs >= 32 node intervals, got {nodes}")
        self.target = target
        self.nodes = nodes
        dmat, _ = _cheb_diff(nodes)
        self.dy = -2.0 * dmat  # y = (1 - x)/2 reverses orientation, halves scale
        i = np.arange(nodes + 1)
        y = (1.0 - np.cos(np.pi * i / nodes)) / 2.0
        y[0], y[-1] = 0.0, 1.0
        self.y = y
        self.t = 1.0 - y
        t = self.t
        dyy = self.dy @ self.dy
        # u = (1-y) q; chain rule in rho through dy/drho = t^2
        uy = self.dy * t[None, :]
        uyy = dyy * t[None, :]
        d1u = (t ** 2)[:, None] * uy
        d2u = (-2.0 * t ** 3)[:, None] * uy + (t ** 4)[:, None] * uyy
        n = target.n
        lin = np.empty((nodes + 1, nodes + 1))
        lin[0] = n * d2u[0]
        yi, ti = y[1:-1], t[1:-1]
        c2 = (1.0 - 2.0 * yi) / ti ** 2  # = 1 - rho^2
        c1 = (n - 1.0) * ti / yi - 4.0 * yi / ti
        lin[1:-1] = c2[:, None] * d2u[1:-1] + c1[:, None] * d1u[1:-1]
        idx = np.arange(nodes)
        lin[idx, idx] -= 2.0 * t[:-1]  # the -2u term; row n has none
        lin[-1] = dyy[-1] + 4.0 * self.dy[-1]
        lin[-1, -1] += 2.0
        self.row_scale = 1.0 / np.maximum(np.abs(lin).max(axis=1), 1.0)
        self.lin = self.row_scale[:, None] * lin

    def residual(self, q):
        """Equilibrated residual of the discrete system at node values q."""
        target = self.target
        n, d = target.n, target.d
        out = self.lin @ q
        yi, ti = self.y[1:-1], self.t[1:-1]
        nl = np.empty_like(q)
        nl[0] = (n - 3) * geometry.eta_cubic_coefficient(target) * q[0] ** 3
        nl[1:-1] = (n - 3) * (ti / yi) ** 3 * geometry.eta_deriv(target, yi * q[1:-1])
        nl[-1] = (d - 1) * geometry.ww_deriv(target, q[-1])
        return out + self.row_scale * nl

    def jacobian(self, q):
        """Equilibrated Jacobian; the nonlinear closure is diagonal."""
        target = self.target
        n, d = target.n, target.d
        jac = self.lin.copy()
        diag = np.empty_like(q)
        diag[0] = 3.0 * (n - 3) * geometry.eta_cubic_coefficient(target) * q[0] ** 2
        yi, ti = self.y[1:-1], self.t[1:-1]
        diag[1:-1] = (n - 3) * ti ** 3 / yi ** 2 \
            * geometry.eta_deriv(target, yi * q[1:-1], 1)
        diag[-1] = (d - 1) * geometry.ww_deriv(target, q[-1], 1)
        idx = np.arange(len(q))
        jac[idx, idx] += self.row_scale * diag
        return jac


def _colloc_solve(jac, rhs):
    # a singular linearization is diagnosed, not just reported as LinAlgError
    try:
        return np.linalg.solve(jac, rhs)
    except np.linalg.LinAlgError:
        lam = np.linalg.eigvals(jac)
        nearest = lam[np.argmin(np.abs(lam))]
        raise NonconvergenceError(
            "collocation linearization is singular; its nearest-to-zero "
            f"eigenvalue is {nearest:.6e}",
            detail={"nearest_eigenvalue": complex(nearest)}) from None


def _colloc_newton(system, q0, tol, max_iter):
    """Damped Newton with the affine-invariant monotonicity test.

    A step is accepted when the simplified Newton correction after the
    step shrinks by the textbook factor (1 - alpha/2); this reuses the
    current linearization, so damping costs one extra solve per trial.
    """
    q = np.array(q0, dtype=float)
    scale = max(1.0, float(np.max(np.abs(q))))
    for _ in range(max_iter):
        resid = system.residual(q)
        rnorm = float(np.max(np.abs(resid)))
        # equilibrated rows are O(1), so their cancellation floor is a few
        # ulp; below it the steps are pure J^-1-amplified roundoff and the
        # step-norm test can never pass on ill-conditioned (large d) grids
        if rnorm <= 2e-14 * scale:
            return q
        jac = system.jacobian(q)
        step = _colloc_solve(jac, -resid)
        norm = float(np.max(np.abs(step)))
        if norm <= tol * scale:
            return q + step
        alpha = 1.0
        while True:
            trial = q + alpha * step
            back = _colloc_solve(jac, -system.residual(trial))
            if float(np.max(np.abs(back))) <= (1.0 - 0.5 * alpha) * norm:
                q = trial
                break
            alpha *= 0.5
            if alpha < 1.0 / 64.0:
                raise NonconvergenceError(
                    "collocation Newton stalled; restart from a closer guess "
                    "or a smaller epsilon step",
                    detail={"step_norm": norm, "residual_norm": rnorm})
    raise NonconvergenceError(
        f"collocation Newton did not reach tolerance in {max_iter} iterations",
        detail={"iterations": max_iter})


def _colloc_picard(system, frozen_jac, q0, tol, max_iter):
    """Fixed-point sweeps with the linearization frozen at eps = 0.

    The frozen operator is the eps = 0 linearization about its own
    solution; each sweep inverts it against the full eps-residual.  The
    iteration contracts exactly when the eps-dependent remainder is a
    small perturbation, so growing step norms mean the target is outside
    the contraction range and raise a contraction failure.
    """
    lu = linalg.lu_factor(frozen_jac)
    solve = lambda rhs: linalg.lu_solve(lu, rhs)
    q = np.array(q0, dtype=float)
    scale = max(1.0, float(np.max(np.abs(q))))
    prev = None
    growing = 0
    for sweep in range(max_iter):
        step = solve(-system.residual(q))
        if not np.all(np.isfinite(step)):
            raise ContractionFailureError(
                "frozen-linearization sweep produced non-finite values",
                detail={"sweeps": sweep})
        q += step
        norm = float(np.max(np.abs(step)))
        if norm <= tol * scale:
            return q
        if prev is not None:
            growing = growing + 1 if norm >= prev else 0
            if growing >= 3 or norm > 1e3 * scale:
                raise ContractionFailureError(
                    f"frozen-linearization iteration diverges (step {norm:.3e} "
                    f"after {sweep + 1} sweeps); epsilon is outside the "
                    "contraction range of the frozen operator",
                    detail={"step_norm": norm, "ratio": norm / prev,
                            "sweeps": sweep + 1})
        prev = norm
    raise ContractionFailureError(
        f"frozen-linearization iteration still above tolerance after {max_iter} "
        "sweeps", detail={"sweeps": max_iter, "step_norm": prev})


def _colloc_seed(target, y, guess):
    """Node values of q = (1+rho) u from a user-supplied starting point."""
    interior = y[1:-1] / (1.0 - y[1:-1])
    q = np.empty_like(y)
    if guess is None:
        q[0] = flat_profile_slope(target.d)
        q[1:-1] = flat_profile(target.d, interior) / y[1:-1]
        q[-1] = math.pi  # f0 tends to pi for every d
        return q
    if isinstance(guess, ProfileSolution):
        q[0] = guess.b
        q[1:-1] = guess.evaluate(interior) / y[1:-1]
        q[-1] = guess.c1
        return q
    if isinstance(guess, np.ndarray):
        if guess.shape != y.shape:
            raise ConfigurationError(
                f"node-value guess has shape {guess.shape}, grid needs {y.shape}")
        return guess.astype(float).copy()
    if callable(guess):
        h = 1e-6
        q[0] = float(guess(h)) * (1.0 + h) / h
        q[1:-1] = np.asarray(guess(interior), dtype=float) / y[1:-1]
        q[-1] = float(guess(1e8))
        return q
    raise ConfigurationError(
        "initial_guess must be None, a ProfileSolution, a callable f(rho), "
        "or an array of node values")


def _colloc_continue(target, nodes, newton_tol, max_iter):
    # epsilon walk for seeds too far from the target solution
    t0 = replace(target, epsilon=0.0)
    system0 = _CollocationSystem(t0, nodes)
    q = _colloc_newton(system0, _colloc_seed(t0, system0.y, None),
                       newton_tol, max_iter)
    eps_final = target.epsilon
    eps_now = 0.0
    step = math.copysign(0.05, eps_final)
    while eps_now != eps_final:
        eps_try = eps_now + step
        if (step > 0 and eps_try > eps_final) or (step < 0 and eps_try < eps_final):
            eps_try = eps_final
        system = _CollocationSystem(replace(target, epsilon=eps_try), nodes)
        try:
            q_new = _colloc_newton(system, q, newton_tol, max_iter)
        except NonconvergenceError:
            if abs(step) <= 1e-3:
                raise
            step *= 0.5
            continue
        q, eps_now = q_new, eps_try
    return q


def _chop_plateau(coeff):
    """Drop the trailing roundoff plateau of a Chebyshev coefficient array.

    The cut sits where the tail maximum stops decaying geometrically (the
    spectrum has hit its noise plateau) or falls below 1e-14 of the
    leading scale, whichever comes first.  Keeping plateau coefficients
    multiplies derivative evaluations by k^2 per order for nothing.
    """
    mags = np.abs(coeff)
    cmax = mags.max()
    tail = np.maximum.accumulate(mags[::-1])[::-1]
    cut = len(mags)
    for j in range(8, len(mags) - 8):
        if tail[j] < 1e-10 * cmax and tail[j + 8] > 0.3 * tail[j]:
            cut = j  # decay has stalled into the noise plateau
            break
    live = np.nonzero(mags[:cut] > 1e-14 * cmax)[0]
    return coeff[: live[-1] + 1] if live.size else coeff[:1]


def _assemble_collocation(target, system, q, r_max, tol, compat_tol):
    cheb = np.polynomial.chebyshev
    coeff = _chop_plateau(cheb.chebfit(2.0 * system.y - 1.0, q, system.nodes))
    ladders = [coeff]
    for _ in range(3):
        ladders.append(cheb.chebder(ladders[-1]) * 2.0)  # d/dy = 2 d/ds, s = 2y - 1

    def q_derivs(yv):
        s = 2.0 * yv - 1.0
        return [cheb.chebval(s, c) for c in ladders]

    b = float(cheb.chebval(-1.0, coeff))
    # a wide origin-series branch keeps the (n-1)/rho-amplified derivative
    # noise of the global interpolant away from the residual check; the
    # handoff shrinks when the series converges slower than its default
    s0 = series_at_origin(target, b, order=56)
    small = _series_handoff(s0.coeff, 0.45, max(1.0, abs(b)), floor=0.1)

    def feval(rho, k=0):
        r = np.atleast_1d(np.asarray(rho, dtype=float))
        out = np.empty_like(r)
        m = r < small
        if m.any():
            out[m] = s0(r[m], k)
        mm = ~m
        if mm.any():
            rr = r[mm]
            t = 1.0 / (1.0 + rr)
            yv = rr * t
            q0, q1, q2, q3 = q_derivs(yv)
            f1 = q0 + yv * q1
            f2 = 2.0 * q1 + yv * q2
            f3 = 3.0 * q2 + yv * q3
            if k == 0:
                out[mm] = yv * q0
            elif k == 1:
                out[mm] = t ** 2 * f1
            elif k == 2:
                out[mm] = -2.0 * t ** 3 * f1 + t ** 4 * f2
            else:
                out[mm] = 6.0 * t ** 4 * f1 - 6.0 * t ** 5 * f2 + t ** 6 * f3
        return float(out[0]) if np.ndim(rho) == 0 else out

    ucoef = s0.coeff[1:]

    def ueval(rho):
        r = np.atleast_1d(np.asarray(rho, dtype=float))
        u, up, upp = np.empty_like(r), np.empty_like(r), np.empty_like(r)
        m = r < small
        if m.any():
            u[m] = geometry.ps_eval(ucoef, r[m])
            up[m] = geometry.ps_eval(ucoef, r[m], 1)
            upp[m] = geometry.ps_eval(ucoef, r[m], 2)
        mm = ~m
        if mm.any():
            rr = r[mm]
            t = 1.0 / (1.0 + rr)
            yv = rr * t
            q0, q1, q2, _ = q_derivs(yv)
            uy = t * q1 - q0
            uyy = t * q2 - 2.0 * q1
            u[mm] = t * q0
            up[mm] = t ** 2 * uy
            upp[mm] = -2.0 * t ** 3 * uy + t ** 4 * uyy
        if np.ndim(rho) == 0:
            return float(u[0]), float(up[0]), float(upp[0])
        return u, up, upp

    a = 0.5 * float(cheb.chebval(0.0, coeff))
    c1 = float(cheb.chebval(1.0, coeff))
    ctilde1 = c1 + float(cheb.chebval(1.0, ladders[1]))
    kstar = cone_resonance_index(target.d)
    if kstar is None:
        resonant = None
        series1 = series_at_lightcone(target, a, compat_tol=compat_tol)
    else:
        # recover the free resonant coefficient by matching just off the cone
        probe = 1.1
        fv = feval(probe)
        base = series_at_lightcone(target, a, resonant_value=0.0,
                                   compat_tol=compat_tol)
        bump = series_at_lightcone(target, a, resonant_value=1.0,
                                   compat_tol=compat_tol)
        v0 = (fv - base(probe)) / (bump(probe) - base(probe))
        mism = lambda v: series_at_lightcone(
            target, a, resonant_value=v, compat_tol=compat_tol)(probe) - fv
        root = optimize.root_scalar(mism, x0=v0, x1=v0 + 1e-3, method="secant",
                                    xtol=1e-13, maxiter=50)
        resonant = float(root.root)
        series1 = series_at_lightcone(target, a, resonant_value=resonant,
                                      compat_tol=compat_tol)
    grid = verification_grid(r_max)
    sol = ProfileSolution(
        target=target, method="collocation", b=b, a=a,
        resonant_value=resonant, c1=c1, ctilde1=ctilde1, grid=grid,
        f=feval(grid, 0), fp=feval(grid, 1), series0=s0, series1=series1,
        residual_norm=0.0, checkpoints=np.zeros((0, 3)),
        _eval=feval, _ueval=ueval)
    sol.residual_norm = float(np.max(np.abs(sol.residual(grid))))
    if sol.residual_norm > tol:
        raise NonconvergenceError(
            f"collocation residual {sol.residual_norm:.3e} exceeds tol {tol:.1e}",
            detail={"residual_norm": sol.residual_norm})
    return sol


def newton_collocation(target, initial_guess=None, *, nodes=96,
                       method="newton", tol=1e-10, newton_tol=1e-12,
                       max_iter=60, r_max=100.0, compat_tol=1e-9):
    """Global solve of the profile on a compactified Chebyshev grid.

    Discretizes the u = f/rho equation in y = rho/(1+rho) through the
    boundary-resolved unknown q = (1+rho) u and solves the full nonlinear
    system at the target's eps in one go.  ``method="newton"`` runs damped
    Newton on the full linearization (with an eps-continuation fallback
    when the default seed is too far); ``method="picard"`` freezes the
    linearization at the eps = 0 solution and sweeps the eps-residual
    through it, which contracts only for small |eps| and raises
    ``ContractionFailureError`` beyond that range.

    ``initial_guess`` may be None (flat-profile seed), a ProfileSolution,
    a callable f(rho), or an array of node values of q.

    The default 96 node intervals balance truncation against the N^4
    roundoff amplification of spectral second derivatives; past roughly
    |eps| = 0.1 the slower coefficient decay needs more nodes and a
    relaxed ``tol``.
    """
    system = _CollocationSystem(target, nodes)
    seed = _colloc_seed(target, system.y, initial_guess)
    if method == "picard":
        base = replace(target, epsilon=0.0)
        base_system = _CollocationSystem(base, nodes)
        q0 = _colloc_newton(base_system, _colloc_seed(base, system.y, None),
                            newton_tol, max_iter)
        frozen = base_system.jacobian(q0)
        start = seed if initial_guess is not None else q0
        q = _colloc_picard(system, frozen, start, newton_tol,
                           max_iter=max(max_iter, 400))
    elif method == "newton":
        try:
            q = _colloc_newton(system, seed, newton_tol, max_iter)
        except NonconvergenceError:
            if initial_guess is not None or target.epsilon == 0.0:
                raise
            q = _colloc_continue(target, nodes, newton_tol, max_iter)
    else:
        raise ConfigurationError(
            f"collocation method must be 'newton' or 'picard', got {method!r}")
    if abs(q[0]) < 1e-8:
        raise DegenerateProfileError(
            f"profile slope collapsed to b = {q[0]:.3e}; only the zero "
            "solution remains")
    return _assemble_collocation(target, system, q, r_max, tol, compat_tol)


# ---------------------------------------------------------------------------
# Lipschitz dependence on the perturbation strength

@dataclass(frozen=True)
class LipschitzReport:
    """Finite-difference Lipschitz quotients of the profile family in eps.

    ``c0`` is the sup over grid points and eps-pairs of
    |f_eps - f_kappa| / (rho |eps - kappa|), with the rho -> 0 limit
    |b_eps - b_kappa| / |eps - kappa| at the origin; ``c1`` and ``c2``
    are the unweighted quotients of the first two derivatives.
    ``per_pair`` rows: (eps_i, eps_j, C0, C1, C2).
    """

    epsilons: tuple
    grid: np.ndarray
    per_pair: np.ndarray
    c0: float
    c1: float
    c2: float


def lipschitz_in_epsilon(solutions, grid=None):
    """Lipschitz quotients over all pairs of an eps-family of profiles.

    All solutions must share the dimension and perturbation basis.  A
    single-profile family yields an empty ``per_pair`` table with zero
    constants.
    """
    sols = list(solutions)
    if not sols:
        raise ConfigurationError("lipschitz_in_epsilon needs at least one profile")
    d, basis = sols[0].target.d, sols[0].target.basis
    for s in sols[1:]:
        if s.target.d != d or s.target.basis != basis:
            raise ConfigurationError(
                "Lipschitz family must share dimension and perturbation basis")
    if grid is None:
        grid = verification_grid(100.0)
    grid = np.asarray(grid, dtype=float)
    pos = grid > 0
    data = [(s.target.epsilon, s.b, s.evaluate(grid), s.evaluate(grid, 1),
             s.evaluate(grid, 2)) for s in sols]
    rows = []
    for i in range(len(data)):
        for j in range(i + 1, len(data)):
            ei, bi, fi, f1i, f2i = data[i]
            ej, bj, fj, f1j, f2j = data[j]
            de = abs(ei - ej)
            if de == 0.0:
                raise ConfigurationError(
                    f"duplicate epsilon {ei} in the Lipschitz family")
            q0 = float(np.max(np.abs(fi - fj)[pos] / (grid[pos] * de)))
            if not pos.all():
                q0 = max(q0, abs(bi - bj) / de)
            q1 = float(np.max(np.abs(f1i - f1j)) / de)
            q2 = float(np.max(np.abs(f2i - f2j)) / de)
            rows.append((ei, ej, q0, q1, q2))
    per_pair = np.array(rows) if rows else np.zeros((0, 5))
    if rows:
        c0, c1, c2 = (float(np.max(per_pair[:, k])) for k in (2, 3, 4))
    else:
        c0 = c1 = c2 = 0.0
    return LipschitzReport(epsilons=tuple(e for e, *_ in data), grid=grid,
                           per_pair=per_pair, c0=c0, c1=c1, c2=c2)
