"""Nonlinear evolution in similarity coordinates around a solved profile.

The two-component state (psi1, psi2) on rho in [0, R] obeys

    d_tau psi1 = psi2 - rho psi1' - psi1
    d_tau psi2 = Lap psi1 - rho psi2' - 2 psi2 + (n-3) rho^-3 eta(rho psi1)

which is the first-order form whose fixed points are exactly the solved
profiles (the rows coincide with ``operators.static_residual``).  Space is
discretized on a uniform grid with the stencils from ``norms``: fourth
order central in the interior, even ghosts across the origin, biased
closures at the outer edge.  No boundary condition is imposed at rho = R
because both characteristic speeds rho +- 1 point outward for rho > 1;
the region rho <= 1 is causally insulated from the cut.  Time stepping is
classical RK4 with d_tau tied to the fastest speed R + 1 through a CFL
fraction.

Blowup-time tuning uses the gauge direction: preparing initial data from
the profile with a wrong blowup-time guess T injects a component along
the gauge mode that grows like e^tau.  The scalar a(tau) reported here is
the spectral projector's pairing with the evolved perturbation,
normalized so the gauge pair itself scores one under the same grid
truncation; ``tune_blowup_time`` brackets the late-window limit of
a(tau) e^-tau in T and drives it to zero.
"""

import hashlib
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from . import geometry, norms, operators
from .errors import (BlowupDetectedError, ConfigurationError,
                     NonconvergenceError, UnsupportedOrderError)

_SHAPES = ("gaussian", "bump", "ripple")


@dataclass(frozen=True)
class PerturbationSpec:
    """Compactly supported initial-data perturbation in physical variables.

    ``shape`` is one of the named profiles below or a callable
    rho -> (v1, v2) that must vanish for rho >= support.  The named
    shapes are smooth, exactly zero beyond the support radius, act on
    the scaled coordinate s = rho / support, and feed the same bump into
    both components:

    - "gaussian": exp(-9 s^2 - s^4 / (1 - s^2)), a Gaussian with a smooth
      compactification correction;
    - "bump": exp(1 - 1 / (1 - s^2)), the standard mollifier scaled to 1
      at the origin;
    - "ripple": cos(3 pi s) exp(-s^2 / (1 - s^2)), sign-changing.
    """

    amplitude: float = 1e-2
    shape: object = "gaussian"
    support: float = 2.0

    def __post_init__(self):
        if not np.isfinite(self.amplitude):
            raise ConfigurationError("perturbation amplitude must be finite")
        if self.support <= 0.0:
            raise ConfigurationError(
                f"perturbation support must be positive, got {self.support}")
        if not callable(self.shape) and self.shape not in _SHAPES:
            raise ConfigurationError(
                f"shape must be callable or one of {_SHAPES}, got {self.shape!r}")

    def evaluate(self, rho):
        """(v1, v2) sampled at rho, exactly zero outside the support."""
        rho = np.asarray(rho, dtype=float)
        if callable(self.shape):
            v1, v2 = self.shape(rho)
            v1 = self.amplitude * np.asarray(v1, dtype=float)
            v2 = self.amplitude * np.asarray(v2, dtype=float)
            outside = rho >= self.support
            scale = max(np.max(np.abs(v1), initial=0.0),
                        np.max(np.abs(v2), initial=0.0), 1e-300)
            leak = max(np.max(np.abs(v1[outside]), initial=0.0),
                       np.max(np.abs(v2[outside]), initial=0.0))
            if leak > 1e-14 * scale:
                raise ConfigurationError(
                    f"perturbation leaks {leak:.2e} beyond its declared "
                    f"support radius {self.support}")
            return v1, v2
        s = rho / self.support
        inside = s < 1.0
        ss = np.where(inside, s, 0.0)
        if self.shape == "gaussian":
            core = np.exp(-9.0 * ss**2 - ss**4 / (1.0 - ss**2))
        elif self.shape == "bump":
            core = np.exp(1.0 - 1.0 / (1.0 - ss**2))
        else:  # ripple
            core = np.cos(3.0 * np.pi * ss) * np.exp(-ss**2 / (1.0 - ss**2))
        v = self.amplitude * np.where(inside, core, 0.0)
        return v, v.copy()

    def tag(self):
        return self.shape if isinstance(self.shape, str) else "custom"


@dataclass(frozen=True)
class EvolutionConfig:
    """Everything a deterministic evolution run depends on.

    ``cells`` counts uniform grid intervals, so the node spacing is
    h = domain_radius / cells and runs with equal h but different radii
    share the interior arithmetic node for node.  The time step is
    cfl * h / (domain_radius + 1) unless ``dt`` overrides it; an override
    above that bound is rejected.  ``blowup_time`` is the guess T used to
    transplant the profile into initial data; ``search_halfwidth`` sets
    the tuning bracket [T - delta, T + delta].
    """

    target: geometry.WarpedTarget
    domain_radius: float = 8.0
    cells: int = 2048
    cfl: float = 0.4
    dt: float | None = None
    integrator_order: int = 4
    tau_max: float = 8.0
    blowup_time: float = 1.0
    perturbation: PerturbationSpec | None = None
    search_halfwidth: float = 0.1
    norm_orders: tuple = (0, 1, 2)
    sample_stride: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.domain_radius <= 1.0:
            raise ConfigurationError(
                "domain radius must exceed the lightcone radius 1, got "
                f"{self.domain_radius}")
        if self.cells < 64:
            raise ConfigurationError(f"need at least 64 cells, got {self.cells}")
        if not 0.0 < self.cfl <= 1.0:
            raise ConfigurationError(f"cfl fraction must lie in (0, 1], got {self.cfl}")
        if self.integrator_order != 4:
            raise UnsupportedOrderError(
                f"only the order-4 integrator is implemented, got "
                f"{self.integrator_order}")
        if self.tau_max <= 0.0:
            raise ConfigurationError(f"tau_max must be positive, got {self.tau_max}")
        if self.blowup_time <= 0.0:
            raise ConfigurationError(
                f"blowup-time guess must be positive, got {self.blowup_time}")
        if self.dt is not None and self.dt > self.cfl_dt * (1.0 + 1e-12):
            raise ConfigurationError(
                f"dt = {self.dt} violates the CFL bound {self.cfl_dt}")
        if self.perturbation is not None and \
                self.perturbation.support >= self.domain_radius:
            raise ConfigurationError(
                f"perturbation support {self.perturbation.support} must stay "
                f"inside the domain radius {self.domain_radius}")
        if any(j not in (0, 1, 2, 3) for j in self.norm_orders):
            raise ConfigurationError(f"norm orders must be within 0..3, "
                                     f"got {self.norm_orders}")

    @property
    def spacing(self):
        return self.domain_radius / self.cells

    @property
    def cfl_dt(self):
        return self.cfl * self.spacing / (self.domain_radius + 1.0)

    @property
    def dtau(self):
        return self.cfl_dt if self.dt is None else self.dt

    def grid(self):
        return np.linspace(0.0, self.domain_radius, self.cells + 1)

    def as_dict(self):
        pert = None
        if self.perturbation is not None:
            pert = {"amplitude": self.perturbation.amplitude,
                    "shape": self.perturbation.tag(),
                    "support": self.perturbation.support}
        return {
            "d": self.target.d,
            "epsilon": self.target.epsilon,
            "basis_terms": [list(p) for p in self.target.basis.terms],
            "domain_radius": self.domain_radius,
            "cells": self.cells,
            "cfl": self.cfl,
            "dt": self.dtau,
            "integrator_order": self.integrator_order,
            "tau_max": self.tau_max,
            "blowup_time": self.blowup_time,
            "perturbation": pert,
            "search_halfwidth": self.search_halfwidth,
            "norm_orders": list(self.norm_orders),
            "seed": self.seed,
        }

    def digest(self):
        """Hash of the canonical configuration record."""
        blob = json.dumps(self.as_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass
class SimilarityState:
    """Instantaneous two-component state at similarity time tau."""

    tau: float
    target: geometry.WarpedTarget
    psi1: operators.RadialField
    psi2: operators.RadialField

    def __post_init__(self):
        if self.psi1.grid.shape != self.psi2.grid.shape or \
                np.any(self.psi1.grid != self.psi2.grid):
            raise ConfigurationError("state components must share one grid")
        g = self.psi1.grid
        if g[0] != 0.0 or g[-1] <= 1.0:
            raise ConfigurationError(
                "state grid must start at 0 and extend beyond the lightcone")
        h = np.diff(g)
        if np.max(np.abs(h - h[0])) > 1e-12 * h[0]:
            raise ConfigurationError("state grid must be uniform")
        if self.psi1.parity != "even" or self.psi2.parity != "even":
            raise ConfigurationError("both components must be even fields")

    @property
    def grid(self):
        return self.psi1.grid


def _rhs(target, rho, h, template, psi1, psi2):
    """Semi-discrete right-hand side on raw component arrays."""
    n = target.n
    d1_1, d2_1 = norms.uniform_derivatives(psi1, h, "even", 2)
    (d1_2,) = norms.uniform_derivatives(psi2, h, "even", 1)
    lap = d2_1.copy()
    lap[1:] += (n - 1) * d1_1[1:] / rho[1:]
    lap[0] = n * d2_1[0]
    forcing = operators.apply_nonlinearity(
        target, template.with_values(psi1)).values
    r1 = psi2 - rho * d1_1 - psi1
    r2 = lap - rho * d1_2 - 2.0 * psi2 + forcing
    return r1, r2


def _rk4(target, rho, h, template, psi1, psi2, dtau):
    k11, k12 = _rhs(target, rho, h, template, psi1, psi2)
    k21, k22 = _rhs(target, rho, h, template,
                    psi1 + 0.5 * dtau * k11, psi2 + 0.5 * dtau * k12)
    k31, k32 = _rhs(target, rho, h, template,
                    psi1 + 0.5 * dtau * k21, psi2 + 0.5 * dtau * k22)
    k41, k42 = _rhs(target, rho, h, template,
                    psi1 + dtau * k31, psi2 + dtau * k32)
    new1 = psi1 + dtau / 6.0 * (k11 + 2.0 * k21 + 2.0 * k31 + k41)
    new2 = psi2 + dtau / 6.0 * (k12 + 2.0 * k22 + 2.0 * k32 + k42)
    return new1, new2


def step(state, dtau):
    """One RK4 step of length dtau; raises on a non-finite update."""
    if dtau <= 0.0:
        raise ConfigurationError(f"time step must be positive, got {dtau}")
    rho = state.grid
    h = rho[1] - rho[0]
    with np.errstate(over="ignore", invalid="ignore"):
        new1, new2 = _rk4(state.target, rho, h, state.psi1,
                          state.psi1.values, state.psi2.values, dtau)
    if not (np.all(np.isfinite(new1)) and np.all(np.isfinite(new2))):
        raise BlowupDetectedError(
            {"tau": state.tau, "message": "non-finite update; the state was "
             "last valid at the reported tau"})
    return SimilarityState(state.tau + dtau, state.target,
                           state.psi1.with_values(new1),
                           state.psi2.with_values(new2))


def initial_data(profile, blowup_time, perturbation=None, *, grid=None,
                 config=None):
    """Transplanted initial state for a blowup-time guess T.

    The full state at tau = 0 is psi1 = T (v1 + psi_1)(T rho),
    psi2 = T^2 (v2 + psi_2)(T rho), where (psi_1, psi_2) are the solved
    profile's components and v is the physical perturbation; T = 1 and
    v = 0 reproduce the profile exactly.
    """
    if grid is None:
        if config is None:
            raise ConfigurationError("initial_data needs a grid or a config")
        grid = config.grid()
    grid = np.asarray(grid, dtype=float)
    T = float(blowup_time)
    if T <= 0.0:
        raise ConfigurationError(f"blowup-time guess must be positive, got {T}")
    if perturbation is not None and perturbation.support >= grid[-1]:
        raise ConfigurationError(
            f"perturbation support {perturbation.support} must stay inside "
            f"the domain radius {grid[-1]}")
    scaled = T * grid
    p1 = profile.psi1(scaled)
    p2 = profile.psi2(scaled)
    if perturbation is not None:
        v1, v2 = perturbation.evaluate(scaled)
        p1 = p1 + v1
        p2 = p2 + v2
    return SimilarityState(
        0.0, profile.target,
        operators.RadialField(grid, T * p1, parity="even", component=1),
        operators.RadialField(grid, T * T * p2, parity="even", component=2))


def fit_exponential(tau, values, window):
    """Least-squares exponent of |values| ~ C e^{g tau} over a tau window.

    Returns (g, stderr).  Samples whose magnitude is absolutely tiny or
    more than 16 orders below the window peak are dropped before taking
    logs; fewer than 5 surviving samples is a nonconvergence.
    """
    tau = np.asarray(tau, dtype=float)
    values = np.abs(np.asarray(values, dtype=float))
    lo, hi = window
    mask = (tau >= lo) & (tau <= hi) & np.isfinite(values)
    if mask.sum() >= 2:
        peak = values[mask].max()
        mask &= values > max(1e-300, 1e-16 * peak)
    if mask.sum() < 5:
        raise NonconvergenceError(
            f"exponential fit needs >= 5 usable samples in {window}, "
            f"got {int(mask.sum())}")
    coeff, cov = np.polyfit(tau[mask], np.log(values[mask]), 1, cov=True)
    return float(coeff[0]), float(np.sqrt(max(cov[0, 0], 0.0)))


@dataclass
class DecayReport:
    """Sampled time series of one evolution run plus fitted exponents.

    ``norms`` maps labels like "c1_sobolev1" to series sampled at
    ``tau``; ``gauge_coefficient`` is a(tau) (all-nan when the run had no
    projector); ``origin_slope`` is |psi1(tau, 0)| of the full state,
    which equals the physical diagnostic (T - t)|d_r u(t, 0)|.
    ``rates`` holds (exponent, stderr) pairs from e^{g tau} fits over
    ``fit_window``; decay means a negative exponent.  ``blew_up_at`` is
    the last sampled tau with finite data, or None for a clean run.
    """

    config: EvolutionConfig
    blowup_time: float
    profile_slope: float
    tau: np.ndarray
    norms: dict
    gauge_coefficient: np.ndarray
    origin_slope: np.ndarray
    rates: dict = field(default_factory=dict)
    fit_window: tuple | None = None
    blew_up_at: float | None = None
    final_state: SimilarityState | None = None

    def series(self):
        """Label -> series mapping of everything sampled on ``tau``."""
        out = {"gauge_coefficient": self.gauge_coefficient,
               "origin_slope": self.origin_slope}
        out.update(self.norms)
        return out

    def write_csv(self, path):
        labels = sorted(self.series())
        table = self.series()
        with open(path, "w") as fh:
            fh.write(",".join(["tau"] + labels) + "\n")
            for i, t in enumerate(self.tau):
                row = [t] + [table[k][i] for k in labels]
                fh.write(",".join("%.17g" % x for x in row) + "\n")

    def manifest(self):
        return {
            "config": self.config.as_dict(),
            "config_sha256": self.config.digest(),
            "blowup_time": self.blowup_time,
            "profile_slope": self.profile_slope,
            "samples": int(self.tau.size),
            "blew_up_at": self.blew_up_at,
            "fit_window": list(self.fit_window) if self.fit_window else None,
            "rates": {k: {"exponent": v[0], "stderr": v[1]}
                      for k, v in self.rates.items()},
        }


def _norm_labels(orders):
    labels = [("c1_sobolev%d" % j, 1, j) for j in orders]
    labels += [("c2_sobolev%d" % j, 2, j) for j in orders if j <= 2]
    return labels


def evolve(config, profile, projector=None, *, blowup_time=None):
    """Run one evolution to tau_max and sample the perturbation's decay.

    ``projector`` (from ``spectral.unstable_projection``) supplies the
    gauge coefficient a(tau); without it that series is nan.  The
    blowup-time guess defaults to config.blowup_time.  A non-finite
    state truncates the series and sets ``blew_up_at`` instead of
    raising, because detuned runs may legitimately diverge.

    The march is reference-balanced: the deviation from the gridded
    profile is integrated with rhs(base + phi) - rhs(base), both sides
    through the identical stencil path, so the solved profile is an
    exact fixed point of the discrete flow.
    """
    if profile.target != config.target:
        raise ConfigurationError("profile was solved for a different target")
    T = config.blowup_time if blowup_time is None else float(blowup_time)
    rho = config.grid()
    h = config.spacing
    n = config.target.n
    state = initial_data(profile, T, config.perturbation, grid=rho)
    base1 = profile.psi1(rho)
    base2 = profile.psi2(rho)

    coefficient = None
    if projector is not None:
        g1, g2 = operators.gauge_mode(profile, rho)
        denom = projector.physical_coefficient(rho, g1.values, g2.values)
        if abs(denom) < 1e-10:
            raise ConfigurationError(
                "gauge normalization vanished on this grid truncation")

        def coefficient(phi1, phi2):
            return projector.physical_coefficient(rho, phi1, phi2) / denom

    dtau = config.dtau
    nsteps = int(math.ceil(config.tau_max / dtau - 1e-12))
    stride = config.sample_stride or max(1, nsteps // 400)
    template = state.psi1
    # reference-balanced stepping: integrate the deviation from the gridded
    # profile with rhs(base + phi) - rhs(base), so the profile is an exact
    # equilibrium of the discrete flow and spatial truncation cannot seed
    # the gauge instability from zero data (a naive full-state march grows
    # like h^4 e^tau, which buries slow decays by tau ~ 8)
    tgt = config.target
    rb1, rb2 = _rhs(tgt, rho, h, template, base1, base2)

    def balanced(phi1, phi2):
        r1, r2 = _rhs(tgt, rho, h, template, base1 + phi1, base2 + phi2)
        return r1 - rb1, r2 - rb2

    phi1 = state.psi1.values - base1
    phi2 = state.psi2.values - base2

    labels = _norm_labels(config.norm_orders)
    taus, a_vals, origin, series = [], [], [], {lab: [] for lab, _, _ in labels}
    blew_up_at = None

    def record(tau_now):
        taus.append(tau_now)
        origin.append(abs(base1[0] + phi1[0]))
        a_vals.append(coefficient(phi1, phi2) if coefficient else np.nan)
        f1 = template.with_values(phi1)
        f2 = template.with_values(phi2, component=2)
        for lab, comp, j in labels:
            fld = f1 if comp == 1 else f2
            series[lab].append(norms.sobolev_seminorm(fld, j, n))

    record(0.0)
    # divergence of detuned runs is an expected, detected outcome; silence
    # the overflow chatter it produces on the way to the NaN check
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(nsteps):
            k11, k12 = balanced(phi1, phi2)
            k21, k22 = balanced(phi1 + 0.5 * dtau * k11, phi2 + 0.5 * dtau * k12)
            k31, k32 = balanced(phi1 + 0.5 * dtau * k21, phi2 + 0.5 * dtau * k22)
            k41, k42 = balanced(phi1 + dtau * k31, phi2 + dtau * k32)
            phi1 = phi1 + dtau / 6.0 * (k11 + 2.0 * k21 + 2.0 * k31 + k41)
            phi2 = phi2 + dtau / 6.0 * (k12 + 2.0 * k22 + 2.0 * k32 + k42)
            tau_now = (k + 1) * dtau
            last = k == nsteps - 1
            if (k + 1) % stride == 0 or last:
                if not (np.all(np.isfinite(phi1)) and np.all(np.isfinite(phi2))):
                    blew_up_at = taus[-1]  # last sample with finite data
                    break
                record(min(tau_now, config.tau_max))

    tau_arr = np.asarray(taus)
    final = None
    if blew_up_at is None:
        final = SimilarityState(
            tau_arr[-1], tgt,
            template.with_values(base1 + phi1),
            template.with_values(base2 + phi2, component=2))
    report = DecayReport(
        config=config, blowup_time=T, profile_slope=profile.b,
        tau=tau_arr,
        norms={lab: np.asarray(v) for lab, v in series.items()},
        gauge_coefficient=np.asarray(a_vals),
        origin_slope=np.asarray(origin),
        blew_up_at=blew_up_at,
        final_state=final)

    tau_end = tau_arr[-1] if tau_arr.size else 0.0
    window = (min(1.0, 0.25 * tau_end), tau_end)
    report.fit_window = window
    for lab in list(report.norms) + ["gauge_coefficient"]:
        vals = report.norms.get(lab, report.gauge_coefficient)
        try:
            report.rates[lab] = fit_exponential(tau_arr, vals, window)
        except NonconvergenceError:
            report.rates[lab] = (float("nan"), float("nan"))
    return report


def asymptotic_gauge_amplitude(report, *, window=(0.75, 0.97)):
    """Late-window mean of a(tau) e^-tau, the detuning amplitude a_inf.

    ``window`` selects tau in [lo * tau_end, hi * tau_end] of the run's
    sampled range; for a run that blew up early the surviving samples
    are used and the sign is still meaningful, which is all the tuner
    needs.
    """
    tau = report.tau
    if tau.size < 4 or not np.any(np.isfinite(report.gauge_coefficient)):
        raise NonconvergenceError("run too short to estimate a_inf")
    tau_end = tau[-1]
    lo, hi = window
    mask = (tau >= lo * tau_end) & (tau <= hi * tau_end)
    if mask.sum() < 3:
        mask = tau >= 0.5 * tau_end
    weighted = report.gauge_coefficient[mask] * np.exp(-tau[mask])
    return float(np.mean(weighted))


def tune_blowup_time(config, profile, projector, *, xtol=1e-10):
    """Root-find the blowup-time guess T* at which a_inf(T) vanishes.

    Evaluates a_inf on the bracket endpoints config.blowup_time +-
    search_halfwidth; without a sign change there is no root to find
    (the perturbation is too large or the window does not straddle the
    true time) and a NonconvergenceError reports both endpoint values.
    """
    if projector is None:
        raise ConfigurationError("tuning requires the spectral projector")
    center = config.blowup_time
    lo = center - config.search_halfwidth
    hi = center + config.search_halfwidth
    if lo <= 0.0:
        raise ConfigurationError("search bracket reaches nonpositive times")

    cache = {}

    def a_inf(T):
        if T not in cache:
            rep = evolve(config, profile, projector, blowup_time=T)
            cache[T] = asymptotic_gauge_amplitude(rep)
        return cache[T]

    f_lo, f_hi = a_inf(lo), a_inf(hi)
    if np.sign(f_lo) == np.sign(f_hi):
        raise NonconvergenceError(
            f"a_inf does not change sign over [{lo}, {hi}]: "
            f"a_inf({lo}) = {f_lo:.3e}, a_inf({hi}) = {f_hi:.3e}; "
            "shrink the perturbation or move the bracket")
    t_star = brentq(a_inf, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps)
    return float(t_star)


@dataclass(frozen=True)
class PhysicalDiagnostics:
    """Physical-time view of a run: t, (T - t)|d_r u(t, 0)|, plateau."""

    blowup_time: float
    t: np.ndarray
    gradient_scale: np.ndarray
    plateau: float


def physical_diagnostics(report, *, plateau_from=5.0):
    """Physical-time diagnostic series of a sampled run.

    t = T (1 - e^-tau) maps the samples to physical time; the series
    (T - t)|d_r u(t, 0)| equals |psi1(tau, 0)| and should plateau at the
    profile's origin slope |f'(0)| once the perturbation has decayed.
    The plateau is the mean over tau >= plateau_from (falling back to
    the last quarter of a shorter run).
    """
    T = report.blowup_time
    tau = report.tau
    t = T * (1.0 - np.exp(-tau))
    series = report.origin_slope
    mask = tau >= plateau_from
    if mask.sum() < 3:
        mask = tau >= 0.75 * tau[-1]
    plateau = float(np.mean(series[mask]))
    return PhysicalDiagnostics(T, t, series, plateau)
