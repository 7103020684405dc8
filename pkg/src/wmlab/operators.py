"""Pointwise similarity-coordinate operators on radial two-component states.

Everything here evaluates the static machinery shared by the profile,
spectrum and evolution layers: the forcing term of the second component,
its linearization potential, the deformation remainder, the quadratic
remainder around a base state, and the time-translation (gauge) mode of a
solved profile.

All of these contain factors 1/rho^2 or 1/rho^3 that are only finite
because eta has a triple zero at the origin.  The origin values are
therefore taken from the analytic limits (cubic leading term of eta)
instead of one-sided extrapolation, which would dominate the error budget
at the coordinate singularity.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import geometry
from .errors import ConfigurationError

_PARITIES = ("even", "odd")


@dataclass
class RadialField:
    """Values of one radial component on an increasing grid.

    ``parity`` states the behavior under rho -> -rho of the smooth
    extension; an odd field must vanish at an origin node.  ``component``
    is 1 or 2 and records which slot of the two-component state the
    field lives in (the second slot is one derivative rougher).
    """

    grid: np.ndarray
    values: np.ndarray
    parity: str = "even"
    component: int = 1

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.grid.ndim != 1 or self.grid.shape != self.values.shape:
            raise ConfigurationError(
                f"grid {self.grid.shape} and values {self.values.shape} must be 1-d and equal")
        if self.grid.size < 2 or np.any(np.diff(self.grid) <= 0.0):
            raise ConfigurationError("grid must be strictly increasing with >= 2 nodes")
        if self.grid[0] < 0.0:
            raise ConfigurationError("radial grid cannot contain negative nodes")
        if self.parity not in _PARITIES:
            raise ConfigurationError(f"parity must be one of {_PARITIES}, got {self.parity!r}")
        if self.component not in (1, 2):
            raise ConfigurationError(f"component must be 1 or 2, got {self.component!r}")
        scale = float(np.max(np.abs(self.values))) or 1.0
        if self.parity == "odd" and self.grid[0] == 0.0 and abs(self.values[0]) > 1e-12 * scale:
            raise ConfigurationError(
                f"odd field must vanish at the origin node, got {self.values[0]!r}")

    def with_values(self, values, *, parity=None, component=None):
        """Same grid, new values (and optionally new metadata)."""
        kwargs = {"values": np.asarray(values, dtype=float)}
        if parity is not None:
            kwargs["parity"] = parity
        if component is not None:
            kwargs["component"] = component
        return replace(self, **kwargs)

    def parity_defect(self):
        """How far the first nodes are from the declared parity.

        Returns the one-sided derivative at an origin node for an even
        field (should vanish) or the origin value for an odd one, using
        a fourth-order stencil; 0.0 when the grid does not start at 0.
        Only meaningful on (locally) uniform grids.
        """
        if self.grid[0] != 0.0:
            return 0.0
        if self.parity == "odd":
            return float(self.values[0])
        h = self.grid[1] - self.grid[0]
        v = self.values[:5]
        return float(np.dot([-25.0, 48.0, -36.0, 16.0, -3.0], v) / (12.0 * h))


def _origin_mask(grid):
    grid = np.asarray(grid, dtype=float)
    return grid == 0.0


def apply_nonlinearity(target, psi1):
    """Forcing term of the second similarity component.

    Maps the first component u1 to (n-3) rho^-3 eta(rho u1).  At an
    origin node the limit (n-3) u1(0)^3 eta'''(0)/6 is used.
    """
    n = target.n
    rho = psi1.grid
    at0 = _origin_mask(rho)
    safe = np.where(at0, 1.0, rho)
    out = (n - 3) * geometry.eta_deriv(target, safe * psi1.values) / safe**3
    if at0.any():
        cubic = geometry.eta_cubic_coefficient(target)
        out = np.where(at0, (n - 3) * cubic * psi1.values**3, out)
    return psi1.with_values(out, parity="even", component=2)


def potential(target, base_psi1):
    """Linearization potential (n-3) rho^-2 eta'(rho base) at a base state.

    Finite at the origin with value (n-3) base(0)^2 eta'''(0)/2 because
    eta' has a double zero; decays like rho^-2 at infinity.
    """
    n = target.n
    rho = base_psi1.grid
    at0 = _origin_mask(rho)
    safe = np.where(at0, 1.0, rho)
    out = (n - 3) * geometry.eta_deriv(target, safe * base_psi1.values, 1) / safe**2
    if at0.any():
        third = geometry.eta_deriv(target, 0.0, 3)
        out = np.where(at0, (n - 3) * base_psi1.values**2 * third / 2.0, out)
    return base_psi1.with_values(out, parity="even", component=2)


def nonlinear_remainder(target, base_psi1, u1):
    """Quadratic Taylor remainder of the forcing around a base state.

    (n-3) rho^-3 (eta(rho(base+u)) - eta(rho base) - eta'(rho base) rho u);
    the origin limit follows from the cubic leading term of eta.  With the
    solved profile as base this is the nonlinearity driving the perturbation
    flow; with the round-sphere base it is the static fixed-point remainder.
    """
    if not np.array_equal(base_psi1.grid, u1.grid):
        raise ConfigurationError("base and increment must share a grid")
    n = target.n
    rho = base_psi1.grid
    at0 = _origin_mask(rho)
    safe = np.where(at0, 1.0, rho)
    xb = safe * base_psi1.values
    xu = safe * u1.values
    bracket = (geometry.eta_deriv(target, xb + xu)
               - geometry.eta_deriv(target, xb)
               - geometry.eta_deriv(target, xb, 1) * xu)
    out = (n - 3) * bracket / safe**3
    if at0.any():
        cubic = geometry.eta_cubic_coefficient(target)
        b0, u0 = base_psi1.values, u1.values
        out = np.where(at0, (n - 3) * cubic * (3.0 * b0 * u0**2 + u0**3), out)
    return u1.with_values(out, parity="even", component=2)


def quadratic_leading_term(target, base_psi1, u1):
    """Half-Hessian part (n-3) rho^-1 eta''(rho base) u1^2 / 2.

    The s -> 0 limit of nonlinear_remainder(s*u1)/s^2; used as the oracle
    for the quadratic smallness of the remainder.
    """
    n = target.n
    rho = base_psi1.grid
    at0 = _origin_mask(rho)
    safe = np.where(at0, 1.0, rho)
    out = (n - 3) * geometry.eta_deriv(target, safe * base_psi1.values, 2) \
        * u1.values**2 / (2.0 * safe)
    if at0.any():
        third = geometry.eta_deriv(target, 0.0, 3)
        out = np.where(at0, (n - 3) * third * base_psi1.values * u1.values**2 / 2.0, out)
    return u1.with_values(out, parity="even", component=2)


def epsilon_remainder(target, base_psi1):
    """Deformation inhomogeneity (n-3) rho^-3 (eta_eps - eta_0)(rho base).

    Identically zero at eps = 0 and O(eps) in sup norm; this is what
    pushes the profile away from the round-sphere solution.
    """
    round_target = geometry.WarpedTarget(d=target.d, epsilon=0.0, basis=target.basis)
    n = target.n
    rho = base_psi1.grid
    at0 = _origin_mask(rho)
    safe = np.where(at0, 1.0, rho)
    x = safe * base_psi1.values
    out = (n - 3) * (geometry.eta_deriv(target, x)
                     - geometry.eta_deriv(round_target, x)) / safe**3
    if at0.any():
        dcubic = (geometry.eta_cubic_coefficient(target)
                  - geometry.eta_cubic_coefficient(round_target))
        out = np.where(at0, (n - 3) * dcubic * base_psi1.values**3, out)
    return base_psi1.with_values(out, parity="even", component=2)


@dataclass(frozen=True)
class StaticDecomposition:
    """Linear-plus-remainder split of the forcing around the round base.

    ``potential_round``  : linearization at eps = 0 about the round base
    ``potential_shift``  : deformation part of the linearization (eps minus 0)
    ``remainder``        : deformation inhomogeneity at the round base
    ``base``             : the profile supplying the round base state
    """

    base: object
    potential_round: RadialField
    potential_shift: RadialField
    remainder: RadialField


def decompose_static(target, base_profile, grid):
    """Build the operator pieces of the static fixed-point split.

    ``base_profile`` must be a solved round-sphere profile (eps = 0 in its
    target); the decomposition identity then reads, on the second component,

        N_eps(base + phi) - N_0(base)
            = potential_round*phi + potential_shift*phi
              + remainder + nonlinear_remainder(base, phi).
    """
    base_target = base_profile.target
    if base_target.epsilon != 0.0:
        raise ConfigurationError("static decomposition expands around the round base")
    if base_target.d != target.d:
        raise ConfigurationError(
            f"dimension mismatch: base d={base_target.d}, target d={target.d}")
    grid = np.asarray(grid, dtype=float)
    base = RadialField(grid, base_profile.psi1(grid), parity="even", component=1)
    v0 = potential(base_target, base)
    veps = potential(target, base)
    return StaticDecomposition(
        base=base_profile,
        potential_round=v0,
        potential_shift=veps.with_values(veps.values - v0.values),
        remainder=epsilon_remainder(target, base),
    )


def gauge_mode(profile, grid=None):
    """Time-translation mode of a solved profile as a field pair.

    The first component coincides with the second component of the static
    state (both equal f'); the second is 2 f' + rho f''.  Evaluated from
    the profile's analytic representation, not from grid differencing.
    """
    rho = profile.grid if grid is None else np.asarray(grid, dtype=float)
    fp = profile.evaluate(rho, 1)
    fpp = profile.evaluate(rho, 2)
    g1 = RadialField(rho, fp, parity="even", component=1)
    g2 = RadialField(rho, 2.0 * fp + rho * fpp, parity="even", component=2)
    return g1, g2


def static_residual(profile, grid=None):
    """Residual of the static system at a solved profile.

    Returns the two residual fields: the first row is the definitional
    identity between the components (zero up to representation error),
    the second is the wave-operator row closed by apply_nonlinearity.
    """
    target = profile.target
    n = target.n
    rho = profile.grid if grid is None else np.asarray(grid, dtype=float)
    u, up, upp = profile.u_derivs(rho)
    fp = profile.evaluate(rho, 1)
    fpp = profile.evaluate(rho, 2)

    psi1 = RadialField(rho, u, parity="even", component=1)
    # row 1: psi2 - Lambda psi1 - psi1, with Lambda psi1 = rho psi1'
    r1 = fp - rho * up - u
    # row 2: Laplacian psi1 - Lambda psi2 - 2 psi2 + forcing
    at0 = _origin_mask(rho)
    safe = np.where(at0, 1.0, rho)
    lap = np.where(at0, n * upp, upp + (n - 1) * up / safe)
    r2 = lap - rho * fpp - 2.0 * fp + apply_nonlinearity(target, psi1).values
    return (psi1.with_values(r1, component=1),
            psi1.with_values(r2, component=2))
