"""Discrete norms for radial fields: integer Sobolev seminorms, weighted
sup probes, tail decay fits, and an optional fractional norm through the
radial Fourier (Hankel) transform.

The j-th seminorm follows the full-tensor convention: the squared content
is |D^j u|^2 summed over all ordered index tuples, which for radial u
reduces to

    j=0:  u^2
    j=1:  u'^2
    j=2:  u''^2 + (n-1) (u'/rho)^2
    j=3:  u'''^2 + 3 (n-1) (u''/rho - u'/rho^2)^2

so that in frequency the content is exactly k^{2j} |Fu|^2 and integer
seminorms agree with the fractional norm at integer exponents.  Radial
integrals carry the rho^{n-1} measure and use the trapezoid rule with an
Euler-Maclaurin endpoint correction; derivatives come from fourth-order
uniform stencils with parity ghosts at the origin (the same stencils the
evolution right-hand side uses).
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import ConfigurationError, UnsupportedOrderError

_MAX_ORDER = 3


class AccuracyWarning(UserWarning):
    """Requested quantity is returned but the grid cannot support its
    nominal accuracy."""


def _fd_weights(offsets, der):
    """Finite-difference weights for a derivative on integer offsets."""
    offsets = np.asarray(offsets, dtype=float)
    rhs = np.zeros(offsets.size)
    rhs[der] = float(math.factorial(der))
    return np.linalg.solve(np.vander(offsets, increasing=True).T, rhs)


# interior stencils: fourth order, centered
_C1 = _fd_weights(range(-2, 3), 1)
_C2 = _fd_weights(range(-2, 3), 2)
_C3 = _fd_weights(range(-3, 4), 3)
# right-edge stencils: biased, one order lower on the last node(s)
_E1 = {1: _fd_weights(range(-3, 2), 1), 0: _fd_weights(range(-4, 1), 1)}
_E2 = {1: _fd_weights(range(-3, 2), 2), 0: _fd_weights(range(-4, 1), 2)}
_E3 = {2: _fd_weights(range(-4, 3), 3), 1: _fd_weights(range(-5, 2), 3),
       0: _fd_weights(range(-6, 1), 3)}


def _grid_spacing(grid):
    h = np.diff(grid)
    if h.size == 0 or not np.allclose(h, h[0], rtol=1e-12, atol=0.0):
        raise ConfigurationError("derivative stencils require a uniform grid")
    return float(h[0])


def _ghost_pad(values, parity, pad):
    """Prepend parity-reflected ghost nodes (grid[0] must be rho = 0)."""
    sign = 1.0 if parity == "even" else -1.0
    return np.concatenate([sign * values[pad:0:-1], values])


def uniform_derivatives(values, h, parity, k_max):
    """Array-level derivative stencils on a uniform grid starting at 0.

    Interior nodes use fourth-order central stencils acting on the
    parity-extended array; the last nodes fall back to biased stencils of
    one lower order.  Returns a tuple of k_max arrays.  This is the one
    stencil implementation in the package: the norms below and the
    evolution right-hand side both differentiate through it.
    """
    if k_max < 1 or k_max > _MAX_ORDER:
        raise UnsupportedOrderError(
            f"stencil support covers derivatives 1..{_MAX_ORDER}, got {k_max}")
    m = values.size
    pad = 3
    ext = _ghost_pad(values, parity, pad)
    out = []
    for cen, edge in ((_C1, _E1), (_C2, _E2), (_C3, _E3))[:k_max]:
        der = len(out) + 1
        half = cen.size // 2
        d = np.empty(m)
        core = np.convolve(ext, cen[::-1], mode="valid")  # correlation
        d[:m - half] = core[pad - half: pad - half + m - half]
        for back, w in edge.items():  # offsets span values[m-len(w):]
            d[m - 1 - back] = w @ values[m - w.size:]
        out.append(d / h**der)
    return tuple(out)


def radial_derivatives(field, k_max):
    """Derivatives 1..k_max of a RadialField on its uniform grid."""
    if field.grid[0] != 0.0:
        raise ConfigurationError("parity ghost extension requires grid[0] = 0")
    m = field.grid.size
    if m < 8:
        raise ConfigurationError("need at least 8 nodes for the stencils")
    if m < 16:
        warnings.warn("fewer than 16 nodes: derivative accuracy degraded",
                      AccuracyWarning, stacklevel=2)
    return uniform_derivatives(field.values, _grid_spacing(field.grid),
                               field.parity, k_max)


def _radial_integral(grid, integrand):
    """integral of integrand d rho with trapezoid + endpoint correction.

    The left endpoint rho = 0 needs no correction: every integrand used
    here carries a rho^{n-1} factor with n >= 5, so its derivative
    vanishes there.  The right endpoint derivative is estimated with the
    biased first-derivative stencil.
    """
    h = _grid_spacing(grid)
    base = float(np.trapezoid(integrand, dx=h))
    gp_end = float(_E1[0] @ integrand[-_E1[0].size:]) / h
    return base - h * h / 12.0 * gp_end


def sobolev_seminorm(field, j, n):
    """Order-j radial Sobolev seminorm of a RadialField in ambient
    dimension n (full-tensor convention, rho^{n-1} measure)."""
    if j < 0 or j > _MAX_ORDER:
        raise UnsupportedOrderError(f"seminorm orders 0..{_MAX_ORDER}, got {j}")
    if n < 1:
        raise ConfigurationError(f"ambient dimension must be positive, got {n}")
    grid = field.grid
    u = field.values
    at0 = grid == 0.0
    safe = np.where(at0, 1.0, grid)
    if j == 0:
        content = u * u
    elif j == 1:
        content = radial_derivatives(field, 1)[0] ** 2
    elif j == 2:
        d1, d2 = radial_derivatives(field, 2)
        ratio = np.where(at0, d2, d1 / safe)
        content = d2 ** 2 + (n - 1) * ratio ** 2
    else:
        d1, d2, d3 = radial_derivatives(field, 3)
        q = np.where(at0, 0.0, d2 / safe - d1 / safe**2)
        d3c = np.where(at0, 0.0, d3)  # odd derivative of an even field
        content = d3c ** 2 + 3.0 * (n - 1) * q ** 2
    return float(np.sqrt(_radial_integral(grid, content * grid ** (n - 1))))


def weighted_sup(field, exponent):
    """sup over the grid of <rho>^exponent |field|."""
    br = np.sqrt(1.0 + field.grid ** 2)
    return float(np.max(br ** exponent * np.abs(field.values)))


def fractional_transform(field, k, n):
    """Radial Fourier transform samples (unitary convention).

    F(k) = k^{1-n/2} integral u(rho) J_{n/2-1}(k rho) rho^{n/2} d rho,
    which reduces to the one-dimensional unitary cosine transform at
    n = 1 and satisfies Plancherel with the rho^{n-1} / k^{n-1} measures.
    """
    k = np.atleast_1d(np.asarray(k, dtype=float))
    grid, u = field.grid, field.values
    h = _grid_spacing(grid)
    nu = 0.5 * n - 1.0
    rows = special.jv(nu, np.outer(k, grid)) * (u * grid ** (0.5 * n))[None, :]
    base = np.trapezoid(rows, dx=h, axis=1)
    gp_end = rows[:, -_E1[0].size:] @ _E1[0] / h
    return k ** (1.0 - 0.5 * n) * (base - h * h / 12.0 * gp_end)


def fractional_norm(field, s, n, *, k_grid=None, resolution=2048):
    """Fractional seminorm (integral of k^{2s} |F(k)|^2 k^{n-1} dk)^(1/2).

    The exponent must lie in the admissible window n/2-1 < s < n/2 (the
    transform-side integral is then controlled by decay on one end and
    smoothness on the other).  The field must be sampled far enough out
    to have decayed: the refusal below keeps silently truncated tails
    from masquerading as small norms.
    """
    if not (0.5 * n - 1.0 < s < 0.5 * n):
        raise ConfigurationError(
            f"fractional exponent {s} outside the window ({0.5*n-1}, {0.5*n})")
    tail = np.abs(field.values[-max(4, field.values.size // 64):])
    head = np.max(np.abs(field.values))
    if head > 0.0 and np.max(tail) > 1e-9 * head:
        raise ConfigurationError(
            "field has not decayed on the sampled grid; fractional norm "
            f"needs a longer domain (tail/head = {np.max(tail)/head:.2e})")
    if k_grid is None:
        k_max = min(np.pi / _grid_spacing(field.grid), 64.0)
        k_grid = np.geomspace(1e-3, k_max, resolution)
    fk = fractional_transform(field, k_grid, n)
    integrand = fk * fk * k_grid ** (2.0 * s + n - 1.0)
    return float(np.sqrt(np.trapezoid(integrand, k_grid)))


@dataclass(frozen=True)
class DecayFit:
    """Log-log tail slope of |field|; envelope=True marks a sign-changing
    tail fitted through its local-maximum envelope."""
    exponent: float
    envelope: bool
    window: tuple
    points: int


def decay_exponent(field, *, window=(50.0, None)):
    """Fitted tail decay exponent: slope of log |field| vs log rho."""
    lo = window[0]
    hi = window[1] if window[1] is not None else float(field.grid[-1])
    mask = (field.grid >= lo) & (field.grid <= hi)
    if mask.sum() < 8:
        raise ConfigurationError(
            f"tail window [{lo}, {hi}] holds {int(mask.sum())} samples; "
            "need at least 8 (sample the field to rho >= 50)")
    rho = field.grid[mask]
    vals = field.values[mask]
    envelope = bool(np.any(vals[:-1] * vals[1:] < 0.0))
    mag = np.abs(vals)
    if envelope:
        # local maxima of |field| track the modulus of an oscillating tail
        peaks = np.nonzero((mag[1:-1] >= mag[:-2]) & (mag[1:-1] >= mag[2:]))[0] + 1
        if peaks.size >= 4:
            rho, mag = rho[peaks], mag[peaks]
    good = mag > 0.0
    if good.sum() < 4:
        raise ConfigurationError("tail is identically zero; no exponent to fit")
    slope = np.polyfit(np.log(rho[good]), np.log(mag[good]), 1)[0]
    return DecayFit(exponent=float(slope), envelope=envelope,
                    window=(float(lo), float(hi)), points=int(good.sum()))


@dataclass(frozen=True)
class NormSpec:
    """Which norms a decay report tracks.

    ``orders``: integer seminorm orders; ``sup_weights``: exponents w for
    <rho>^w sup probes; ``fractional``: optional exponent s (validated
    against the ambient dimension at evaluation time); ``resolution``:
    frequency-grid size for the fractional transform.
    """
    orders: tuple = (0, 1, 2)
    sup_weights: tuple = (1.0, 2.0)
    fractional: float = None
    resolution: int = 2048

    def __post_init__(self):
        if any(j < 0 or j > _MAX_ORDER for j in self.orders):
            raise UnsupportedOrderError(
                f"seminorm orders limited to 0..{_MAX_ORDER}: {self.orders}")
        if self.resolution < 64:
            raise ConfigurationError("frequency resolution below 64 is meaningless")


def evaluate_norms(field, spec, n):
    """All norms requested by a NormSpec, as a dict keyed by label."""
    out = {}
    for j in spec.orders:
        out[f"sobolev{j}"] = sobolev_seminorm(field, j, n)
    for w in spec.sup_weights:
        out[f"sup{w:g}"] = weighted_sup(field, w)
    if spec.fractional is not None:
        out[f"fractional{spec.fractional:g}"] = fractional_norm(
            field, spec.fractional, n, resolution=spec.resolution)
    return out
