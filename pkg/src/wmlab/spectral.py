"""Discrete stability spectrum of a solved profile.

The linearized similarity-coordinate operator acts on two-component radial
fields.  It is discretized by Chebyshev collocation in the compactified
coordinate y = rho/(1+rho), with the two components represented as weighted
polynomials

    psi1 = <rho>^-1 p1(y),    psi2 = <rho>^-2 p2(y),    <rho> = sqrt(1+rho^2).

The weights match the far-field decay of states with finite weighted norm,
whose weighted representatives therefore vanish at y = 1; the endpoint row
and column are dropped (a homogeneous Dirichlet closure encoding the
function space).  At y = 0 the radial Laplacian row uses the l'Hopital
limit n * d^2/drho^2 for even fields.

Collocation spectra of non-normal operators contain resolution artifacts.
Every eigenvalue is therefore tagged with its drift against a half
resolution run, and only drift-converged eigenvalues enter the reported
gap.  The gap itself is an empirical estimate, not a certified bound.

Empirically, the only drift-converged eigenvalue of these problems is
the gauge point lambda = 1: its eigenfunction is analytic on the whole
collocation interval, which is exactly the class the polynomial basis
converges on.  The rest of the discrete spectrum forms arcs that drift
by percents per resolution doubling; they discretize continuum branches
(generated by the non-analytic cone and far-field behaviors) whose
location depends on the norm, and in this weighted L2-type frame their
edge sits at positive real part.  ``SpectrumReport`` keeps the two
notions separate: ``gap`` uses converged eigenvalues only, ``edge``
records the arc front.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import geometry
from .errors import ConfigurationError, DegenerateEigenvalueError, NonconvergenceError
from .operators import RadialField, potential
from .profile import _cheb_diff

_MIN_NODES = 32
_DRIFT_TOL = 1e-6


def _lobatto_ascending(nodes):
    """Chebyshev-Lobatto nodes on [0, 1] (ascending) and d/dy matrix."""
    j = np.arange(nodes + 1)
    y = (1.0 - np.cos(np.pi * j / nodes)) / 2.0
    y[0], y[-1] = 0.0, 1.0
    dx, _ = _cheb_diff(nodes)
    dy = -2.0 * dx  # x = 1 - 2y: same index order, opposite orientation
    return y, dy


def clenshaw_curtis_weights(nodes):
    """Quadrature weights for the ascending Lobatto nodes on [0, 1]."""
    n = nodes
    w = np.zeros(n + 1)
    theta = np.pi * np.arange(n + 1) / n
    for j in range(n + 1):
        s = 0.0
        for k in range(1, n // 2 + 1):
            b = 1.0 if 2 * k == n else 2.0
            s += b * np.cos(2.0 * k * theta[j]) / (4.0 * k * k - 1.0)
        w[j] = (1.0 - s) / n
    w[0] /= 2.0
    w[-1] /= 2.0
    return w  # halved [-1,1] weights: the map to [0,1] has |dy/dx| = 1/2


@dataclass
class SpectralProblem:
    """Assembled collocation matrix for one profile at one resolution."""

    profile: object
    nodes: int                      # resolution parameter (polynomial degree)
    y: np.ndarray                   # kept nodes (y = 1 dropped), length = nodes
    rho: np.ndarray
    matrix: np.ndarray              # 2*len(y) square, real
    weights: np.ndarray             # Clenshaw-Curtis weights at kept nodes
    closure: str = "weighted-Dirichlet at y=1, parity limit at y=0"


def free_matrix(n, nodes):
    """Potential-free part of the discretization (the wave generator alone).

    Rows, acting on the weighted unknowns (p1, p2) at the kept nodes:

        lam p1 = -Lambda p1 + (rho^2/<rho>^2 - 1) p1 + <rho>^-1 p2
        lam p2 = <rho> Lap p1 - (2 rho/<rho>) p1' + (3 rho^2 <rho>^-3
                  - n <rho>^-1) p1 - Lambda p2 + (2 rho^2/<rho>^2 - 2) p2

    with all rho derivatives pulled back to y by d/drho = (1-y)^2 d/dy.
    """
    if nodes < _MIN_NODES:
        raise ConfigurationError(f"need at least {_MIN_NODES} nodes, got {nodes}")
    y_full, dy_full = _lobatto_ascending(nodes)
    keep = slice(0, nodes)  # y = 1 carries the decay condition p(1) = 0
    y = y_full[keep]
    t = 1.0 - y
    dy = dy_full[keep, keep]
    dyy = (dy_full @ dy_full)[keep, keep]

    d1 = t[:, None] ** 2 * dy                       # d/drho
    d2 = t[:, None] ** 4 * dyy - 2.0 * t[:, None] ** 3 * dy
    lam_op = (y * t)[:, None] * dy                  # rho d/drho

    sq = np.sqrt(y * y + t * t)                     # <rho> = sq / t
    br = sq / t
    inv_br = t / sq
    ratio2 = y * y / (y * y + t * t)                # rho^2 / <rho>^2

    # radial Laplacian with the even-parity origin limit n * d2
    inv_rho = t / np.where(y == 0.0, 1.0, y)
    lap = d2 + ((n - 1) * inv_rho)[:, None] * d1
    lap[0, :] = n * d2[0, :]

    m = nodes
    matrix = np.empty((2 * m, 2 * m))
    matrix[:m, :m] = -lam_op + np.diag(ratio2 - 1.0)
    matrix[:m, m:] = np.diag(inv_br)
    matrix[m:, :m] = (br[:, None] * lap
                      - (2.0 * y / sq)[:, None] * d1
                      + np.diag(3.0 * y * y * t / sq**3 - n * inv_br))
    matrix[m:, m:] = -lam_op + np.diag(2.0 * ratio2 - 2.0)
    return matrix


def assemble(profile, nodes):
    """Discretize the linearization around ``profile`` at resolution ``nodes``.

    The matrix is the free wave part plus the diagonal coupling
    V <rho> p1 in the second row, V being the linearization potential of
    the profile.
    """
    n = profile.target.n
    matrix = free_matrix(n, nodes)
    y = _lobatto_ascending(nodes)[0][:nodes]
    t = 1.0 - y
    rho = y / t
    br = np.sqrt(y * y + t * t) / t
    vfield = potential(profile.target,
                       RadialField(rho, profile.psi1(rho), parity="even")).values
    m = nodes
    matrix[m:, :m] += np.diag(vfield * br)
    weights = clenshaw_curtis_weights(nodes)[:nodes]
    return SpectralProblem(profile=profile, nodes=nodes, y=y, rho=rho,
                           matrix=matrix, weights=weights)


def _realify(vec):
    """Rotate a complex eigenvector of a real matrix onto the real axis."""
    i = int(np.argmax(np.abs(vec)))
    rotated = vec * np.exp(-1j * np.angle(vec[i]))
    return np.real(rotated), float(np.max(np.abs(np.imag(rotated))))


def _weighted_gauge(problem):
    """Gauge mode of the underlying profile in the weighted representation."""
    prof = problem.profile
    rho = problem.rho
    fp = prof.evaluate(rho, 1)
    fpp = prof.evaluate(rho, 2)
    br = np.sqrt(1.0 + rho * rho)
    return np.concatenate([br * fp, br**2 * (2.0 * fp + rho * fpp)])


@dataclass
class SpectrumReport:
    """Eigenvalues with convergence tags plus the gauge-mode diagnostics.

    ``gap`` is -max Re(lambda) over drift-converged eigenvalues other than
    the gauge eigenvalue; ``accepted`` states whether the converged
    spectrum consists of exactly the gauge point in {Re >= -gap/2}.

    ``edge`` is a weaker diagnostic: the largest Re(lambda) over the
    non-gauge eigenvalues at resolved scale (|lambda| <= nodes), whether
    or not they drift-converge.  The weighted L2-type discrete norm is
    too weak to push the continuum branches of this operator into the
    left half plane; they show up as slowly drifting arcs whose edge this
    field records.  Decay statements therefore rest on the converged set
    and on the nonlinear evolution, not on ``edge``.
    """

    problem: SpectralProblem
    coarse_nodes: int
    eigenvalues: np.ndarray
    drifts: np.ndarray
    converged: np.ndarray
    gauge_eigenvalue: complex
    gauge_residual: float
    gauge_vector_error: float
    gap: float
    edge: float
    accepted: bool
    right: np.ndarray = field(repr=False)
    left: np.ndarray = field(repr=False)

    def as_dict(self):
        return {
            "nodes": self.problem.nodes,
            "coarse_nodes": self.coarse_nodes,
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
            "drifts": [float(x) for x in self.drifts],
            "converged": [bool(x) for x in self.converged],
            "gauge_eigenvalue": [float(self.gauge_eigenvalue.real),
                                 float(self.gauge_eigenvalue.imag)],
            "gauge_residual": float(self.gauge_residual),
            "gauge_vector_error": float(self.gauge_vector_error),
            "gap": float(self.gap),
            "edge": float(self.edge),
            "accepted": bool(self.accepted),
        }


def eigen(problem, coarse=None, drift_tol=_DRIFT_TOL):
    """Solve the dense eigenproblem and tag resolution-converged eigenvalues.

    ``coarse`` is the comparison problem (default: same profile at half
    resolution).  An eigenvalue counts as converged when some coarse
    eigenvalue sits within ``drift_tol`` relative distance.
    """
    if coarse is None:
        coarse = assemble(problem.profile, problem.nodes // 2)
    try:
        lam, vl, vr = linalg.eig(problem.matrix, left=True, right=True)
        lam_coarse = linalg.eigvals(coarse.matrix)
    except linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NonconvergenceError(
            "dense eigensolver failed",
            detail={"condition": float(np.linalg.cond(problem.matrix))}) from exc

    order = np.argsort(-lam.real)
    lam, vl, vr = lam[order], vl[:, order], vr[:, order]
    drifts = np.array([np.min(np.abs(lam_coarse - z)) / max(1.0, abs(z)) for z in lam])
    converged = drifts <= drift_tol

    # gauge diagnostics: nearest eigenvalue to 1 (converged preferred)
    pool = np.where(converged)[0]
    cand = pool if pool.size else np.arange(lam.size)
    ig = int(cand[np.argmin(np.abs(lam[cand] - 1.0))])
    gauge_lam = complex(lam[ig])
    gauge_res = abs(gauge_lam - 1.0)

    right, _ = _realify(vr[:, ig])
    left, _ = _realify(vl[:, ig])
    ghat = _weighted_gauge(problem)
    scale = float(right @ ghat) / float(right @ right)
    vec_err = float(np.max(np.abs(scale * right - ghat)) / np.max(np.abs(ghat)))

    rest = converged.copy()
    rest[ig] = False
    gap = float(-np.max(lam.real[rest])) if rest.any() else float("nan")
    resolved = np.abs(lam) <= problem.nodes  # larger |lambda| scales with D^2
    resolved[ig] = False
    edge = float(np.max(lam.real[resolved])) if resolved.any() else float("nan")
    accepted = bool(
        converged[ig]
        and gauge_res <= 1e-6
        and np.isfinite(gap)
        and gap > 0.0
        and not (rest & (lam.real >= -gap / 2.0)).any())

    return SpectrumReport(
        problem=problem, coarse_nodes=coarse.nodes, eigenvalues=lam,
        drifts=drifts, converged=converged, gauge_eigenvalue=gauge_lam,
        gauge_residual=gauge_res, gauge_vector_error=vec_err, gap=gap,
        edge=edge, accepted=accepted, right=scale * right, left=left)


def verify_gauge_ode(profile, grid=None):
    """Matrix-free check that the gauge mode solves its eigenvalue ODE.

    Plugs w = f' into

        (1-rho^2) w'' + ((n-1)/rho - 6 rho) w' - 6 w
            + (n-3) rho^-2 eta'(f) w = 0

    and returns the max-norm residual on the grid.  This validates the
    unit eigenvalue at ODE level, independently of any discretization.
    """
    target = profile.target
    n = target.n
    rho = np.asarray(grid, dtype=float) if grid is not None else \
        np.linspace(0.0, 50.0, 2001)
    w = profile.evaluate(rho, 1)
    wp = profile.evaluate(rho, 2)
    wpp = profile.evaluate(rho, 3)
    f = profile.evaluate(rho)
    at0 = rho == 0.0
    safe = np.where(at0, 1.0, rho)
    res = ((1.0 - rho**2) * wpp + ((n - 1) / safe - 6.0 * rho) * wp - 6.0 * w
           + (n - 3) * geometry.eta_deriv(target, f, 1) / safe**2 * w)
    if at0.any():
        third = geometry.eta_deriv(target, 0.0, 3)
        b = profile.b
        f3 = profile.evaluate(0.0, 3)  # f'''(0), so w''(0)
        origin = n * f3 - 6.0 * b + (n - 3) * third * b**3 / 2.0
        res = np.where(at0, origin, res)
    return float(np.max(np.abs(res)))


@dataclass
class Projector:
    """Rank-one spectral projector onto the gauge direction.

    ``right`` is scaled to match the discretized gauge mode, ``left`` is
    the dual vector with left @ right = 1, both in the weighted nodal
    representation; apply() realizes u -> (left @ u) right.
    """

    problem: SpectralProblem
    eigenvalue: complex
    right: np.ndarray
    left: np.ndarray

    def apply(self, u):
        u = np.asarray(u, dtype=float)
        return (self.left @ u) * self.right

    def coefficient(self, u):
        """Gauge-direction coordinate of a weighted nodal vector."""
        return float(self.left @ np.asarray(u, dtype=float))

    def physical_coefficient(self, rho_grid, phi1, phi2):
        """Gauge coordinate of physical fields sampled on an arbitrary grid.

        The fields are interpolated onto the collocation nodes that lie
        inside the sampled range (the weighted components of admissible
        states are negligible beyond it) and paired with ``left``.
        """
        rho_grid = np.asarray(rho_grid, dtype=float)
        rho = self.problem.rho
        inside = rho <= rho_grid[-1]
        br = np.sqrt(1.0 + rho * rho)
        p = np.zeros(2 * rho.size)
        p[:rho.size][inside] = br[inside] * np.interp(rho[inside], rho_grid, phi1)
        p[rho.size:][inside] = br[inside] ** 2 * np.interp(rho[inside], rho_grid, phi2)
        return float(self.left @ p)


def unstable_projection(report):
    """Build the rank-one projector from the converged gauge eigenpair."""
    lam = report.eigenvalues
    ig = int(np.argmin(np.abs(lam - report.gauge_eigenvalue)))
    if not report.converged[ig]:
        raise DegenerateEigenvalueError(
            f"gauge eigenvalue drift {report.drifts[ig]:.2e} exceeds the "
            "convergence tolerance at this resolution")
    others = np.abs(lam - lam[ig]) < 1e-3
    others[ig] = False
    if others.any():
        raise DegenerateEigenvalueError(
            "gauge eigenvalue is not simple at working resolution")
    right = report.right
    left = report.left
    denom = float(left @ right)
    # non-strict guard: a zero left vector must fail, not divide to NaN
    if not abs(denom) > 1e-10 * np.linalg.norm(left) * np.linalg.norm(right):
        raise DegenerateEigenvalueError("left/right gauge pairing is numerically defective")
    return Projector(problem=report.problem, eigenvalue=report.gauge_eigenvalue,
                     right=right, left=left / denom)
