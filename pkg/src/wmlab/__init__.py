"""Numerical laboratory for equivariant self-similar blowup into warped spheres.

The package builds the self-similar profile of the equivariant wave-map
flow into a deformed sphere, checks its linear stability spectrum in
similarity coordinates, and evolves perturbed data to exhibit the stable
blowup, including the blowup-time tuning that removes the symmetry mode.
"""

from .errors import (BlowupDetectedError, ConfigurationError,
                     ContractionFailureError, DegenerateEigenvalueError,
                     DegenerateProfileError, DivergedSeriesError,
                     NoAnalyticBranchError, NonconvergenceError,
                     UnsupportedOrderError)
from .geometry import (DEFAULT_BASIS, PerturbationBasis, WarpedTarget,
                       eta_cubic_coefficient, eta_deriv, w_deriv)
from .profile import (ProfileSolution, flat_profile, lipschitz_in_epsilon,
                      newton_collocation, solve_profile)
from .operators import (RadialField, apply_nonlinearity, decompose_static,
                        gauge_mode, nonlinear_remainder, potential,
                        static_residual)
from .spectral import (Projector, SpectralProblem, SpectrumReport, assemble,
                       eigen, unstable_projection, verify_gauge_ode)
from .norms import (DecayFit, NormSpec, decay_exponent, evaluate_norms,
                    fractional_norm, radial_derivatives, sobolev_seminorm,
                    weighted_sup)
from .evolution import (DecayReport, EvolutionConfig, PerturbationSpec,
                        SimilarityState, evolve, fit_exponential,
                        initial_data, physical_diagnostics, step,
                        tune_blowup_time)

__version__ = "0.1.0"

__all__ = [
    "BlowupDetectedError", "ConfigurationError", "ContractionFailureError",
    "DegenerateEigenvalueError", "DegenerateProfileError",
    "DivergedSeriesError", "NoAnalyticBranchError", "NonconvergenceError",
    "UnsupportedOrderError",
    "DEFAULT_BASIS", "PerturbationBasis", "WarpedTarget",
    "eta_cubic_coefficient", "eta_deriv", "w_deriv",
    "ProfileSolution", "flat_profile", "lipschitz_in_epsilon",
    "newton_collocation", "solve_profile",
    "RadialField", "apply_nonlinearity", "decompose_static", "gauge_mode",
    "nonlinear_remainder", "potential", "static_residual",
    "Projector", "SpectralProblem", "SpectrumReport", "assemble", "eigen",
    "unstable_projection", "verify_gauge_ode",
    "DecayFit", "NormSpec", "decay_exponent", "evaluate_norms",
    "fractional_norm", "radial_derivatives", "sobolev_seminorm",
    "weighted_sup",
    "DecayReport", "EvolutionConfig", "PerturbationSpec", "SimilarityState",
    "evolve", "fit_exponential", "initial_data", "physical_diagnostics",
    "step", "tune_blowup_time",
    "__version__",
]
