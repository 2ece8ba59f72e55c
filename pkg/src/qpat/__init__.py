"""Semilinear transport and diffusion models for two-photon photoacoustic imaging.

Forward solvers, first- and second-order linearizations, internal data,
reconstruction of the one- and two-photon absorption coefficients, and the
stability / misspecification checks that go with them.
"""

from .domain import (
    AngularQuadrature,
    BoundarySource,
    CoefficientSet,
    ScatteringKernel,
    SpatialGrid,
    discrete_norms,
    validate_coefficients,
    velocity_average,
)
from .errors import (
    CoefficientError,
    ConfigError,
    DivergenceError,
    PreconditionError,
    QpatError,
    ShapeError,
)
from .transport import solve_linear_rte, solve_semilinear_rte
from .diffusion import solve_linear_diffusion, solve_semilinear_diffusion
from .linearization import linearize, verify_derivatives
from .data import InternalData, linearized_data, make_data
from .reconstruction import (
    certify_admissibility,
    reconstruct_sigma_a_diffusion,
    reconstruct_sigma_a_transport,
    reconstruct_sigma_b_diffusion,
    reconstruct_sigma_b_transport,
)
from .uq import uq_diffusion_sweep, uq_transport_sweep

__version__ = "0.1.0"

__all__ = [
    "AngularQuadrature", "BoundarySource", "CoefficientSet", "ScatteringKernel", "SpatialGrid",
    "discrete_norms", "validate_coefficients", "velocity_average",
    "CoefficientError", "ConfigError", "DivergenceError", "PreconditionError", "QpatError",
    "ShapeError",
    "solve_linear_rte", "solve_semilinear_rte", "solve_linear_diffusion",
    "solve_semilinear_diffusion", "linearize", "verify_derivatives",
    "InternalData", "linearized_data", "make_data",
    "certify_admissibility", "reconstruct_sigma_a_diffusion", "reconstruct_sigma_a_transport",
    "reconstruct_sigma_b_diffusion", "reconstruct_sigma_b_transport",
    "uq_diffusion_sweep", "uq_transport_sweep",
]
