"""Globally optimal curvature-prior elastica geodesics on images.

The package solves a static Hamilton-Jacobi-Bellman equation on the lifted
domain of positions and orientations with a generalized fast-marching scheme,
where the bending energy penalizes the deviation of path curvature from a
data-driven reference value, and provides the full tracking pipeline:
orientation-score costs, skeleton-derived curvature priors, geodesic
backtracking, evaluation and a small HTTP service.
"""

from .grid import (
    LiftedGrid,
    LiftedPoint,
    ScalarField,
    make_grid,
    index_of,
    shift,
    read_field,
    write_field,
)
from .hamiltonian import (
    Covector,
    ModelParams,
    ControlSample,
    control_samples,
    hamiltonian_closed,
    hamiltonian_gradient,
    hamiltonian_quadrature,
    metric_value,
    transform_covector,
)
from .stencil import (
    SellingDecomposition,
    Stencil,
    WeightedOffset,
    build_stencil,
    directional_decomposition,
    relaxed_tensor,
    selling_3d,
)
from .solver import (
    SeedSet,
    SolveReport,
    SolverError,
    UnreachableTargetError,
    local_update,
    solve,
    solve_bidirectional,
)

__version__ = "0.1.0"

__all__ = [
    "LiftedGrid", "LiftedPoint", "ScalarField", "make_grid", "index_of",
    "shift", "read_field", "write_field",
    "Covector", "ModelParams", "ControlSample", "control_samples",
    "hamiltonian_closed", "hamiltonian_gradient", "hamiltonian_quadrature",
    "metric_value", "transform_covector",
    "SellingDecomposition", "Stencil", "WeightedOffset", "build_stencil",
    "directional_decomposition", "relaxed_tensor", "selling_3d",
    "SeedSet", "SolveReport", "SolverError", "UnreachableTargetError",
    "local_update", "solve", "solve_bidirectional",
]
