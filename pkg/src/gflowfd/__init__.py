"""Positivity-preserving, energy-dissipative finite differences for gradient flows.

Second- and fourth-order (Q1 / Q2 spectral element) schemes for the linear
Fokker-Planck and Keller-Segel equations written as
``d_t rho = div(M grad(rho / M))``, with monotonicity certificates.
"""
__version__ = "0.1.0"

from .grid import Grid, QuadratureWeights, lumped_weights, make_grid  # noqa: E402
from .assembly import (  # noqa: E402
    SparseOperator,
    assemble_helmholtz,
    assemble_step_matrix,
    assemble_stiffness,
    axis_helmholtz_matrix,
)
from .linalg import helmholtz_solve, pcg_solve  # noqa: E402
from .monotonicity import (  # noqa: E402
    CertificateReport,
    check_lorenz_sharp,
    check_mesh_constraint,
    check_mmatrix_rowsum,
    lorenz_split,
    verify_monotone_dense,
)
from .solver import (  # noqa: E402
    FokkerPlanck,
    KellerSegel,
    ProblemSpec,
    State,
    energy,
    initial_state,
    run,
    step,
    step_explicit,
)

__all__ = [
    "Grid",
    "QuadratureWeights",
    "make_grid",
    "lumped_weights",
    "SparseOperator",
    "assemble_stiffness",
    "assemble_step_matrix",
    "assemble_helmholtz",
    "axis_helmholtz_matrix",
    "pcg_solve",
    "helmholtz_solve",
    "CertificateReport",
    "check_mmatrix_rowsum",
    "lorenz_split",
    "check_lorenz_sharp",
    "check_mesh_constraint",
    "verify_monotone_dense",
    "FokkerPlanck",
    "KellerSegel",
    "ProblemSpec",
    "State",
    "initial_state",
    "step",
    "step_explicit",
    "energy",
    "run",
]
