"""Optimal distributed control of a Cahn-Hilliard-Darcy system with mass sources."""
from chd_opt.adjoint import AdjointForcing, adjoint_sweep, costate, reduced_gradient
from chd_opt.control import (
    AdmissibleSet,
    CostConfig,
    OptimizeOptions,
    OptimizeReport,
    StallError,
    cost,
    optimality_residuals,
    optimize,
    project_admissible,
)
from chd_opt.darcy import solve_pressure
from chd_opt.grid import Grid2D, NonConvergence, VectorField
from chd_opt.kernels import BACKEND
from chd_opt.materials import (
    ConstantViscosity,
    DomainError,
    PotentialParams,
    TanhViscosity,
    entropy_F,
    psi,
)
from chd_opt.second_order import (
    critical_cone_project,
    dt_apply,
    hessian_quadratic,
    sufficiency_probe,
)
from chd_opt.state import CHDSystem, SolverOptions, SourceSchedule, run, step
from chd_opt.tangent import TangentForcing, ds_apply

__version__ = "0.1.0"

__all__ = [
    "AdjointForcing", "AdmissibleSet", "BACKEND", "CHDSystem", "ConstantViscosity", "CostConfig",
    "DomainError", "Grid2D", "NonConvergence", "OptimizeOptions", "OptimizeReport", "PotentialParams",
    "SolverOptions", "SourceSchedule", "StallError", "TangentForcing", "TanhViscosity", "VectorField",
    "adjoint_sweep", "cost", "costate", "critical_cone_project", "ds_apply", "dt_apply", "entropy_F",
    "hessian_quadratic", "optimality_residuals", "optimize", "project_admissible", "psi",
    "reduced_gradient", "run", "solve_pressure", "step", "sufficiency_probe",
]
