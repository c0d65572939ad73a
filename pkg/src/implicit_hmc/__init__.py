"""Hamiltonian Monte Carlo and NUTS with leapfrog or implicit midpoint integration.

The implicit midpoint step is solved matrix-free with a Newton-Krylov method
built on Hessian-vector products, which lets the sampler take stepsizes far
beyond the leapfrog stability limit on multiscale targets.
"""

from .adapt import AdaptConfig, AdaptReport, TuningError, choose_integrator, tune_stepsize
from .diagnostics import ConstantChainWarning, SummaryTable, effective_sample_size, summarize
from .integrator import (
    IMPLICIT_MIDPOINT,
    LEAPFROG,
    Integrator,
    hamiltonian,
    leapfrog_step,
    midpoint_step,
    stability_report,
)
from .linalg import LinearOperator, gmres, power_method, sym_eigenvalues
from .model import (
    ModelError,
    ModelSpec,
    TargetModel,
    banana_model,
    correlated_gaussian,
    funnel_model,
    gaussian_model,
    make_model,
)
from .sampler import ChainOutput, SamplerConfig, make_rng, run_chain
from .solver import NewtonKrylovConfig, newton_krylov_solve
from .system import MassMatrix, PhasePoint, WorkCounters

__version__ = "0.1.0"

__all__ = [
    "AdaptConfig", "AdaptReport", "ChainOutput", "ConstantChainWarning", "IMPLICIT_MIDPOINT",
    "Integrator", "LEAPFROG", "LinearOperator", "MassMatrix", "ModelError", "ModelSpec",
    "NewtonKrylovConfig", "PhasePoint", "SamplerConfig", "SummaryTable", "TargetModel",
    "TuningError", "WorkCounters", "banana_model", "choose_integrator", "correlated_gaussian",
    "effective_sample_size", "funnel_model", "gaussian_model", "gmres", "hamiltonian",
    "leapfrog_step", "make_model", "make_rng", "midpoint_step", "newton_krylov_solve",
    "power_method", "run_chain", "stability_report", "summarize", "sym_eigenvalues",
    "tune_stepsize",
]
