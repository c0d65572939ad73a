"""Leapfrog and implicit midpoint steps plus their linear stability analysis."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import sym_eigenvalues
from .model import TargetModel
from .solver import NewtonKrylovConfig, NewtonKrylovReport, newton_krylov_solve
from .system import MassMatrix, PhasePoint, WorkCounters

LEAPFROG = "leapfrog"
IMPLICIT_MIDPOINT = "implicit_midpoint"
INTEGRATORS = (LEAPFROG, IMPLICIT_MIDPOINT)

# energy error beyond which a trajectory counts as divergent
DIVERGENCE_THRESHOLD = 1000.0


@dataclass
class StepResult:
    point: PhasePoint | None
    work: WorkCounters = field(default_factory=WorkCounters)
    solver_report: NewtonKrylovReport | None = None
    ok: bool = True


@dataclass(frozen=True)
class StabilityReport:
    lambda_max: float
    lambda_min: float
    kappa: float
    h_max_leapfrog: float


def hamiltonian(model: TargetModel, mass: MassMatrix, z: PhasePoint) -> float:
    """``U(q) + 0.5 p^T M^{-1} p``."""
    return model.potential(z.q) + mass.kinetic(z.p)


def is_divergent(H0: float, H: float) -> bool:
    return not np.isfinite(H) or H - H0 > DIVERGENCE_THRESHOLD


def leapfrog_step(model: TargetModel, mass: MassMatrix, z: PhasePoint, h: float) -> StepResult:
    """One leapfrog step; evaluates the gradient at both ends (2 gradients)."""
    if h <= 0:
        raise ValueError("stepsize must be positive")
    g0 = model.gradient(z.q)
    q1 = z.q + h * mass.inv_apply(z.p) - 0.5 * h * h * mass.inv_apply(g0)
    g1 = model.gradient(q1)
    p1 = z.p - 0.5 * h * g0 - 0.5 * h * g1
    return StepResult(PhasePoint(q1, p1), WorkCounters(n_grad=2))


def midpoint_step(
    model: TargetModel,
    mass: MassMatrix,
    z: PhasePoint,
    h: float,
    cfg: NewtonKrylovConfig | None = None,
    guess: np.ndarray | None = None,
) -> StepResult:
    """One implicit midpoint step.

    The new momentum comes from the Newton-Krylov solve started at ``guess``
    (default: the current momentum); the position then follows explicitly.
    """
    if h <= 0:
        raise ValueError("stepsize must be positive")
    if cfg is None:
        cfg = NewtonKrylovConfig()
    work = WorkCounters()
    p1, report = newton_krylov_solve(model, mass, z.q, z.p, h, cfg, x0=guess, counters=work)
    if not report.converged:
        return StepResult(None, work, report, ok=False)
    q1 = z.q + 0.5 * h * mass.inv_apply(z.p + p1)
    return StepResult(PhasePoint(q1, p1), work, report, ok=True)


class Integrator:
    """Callable wrapper selecting one of the two one-step maps.

    ``step(z, direction, guess)`` integrates forward for ``direction=+1`` and
    backward for ``-1`` (by momentum flips, since both maps are symmetric).
    """

    def __init__(
        self,
        kind: str,
        model: TargetModel,
        mass: MassMatrix,
        h: float,
        solver: NewtonKrylovConfig | None = None,
    ):
        if kind not in INTEGRATORS:
            raise ValueError(f"unknown integrator {kind!r}; expected one of {INTEGRATORS}")
        if h <= 0:
            raise ValueError("stepsize must be positive")
        self.kind = kind
        self.model = model
        self.mass = mass
        self.h = float(h)
        self.solver = solver if solver is not None else NewtonKrylovConfig()

    @property
    def implicit(self) -> bool:
        return self.kind == IMPLICIT_MIDPOINT

    def forward(self, z: PhasePoint, guess: np.ndarray | None = None) -> StepResult:
        if self.kind == LEAPFROG:
            return leapfrog_step(self.model, self.mass, z, self.h)
        return midpoint_step(self.model, self.mass, z, self.h, self.solver, guess)

    def step(self, z: PhasePoint, direction: int = 1, guess: np.ndarray | None = None) -> StepResult:
        with np.errstate(over="ignore", invalid="ignore"):
            if direction > 0:
                return self.forward(z, guess)
            res = self.forward(z.flipped(), None if guess is None else -guess)
        if res.point is not None:
            res.point = res.point.flipped()
        return res


def leapfrog_update_matrix(sigma_inv: np.ndarray, mass: MassMatrix, h: float) -> np.ndarray:
    """Exact one-step leapfrog map on ``(q, p)`` for ``U = 0.5 q^T A q``."""
    A = np.atleast_2d(np.asarray(sigma_inv, dtype=float))
    d = A.shape[0]
    Minv = mass.inverse_matrix
    eye = np.eye(d)
    qq = eye - 0.5 * h * h * Minv @ A
    qp = h * Minv
    pq = -0.5 * h * A - 0.5 * h * A @ qq
    pp = eye - 0.5 * h * h * A @ Minv
    return np.block([[qq, qp], [pq, pp]])


def midpoint_update_matrix(sigma_inv: np.ndarray, mass: MassMatrix, h: float) -> np.ndarray:
    """Exact one-step implicit midpoint map (Cayley transform of the flow)."""
    A = np.atleast_2d(np.asarray(sigma_inv, dtype=float))
    d = A.shape[0]
    flow = np.block([[np.zeros((d, d)), mass.inverse_matrix], [-A, np.zeros((d, d))]])
    eye = np.eye(2 * d)
    return np.linalg.solve(eye - 0.5 * h * flow, eye + 0.5 * h * flow)


def eigenvalue_moduli(update: np.ndarray) -> np.ndarray:
    return np.abs(np.linalg.eigvals(update))


def stability_report(sigma_inv_or_hessian: np.ndarray) -> StabilityReport:
    """Spectrum summary and the leapfrog stepsize limit ``2 / sqrt(lambda_max)``."""
    eig = sym_eigenvalues(np.atleast_2d(sigma_inv_or_hessian))
    if eig[0] <= 0:
        raise ValueError(f"matrix has a non-positive eigenvalue {eig[0]:g}")
    lam_min, lam_max = float(eig[0]), float(eig[-1])
    return StabilityReport(lam_max, lam_min, lam_max / lam_min, 2.0 / np.sqrt(lam_max))
