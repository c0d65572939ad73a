"""Warmup stepsize halving and the leapfrog-vs-midpoint selection heuristic."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from .integrator import IMPLICIT_MIDPOINT, INTEGRATORS, LEAPFROG, Integrator, hamiltonian, is_divergent
from .linalg import LinearOperator, PowerResult, power_method
from .model import TargetModel
from .sampler import SamplerConfig, accept_probability, sample_momentum
from .solver import NewtonKrylovConfig, initial_guess
from .system import MassMatrix, PhasePoint

MIN_STEPSIZE = 1e-8


class TuningError(RuntimeError):
    """The stepsize underflowed before a pathology-free probe round."""


class PowerMethodWarning(UserWarning):
    pass


@dataclass(frozen=True)
class AdaptConfig:
    h0: float
    probe_budget: int = 8
    auto_integrator: bool = False
    hvp_cost: float = 1.25
    probe_steps: int = 32

    def __post_init__(self):
        if not self.h0 > 0:
            raise ValueError("h0 must be positive")
        if self.probe_budget < 1 or self.probe_steps < 1:
            raise ValueError("probe_budget and probe_steps must be positive")
        if self.hvp_cost <= 0:
            raise ValueError("hvp_cost must be positive")


@dataclass
class AdaptReport:
    chosen_h: float
    halvings: int
    integrator: str
    lambda_max_estimates: list[tuple[list[float], float]] = field(default_factory=list)
    recommended_integrator: str = LEAPFROG
    avg_midpoint_work_per_step: float | None = None

    @property
    def h_leapfrog_estimates(self) -> list[float]:
        return [2.0 / np.sqrt(lam) for _, lam in self.lambda_max_estimates if lam > 0]

    def to_dict(self) -> dict[str, Any]:
        return {
            "chosen_h": self.chosen_h,
            "halvings": self.halvings,
            "integrator": self.integrator,
            "lambda_max_estimates": [
                {"q": list(map(float, q)), "lambda_max": float(lam)}
                for q, lam in self.lambda_max_estimates
            ],
            "recommended_integrator": self.recommended_integrator,
            "avg_midpoint_work_per_step": self.avg_midpoint_work_per_step,
        }


def local_hessian_operator(model: TargetModel, mass: MassMatrix, q: np.ndarray) -> LinearOperator:
    """``v -> Hess U(q) M^{-1} v``, the mass-preconditioned local curvature."""
    q = np.asarray(q, dtype=float)
    return LinearOperator(model.dim, lambda v: model.hessian_vec(q, mass.inv_apply(v)))


def local_lambda_max(
    model: TargetModel, mass: MassMatrix, q: np.ndarray, tol: float = 1e-6, seed: int = 0
) -> PowerResult:
    res = power_method(local_hessian_operator(model, mass, q), tol=tol, max_iter=500, seed=seed)
    if not res.converged:
        warnings.warn(
            f"power method did not converge at q={np.asarray(q)}; using best estimate",
            PowerMethodWarning,
            stacklevel=3,
        )
    return res


def estimate_local_hmax(
    model: TargetModel, mass: MassMatrix, q: np.ndarray, tol: float = 1e-6, seed: int = 0
) -> float:
    """Local leapfrog stability limit ``2 / sqrt(|lambda_max|)`` at ``q``."""
    lam = abs(local_lambda_max(model, mass, q, tol, seed).eigenvalue)
    return np.inf if lam == 0 else 2.0 / np.sqrt(lam)


def choose_integrator(
    h_lf_estimates, h_mid: float, avg_mid_work_per_step: float
) -> str:
    """Pick the integrator with more distance per unit of work.

    Leapfrog costs 2 gradients a step, so its efficiency is ``min(h_lf) / 2``;
    midpoint's is ``h_mid`` over its measured work per step. Ties go to
    leapfrog.
    """
    h_lf = list(h_lf_estimates)
    if not h_lf:
        raise ValueError("need at least one leapfrog stepsize estimate")
    if avg_mid_work_per_step < 2:
        raise ValueError("midpoint work per step cannot be below 2")
    e_lf = min(h_lf) / 2.0
    e_mid = h_mid / avg_mid_work_per_step
    return IMPLICIT_MIDPOINT if e_mid > e_lf else LEAPFROG


def _probe(integ: Integrator, model, mass, q, steps, rng):
    """Run one probe trajectory; return (pathology, end state, H0, H1, steps, work)."""
    z0 = PhasePoint(q, sample_momentum(mass, rng))
    with np.errstate(over="ignore", invalid="ignore"):
        H0 = hamiltonian(model, mass, z0)
    z = z0
    history = [z0.p]
    grads = hvps = 0
    H1 = H0
    for n in range(1, steps + 1):
        res = integ.step(z, 1, initial_guess(history))
        grads += res.work.n_grad
        hvps += res.work.n_hvp
        if not res.ok or not res.point.is_finite():
            return True, z0, H0, np.inf, n, (grads, hvps)
        z = res.point
        history = [history[-1], z.p]
        with np.errstate(over="ignore", invalid="ignore"):
            H1 = hamiltonian(model, mass, z)
        if is_divergent(H0, H1):
            return True, z0, H0, H1, n, (grads, hvps)
    return False, z, H0, H1, steps, (grads, hvps)


def tune_stepsize(
    model: TargetModel,
    mass: MassMatrix,
    integrator: str,
    h0: float,
    probe_budget: int,
    rng: np.random.Generator,
    q0: np.ndarray | None = None,
    solver: NewtonKrylovConfig | None = None,
    *,
    probe_steps: int = 32,
    hvp_cost: float = 1.25,
    power_tol: float = 1e-6,
) -> AdaptReport:
    """Halve the stepsize until a full round of probe trajectories is clean.

    A round is ``probe_budget`` HMC-style probes of ``probe_steps`` steps,
    each starting where the previous probe's Metropolis step left the chain.
    A probe is pathological when the energy error exceeds the divergence
    threshold, a state turns non-finite, or the midpoint solve fails.
    """
    if integrator not in INTEGRATORS:
        raise ValueError(f"unknown integrator {integrator!r}")
    if not h0 > 0:
        raise ValueError("h0 must be positive")
    q = np.zeros(model.dim) if q0 is None else np.array(q0, dtype=float)
    h = float(h0)
    halvings = 0
    while True:
        if h < MIN_STEPSIZE:
            raise TuningError(
                f"stepsize fell below {MIN_STEPSIZE:g} for model {model.name!r} "
                f"with integrator {integrator!r}"
            )
        integ = Integrator(integrator, model, mass, h, solver)
        starts = []
        steps = grads = hvps = 0
        failed = False
        for _ in range(probe_budget):
            starts.append(q.copy())
            bad, z_end, H0, H1, n, (g, v) = _probe(integ, model, mass, q, probe_steps, rng)
            steps += n
            grads += g
            hvps += v
            if bad:
                failed = True
                break
            if rng.uniform() < accept_probability(H0, H1):
                q = z_end.q
        if failed:
            h *= 0.5
            halvings += 1
            continue
        break

    estimates = []
    for i, qs in enumerate(starts):
        lam = abs(local_lambda_max(model, mass, qs, power_tol, seed=i).eigenvalue)
        estimates.append((qs, lam))
    report = AdaptReport(h, halvings, integrator, estimates)
    report.start_q = q
    if integrator == IMPLICIT_MIDPOINT:
        report.avg_midpoint_work_per_step = (grads + hvp_cost * hvps) / steps
        h_lf = report.h_leapfrog_estimates
        if h_lf:
            report.recommended_integrator = choose_integrator(
                h_lf, h, max(2.0, report.avg_midpoint_work_per_step)
            )
        else:
            report.recommended_integrator = IMPLICIT_MIDPOINT
    return report


def warmup_tuning(
    model: TargetModel,
    mass: MassMatrix,
    cfg: SamplerConfig,
    rng: np.random.Generator,
    q: np.ndarray,
    solver: NewtonKrylovConfig | None,
    adapt: AdaptConfig,
) -> tuple[SamplerConfig, AdaptReport, np.ndarray]:
    """Tune ``cfg`` before sampling; returns the updated config, report and state.

    With ``auto_integrator`` the tuning starts from implicit midpoint, and
    switches to a re-tuned leapfrog when the heuristic prefers it.
    """
    integrator = IMPLICIT_MIDPOINT if adapt.auto_integrator else cfg.integrator
    report = tune_stepsize(
        model, mass, integrator, adapt.h0, adapt.probe_budget, rng, q, solver,
        probe_steps=adapt.probe_steps, hvp_cost=adapt.hvp_cost,
    )
    if adapt.auto_integrator and report.recommended_integrator == LEAPFROG:
        h_lf = min(report.h_leapfrog_estimates)
        lf = tune_stepsize(
            model, mass, LEAPFROG, h_lf, adapt.probe_budget, rng, report.start_q, solver,
            probe_steps=adapt.probe_steps, hvp_cost=adapt.hvp_cost,
        )
        lf.recommended_integrator = LEAPFROG
        lf.avg_midpoint_work_per_step = report.avg_midpoint_work_per_step
        lf.lambda_max_estimates = report.lambda_max_estimates
        report = lf
    new_cfg = replace(cfg, stepsize=report.chosen_h, integrator=report.integrator)
    return new_cfg, report, report.start_q
