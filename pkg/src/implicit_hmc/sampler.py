"""HMC and NUTS transitions with a pluggable integrator.

NUTS uses the slice-sampling formulation with recursive trajectory doubling
and progressive sampling between subtrees. With the leapfrog integrator this is lfNUTS;
with implicit midpoint it is iNUTS.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any, NamedTuple

import numpy as np

from .integrator import (
    INTEGRATORS,
    LEAPFROG,
    Integrator,
    hamiltonian,
    is_divergent,
)
from .model import TargetModel
from .solver import NewtonKrylovConfig, initial_guess
from .system import MassMatrix, PhasePoint, WorkCounters

ALGORITHMS = ("hmc", "nuts")


@dataclass(frozen=True)
class SamplerConfig:
    algorithm: str = "nuts"
    integrator: str = LEAPFROG
    stepsize: float = 0.1
    n_leapfrog_steps: int = 10
    max_tree_depth: int = 10
    n_samples: int = 1000
    n_warmup: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"integrator must be one of {INTEGRATORS}, got {self.integrator!r}")
        if not self.stepsize > 0:
            raise ValueError("stepsize must be positive")
        if self.n_leapfrog_steps < 1:
            raise ValueError("n_leapfrog_steps must be at least 1")
        if not 1 <= self.max_tree_depth <= 15:
            raise ValueError("max_tree_depth must lie in [1, 15]")
        if self.n_samples < 0 or self.n_warmup < 0:
            raise ValueError("sample counts must be nonnegative")


@dataclass
class DrawDiagnostics:
    """Per-transition record.

    For HMC ``tree_depth`` holds the accept indicator. ``n_steps`` is the
    number of integrator steps taken, the denominator of per-step averages.
    """

    energy: float
    tree_depth: int
    divergent: bool
    accept_stat: float
    work: WorkCounters = field(default_factory=WorkCounters)
    n_steps: int = 0


@dataclass
class ChainOutput:
    draws: np.ndarray
    diagnostics: list[DrawDiagnostics]
    model_name: str
    config: SamplerConfig
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def unreliable(self) -> bool:
        return bool(self.metadata.get("unreliable", False))


def make_rng(seed: int, chain_id: int = 0) -> np.random.Generator:
    """Counter-based (Philox) stream keyed by ``(seed, chain_id)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(chain_id)])))


def sample_momentum(mass: MassMatrix, rng: np.random.Generator) -> np.ndarray:
    return mass.scale_normal(rng.standard_normal(mass.dim))


def accept_probability(H0: float, H1: float) -> float:
    if not np.isfinite(H1):
        return 0.0
    return min(1.0, math.exp(min(0.0, H0 - H1)))


def _energy(model, mass, z, work):
    work.n_potential += 1
    with np.errstate(over="ignore", invalid="ignore"):
        return hamiltonian(model, mass, z)


def hmc_transition(
    model: TargetModel,
    mass: MassMatrix,
    cfg: SamplerConfig,
    rng: np.random.Generator,
    q0: np.ndarray,
    solver: NewtonKrylovConfig | None = None,
) -> tuple[np.ndarray, DrawDiagnostics]:
    """Fixed-length HMC: ``T`` integrator steps then a Metropolis correction."""
    integ = Integrator(cfg.integrator, model, mass, cfg.stepsize, solver)
    work = WorkCounters()
    z0 = PhasePoint(np.asarray(q0, dtype=float), sample_momentum(mass, rng))
    H0 = _energy(model, mass, z0, work)
    z = z0
    history = [z0.p]
    divergent = False
    n_steps = 0
    H1 = H0
    for _ in range(cfg.n_leapfrog_steps):
        res = integ.step(z, 1, initial_guess(history))
        work += res.work
        n_steps += 1
        if not res.ok or not res.point.is_finite():
            divergent = True
            break
        z = res.point
        history = [history[-1], z.p]
        H1 = _energy(model, mass, z, work)
        if is_divergent(H0, H1):
            divergent = True
            break

    alpha = 0.0 if divergent else accept_probability(H0, H1)
    accepted = rng.uniform() < alpha
    q_out, H_out = (z.q, H1) if accepted else (z0.q, H0)
    diag = DrawDiagnostics(H_out, int(accepted), divergent, alpha, work, n_steps)
    return q_out, diag


class _Node(NamedTuple):
    z: PhasePoint
    prev_p: np.ndarray | None  # momentum of the inward neighbour, for the solver guess


@dataclass
class _Subtree:
    minus: _Node
    plus: _Node
    proposal: PhasePoint
    proposal_H: float
    n: int
    s: bool
    alpha_sum: float
    n_alpha: int
    divergent: bool = False


class _NutsState:
    def __init__(self, integ, model, mass, H0, log_u, rng, trace):
        self.integ = integ
        self.model = model
        self.mass = mass
        self.H0 = H0
        self.log_u = log_u
        self.rng = rng
        self.trace = trace
        self.work = WorkCounters()
        self.n_steps = 0

    def no_uturn(self, minus: PhasePoint, plus: PhasePoint) -> bool:
        dq = plus.q - minus.q
        inv = self.mass.inv_apply
        return bool(dq @ inv(minus.p) >= 0 and dq @ inv(plus.p) >= 0)

    def leaf(self, node: _Node, direction: int) -> _Subtree:
        guess = node.prev_p if node.prev_p is not None else node.z.p
        res = self.integ.step(node.z, direction, guess)
        self.work += res.work
        self.n_steps += 1
        if not res.ok or not res.point.is_finite():
            return _Subtree(node, node, node.z, np.inf, 0, False, 0.0, 1, True)
        z = res.point
        if self.trace is not None:
            self.trace.append(z.q.copy())
        H = _energy(self.model, self.mass, z, self.work)
        new = _Node(z, node.z.p)
        divergent = is_divergent(self.H0, H)
        n = int(self.log_u <= -H) if np.isfinite(H) else 0
        alpha = accept_probability(self.H0, H)
        return _Subtree(new, new, z, H, n, not divergent, alpha, 1, divergent)

    def build(self, node: _Node, direction: int, depth: int) -> _Subtree:
        if depth == 0:
            return self.leaf(node, direction)
        first = self.build(node, direction, depth - 1)
        if not first.s:
            return first
        outer = first.plus if direction > 0 else first.minus
        second = self.build(outer, direction, depth - 1)
        if direction > 0:
            minus, plus = first.minus, second.plus
        else:
            minus, plus = second.minus, first.plus
        total = first.n + second.n
        proposal, proposal_H = first.proposal, first.proposal_H
        if second.n > 0 and self.rng.uniform() < second.n / total:
            proposal, proposal_H = second.proposal, second.proposal_H
        s = second.s and self.no_uturn(minus.z, plus.z)
        return _Subtree(
            minus,
            plus,
            proposal,
            proposal_H,
            total,
            s,
            first.alpha_sum + second.alpha_sum,
            first.n_alpha + second.n_alpha,
            first.divergent or second.divergent,
        )


def nuts_transition(
    model: TargetModel,
    mass: MassMatrix,
    cfg: SamplerConfig,
    rng: np.random.Generator,
    q0: np.ndarray,
    solver: NewtonKrylovConfig | None = None,
    trace: list | None = None,
) -> tuple[np.ndarray, DrawDiagnostics]:
    """One NUTS transition.

    If ``trace`` is a list, every position visited by the trajectory is
    appended to it (the initial point first).
    """
    integ = Integrator(cfg.integrator, model, mass, cfg.stepsize, solver)
    z0 = PhasePoint(np.asarray(q0, dtype=float), sample_momentum(mass, rng))
    work0 = WorkCounters()
    H0 = _energy(model, mass, z0, work0)
    log_u = -H0 + math.log(rng.uniform())
    state = _NutsState(integ, model, mass, H0, log_u, rng, trace)
    state.work += work0
    if trace is not None:
        trace.append(z0.q.copy())

    minus = plus = _Node(z0, None)
    proposal, proposal_H = z0, H0
    n = 1
    s = True
    depth = 0
    divergent = False
    alpha_sum, n_alpha = 0.0, 0
    while s and depth < cfg.max_tree_depth:
        direction = 1 if rng.uniform() < 0.5 else -1
        if direction > 0:
            sub = state.build(plus, 1, depth)
            plus = sub.plus
        else:
            sub = state.build(minus, -1, depth)
            minus = sub.minus
        alpha_sum += sub.alpha_sum
        n_alpha += sub.n_alpha
        divergent = divergent or sub.divergent
        if sub.s and sub.n > 0 and rng.uniform() < min(1.0, sub.n / n):
            proposal, proposal_H = sub.proposal, sub.proposal_H
        n += sub.n
        s = sub.s and state.no_uturn(minus.z, plus.z)
        depth += 1

    accept_stat = alpha_sum / n_alpha if n_alpha else 0.0
    diag = DrawDiagnostics(proposal_H, depth, divergent, accept_stat, state.work, state.n_steps)
    return proposal.q, diag


def transition(model, mass, cfg, rng, q0, solver=None):
    if cfg.algorithm == "hmc":
        return hmc_transition(model, mass, cfg, rng, q0, solver)
    return nuts_transition(model, mass, cfg, rng, q0, solver)


def run_chain(
    model: TargetModel,
    mass: MassMatrix,
    cfg: SamplerConfig,
    rng: np.random.Generator | None = None,
    q_init: np.ndarray | None = None,
    solver: NewtonKrylovConfig | None = None,
    adapt: Any = None,
) -> ChainOutput:
    """Warmup followed by ``cfg.n_samples`` recorded transitions.

    ``adapt`` is an optional :class:`implicit_hmc.adapt.AdaptConfig`; when
    given, the stepsize (and optionally the integrator) is tuned before the
    warmup transitions. Deterministic given ``cfg.seed`` when ``rng`` is None.
    """
    if rng is None:
        rng = make_rng(cfg.seed)
    q = np.zeros(model.dim) if q_init is None else np.array(q_init, dtype=float)
    if q.shape != (model.dim,) or not np.all(np.isfinite(q)):
        raise ValueError("q_init must be a finite vector of the model dimension")

    metadata: dict[str, Any] = {}
    if adapt is not None:
        from .adapt import warmup_tuning

        cfg, report, q = warmup_tuning(model, mass, cfg, rng, q, solver, adapt)
        metadata["adapt"] = report.to_dict()

    warmup_divergent = 0
    for _ in range(cfg.n_warmup):
        q, diag = transition(model, mass, cfg, rng, q, solver)
        warmup_divergent += diag.divergent

    draws = np.empty((cfg.n_samples, model.dim))
    diagnostics = []
    for i in range(cfg.n_samples):
        q, diag = transition(model, mass, cfg, rng, q, solver)
        draws[i] = q
        diagnostics.append(diag)

    n_div = sum(d.divergent for d in diagnostics)
    metadata.update(
        stepsize=cfg.stepsize,
        integrator=cfg.integrator,
        warmup_divergences=warmup_divergent,
        divergences=n_div,
        unreliable=bool(cfg.n_samples > 0 and n_div > 0.5 * cfg.n_samples),
    )
    return ChainOutput(draws, diagnostics, model.name, cfg, metadata)


def config_echo(cfg: SamplerConfig) -> dict[str, Any]:
    return asdict(cfg)
