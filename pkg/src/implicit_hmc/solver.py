"""Jacobian-free Newton-Krylov solve of the implicit midpoint step.

The midpoint equations are reduced to ``D`` unknowns, the new momentum ``x``::

    g(x) = x - p_n + h * grad U(q_n + (h/4) M^{-1} (p_n + x))

whose Jacobian ``I + (h^2/4) Hess U(q_mid) M^{-1}`` is only ever applied to
vectors through Hessian-vector products. Inner solves use GMRES with
Eisenstat-Walker forcing terms and the outer step is globalized by
backtracking on the merit function ``0.5 * ||g||^2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence, Union

import numpy as np

from .linalg import LinearOperator, gmres
from .model import TargetModel
from .system import MassMatrix, WorkCounters

EISENSTAT_WALKER = "eisenstat_walker_21"


@dataclass(frozen=True)
class NewtonKrylovConfig:
    """Solver constants.

    ``forcing`` is ``"eisenstat_walker_21"`` or a float giving a constant
    relative tolerance for every inner GMRES solve.
    """

    residual_tol: float = 1e-10
    max_newton_iters: int = 50
    max_krylov_iters: int = 50
    forcing: Union[str, float] = EISENSTAT_WALKER
    eta_min: float = 1e-10
    eta_max: float = 0.9
    eta0: float = 0.5
    max_backtracks: int = 20
    armijo_c: float = 1e-4

    def __post_init__(self):
        if not self.residual_tol > 0:
            raise ValueError("residual_tol must be positive")
        if not 0 < self.eta_min <= self.eta0 <= self.eta_max < 1:
            raise ValueError("need 0 < eta_min <= eta0 <= eta_max < 1")
        if isinstance(self.forcing, str):
            if self.forcing != EISENSTAT_WALKER:
                raise ValueError(f"unknown forcing {self.forcing!r}")
        elif isinstance(self.forcing, bool) or not 0 < float(self.forcing) < 1:
            raise ValueError("constant forcing term must lie in (0, 1)")
        if self.max_newton_iters < 1 or self.max_krylov_iters < 1:
            raise ValueError("iteration limits must be positive")
        if self.max_backtracks < 0:
            raise ValueError("max_backtracks must be nonnegative")
        if not 0 < self.armijo_c < 0.5:
            raise ValueError("armijo_c must lie in (0, 0.5)")


@dataclass
class NewtonKrylovReport:
    newton_iters: int = 0
    krylov_iters_total: int = 0
    final_residual: float = np.inf
    converged: bool = False
    backtracks_total: int = 0
    krylov_iters: list[int] = field(default_factory=list)
    residual_history: list[float] = field(default_factory=list)


class LineSearchError(RuntimeError):
    """Backtracking exhausted without meeting the sufficient-decrease test."""


class LineSearchResult(NamedTuple):
    alpha: float
    x: np.ndarray
    residual: np.ndarray
    backtracks: int


def _midpoint_position(mass, q_n, p_n, h, x):
    return q_n + 0.25 * h * mass.inv_apply(p_n + x)


def residual_g(
    model: TargetModel,
    mass: MassMatrix,
    q_n: np.ndarray,
    p_n: np.ndarray,
    h: float,
    x: np.ndarray,
    counters: WorkCounters | None = None,
) -> np.ndarray:
    """Residual of the reduced midpoint system at trial momentum ``x``."""
    if counters is not None:
        counters.n_grad += 1
    q_mid = _midpoint_position(mass, q_n, p_n, h, x)
    return x - p_n + h * model.gradient(q_mid)


def jacobian_vec(
    model: TargetModel,
    mass: MassMatrix,
    q_n: np.ndarray,
    p_n: np.ndarray,
    h: float,
    x: np.ndarray,
    v: np.ndarray,
    counters: WorkCounters | None = None,
) -> np.ndarray:
    """Apply the residual Jacobian at ``x`` to ``v`` with one HVP."""
    if counters is not None:
        counters.n_hvp += 1
    q_mid = _midpoint_position(mass, q_n, p_n, h, x)
    return v + 0.25 * h * h * model.hessian_vec(q_mid, mass.inv_apply(v))


def forcing_term(
    prev_residual_norm: float | None,
    prev_linear_model_norm: float | None,
    curr_residual_norm: float,
    cfg: NewtonKrylovConfig,
) -> float:
    """Eisenstat-Walker choice 2.1, clamped to ``[eta_min, eta_max]``.

    Pass ``None`` for the history on the first Newton iteration.
    """
    if not isinstance(cfg.forcing, str):
        return float(cfg.forcing)
    if prev_residual_norm is None or prev_linear_model_norm is None:
        return cfg.eta0
    if prev_residual_norm == 0.0:
        return cfg.eta_max if curr_residual_norm > 0 else cfg.eta_min
    eta = abs(curr_residual_norm - prev_linear_model_norm) / prev_residual_norm
    return min(cfg.eta_max, max(cfg.eta_min, eta))


def line_search(
    g_eval: Callable[[np.ndarray], np.ndarray],
    x: np.ndarray,
    delta: np.ndarray,
    cfg: NewtonKrylovConfig,
    *,
    eta: float = 0.0,
    g_x: np.ndarray | None = None,
) -> LineSearchResult:
    """Halve the steplength until ``f(x + a d) <= f(x) (1 - 2 c a (1 - eta))``.

    ``f = 0.5 ||g||^2``. Raises :class:`LineSearchError` after
    ``cfg.max_backtracks`` halvings.
    """
    if g_x is None:
        g_x = g_eval(x)
    f0 = 0.5 * float(g_x @ g_x)
    alpha = 1.0
    for backtracks in range(cfg.max_backtracks + 1):
        x_new = x + alpha * delta
        g_new = g_eval(x_new)
        f_new = 0.5 * float(g_new @ g_new)
        if f_new <= f0 * (1.0 - 2.0 * cfg.armijo_c * alpha * (1.0 - eta)):
            return LineSearchResult(alpha, x_new, g_new, backtracks)
        alpha *= 0.5
    raise LineSearchError(f"no sufficient decrease after {cfg.max_backtracks} backtracks")


def initial_guess(history: Sequence[np.ndarray]) -> np.ndarray:
    """Starting momentum for the solve from the trajectory's recent momenta.

    ``history`` lists accepted momenta oldest first. The momentum two steps
    back is preferred; it is exact when fast modes alternate in sign.
    """
    if len(history) == 0:
        raise ValueError("history must hold at least the current momentum")
    if len(history) == 1:
        return np.array(history[-1], dtype=float)
    return np.array(history[-2], dtype=float)


def newton_krylov_solve(
    model: TargetModel,
    mass: MassMatrix,
    q_n: np.ndarray,
    p_n: np.ndarray,
    h: float,
    cfg: NewtonKrylovConfig,
    x0: np.ndarray | None = None,
    counters: WorkCounters | None = None,
) -> tuple[np.ndarray, NewtonKrylovReport]:
    """Solve ``g(x) = 0`` for the next midpoint momentum.

    Work is charged to ``counters``: one gradient per residual evaluation
    (line-search trials included) and one HVP per Krylov iteration.
    """
    if counters is None:
        counters = WorkCounters()
    with np.errstate(over="ignore", invalid="ignore"):
        return _solve(model, mass, q_n, p_n, h, cfg, x0, counters)


def _solve(model, mass, q_n, p_n, h, cfg, x0, counters):
    report = NewtonKrylovReport()
    x = np.array(p_n if x0 is None else x0, dtype=float)
    dim = x.shape[0]

    def g_eval(y):
        return residual_g(model, mass, q_n, p_n, h, y, counters)

    g = g_eval(x)
    g_norm = float(np.linalg.norm(g))
    report.residual_history.append(g_norm)
    prev_norm = prev_model_norm = None

    while True:
        if not np.isfinite(g_norm):
            break
        if g_norm <= cfg.residual_tol:
            report.converged = True
            break
        if report.newton_iters >= cfg.max_newton_iters:
            break

        eta = forcing_term(prev_norm, prev_model_norm, g_norm, cfg)
        x_frozen = x.copy()
        jac = LinearOperator(
            dim, lambda v: jacobian_vec(model, mass, q_n, p_n, h, x_frozen, v, counters)
        )
        lin = gmres(jac, -g, None, tol=eta, max_iter=cfg.max_krylov_iters)
        report.krylov_iters.append(lin.iterations)
        report.krylov_iters_total += lin.iterations
        report.newton_iters += 1
        if not np.all(np.isfinite(lin.solution)) or lin.residual_norm >= 1.0:
            break

        try:
            step = line_search(g_eval, x, lin.solution, cfg, eta=lin.residual_norm, g_x=g)
        except LineSearchError:
            report.backtracks_total += cfg.max_backtracks
            break
        report.backtracks_total += step.backtracks
        prev_norm = g_norm
        prev_model_norm = lin.residual_norm * g_norm
        x, g = step.x, step.residual
        g_norm = float(np.linalg.norm(g))
        report.residual_history.append(g_norm)

    report.final_residual = g_norm
    return x, report
