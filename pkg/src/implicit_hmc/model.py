"""Target distributions exposed as potential energies with analytic derivatives.

Every built-in model supplies ``U(q) = -log p(q)`` (up to a constant), its
gradient and a Hessian-vector product. The finite-difference helpers at the
bottom of the module are the independent oracle used to validate them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

ScalarFn = Callable[[np.ndarray], float]
VectorFn = Callable[[np.ndarray], np.ndarray]
HvpFn = Callable[[np.ndarray, np.ndarray], np.ndarray]

MODEL_KINDS = ("gaussian", "banana", "funnel")


class ModelError(ValueError):
    """Raised for invalid model parameters or malformed evaluation inputs."""


class TargetModel:
    """A target density given through its potential energy and derivatives.

    Args:
        name: Identifier used in outputs.
        dim: Dimension ``D`` of the position space.
        potential: ``q -> U(q)``.
        gradient: ``q -> grad U(q)``.
        hessian_vec: ``(q, v) -> Hess U(q) @ v``, never forming the Hessian.
    """

    def __init__(
        self,
        name: str,
        dim: int,
        potential: ScalarFn,
        gradient: VectorFn,
        hessian_vec: HvpFn,
    ):
        if dim < 1:
            raise ModelError(f"dimension must be positive, got {dim}")
        self.name = name
        self.dim = int(dim)
        self._potential = potential
        self._gradient = gradient
        self._hessian_vec = hessian_vec

    def __repr__(self) -> str:
        return f"TargetModel(name={self.name!r}, dim={self.dim})"

    def _check(self, x: np.ndarray, what: str) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ModelError(
                f"{self.name}: {what} has shape {x.shape}, expected ({self.dim},)"
            )
        return x

    def potential(self, q: np.ndarray) -> float:
        return float(self._potential(self._check(q, "q")))

    def gradient(self, q: np.ndarray) -> np.ndarray:
        return self._gradient(self._check(q, "q"))

    def hessian_vec(self, q: np.ndarray, v: np.ndarray) -> np.ndarray:
        return self._hessian_vec(self._check(q, "q"), self._check(v, "v"))

    def hessian(self, q: np.ndarray) -> np.ndarray:
        """Dense Hessian assembled column by column from HVPs (small D only)."""
        q = self._check(q, "q")
        eye = np.eye(self.dim)
        cols = [self._hessian_vec(q, eye[i]) for i in range(self.dim)]
        H = np.column_stack(cols)
        return 0.5 * (H + H.T)


@dataclass(frozen=True)
class ModelSpec:
    """Declarative description of a built-in model.

    ``parameters`` by kind: gaussian ``{"covariance": [[...]]}``, banana
    ``{"a": float, "b": float}``, funnel ``{"n": int, "scale": "variance" | "sd"}``
    where ``n`` counts the small-scale coordinates (dimension ``n + 1``).
    """

    kind: str
    parameters: dict[str, Any] = field(default_factory=dict)


def gaussian_model(covariance: np.ndarray, name: str = "gaussian") -> TargetModel:
    """Zero-mean Gaussian with ``U(q) = 0.5 q^T Sigma^{-1} q``."""
    cov = np.atleast_2d(np.asarray(covariance, dtype=float))
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ModelError(f"covariance must be square, got shape {cov.shape}")
    if not np.allclose(cov, cov.T, rtol=1e-12, atol=1e-14):
        raise ModelError("covariance must be symmetric")
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise ModelError("covariance is not positive definite") from exc
    chol_inv = np.linalg.inv(chol)
    precision = chol_inv.T @ chol_inv
    precision = 0.5 * (precision + precision.T)

    def potential(q):
        return 0.5 * q @ precision @ q

    def gradient(q):
        return precision @ q

    def hessian_vec(q, v):
        return precision @ v

    model = TargetModel(name, cov.shape[0], potential, gradient, hessian_vec)
    model.precision = precision
    model.covariance = cov
    return model


def correlated_gaussian(rho: float) -> TargetModel:
    """Two-dimensional unit-variance Gaussian with correlation ``rho``."""
    if not -1.0 < rho < 1.0:
        raise ModelError(f"correlation must lie in (-1, 1), got {rho}")
    return gaussian_model(np.array([[1.0, rho], [rho, 1.0]]), name=f"gaussian_rho{rho:g}")


def banana_model(a: float = 1.0, b: float = 100.0) -> TargetModel:
    """Banana density with a parabolic ridge ``q2 = a^3 b (q1^2 + 1)``.

    ``U = 0.5 * (a^2 q1^2 + r^2 / a^2)`` with ``r = q2 - a^3 b (q1^2 + 1)``.
    """
    if a == 0:
        raise ModelError("banana parameter a must be nonzero")
    a2 = a * a
    k = a2 * a * b

    def potential(q):
        r = q[1] - k * (q[0] ** 2 + 1.0)
        return 0.5 * (a2 * q[0] ** 2 + r * r / a2)

    def gradient(q):
        r = q[1] - k * (q[0] ** 2 + 1.0)
        return np.array([a2 * q[0] - 2.0 * k * q[0] * r / a2, r / a2])

    def hessian_vec(q, v):
        r = q[1] - k * (q[0] ** 2 + 1.0)
        h11 = a2 - 2.0 * k * r / a2 + 4.0 * k * k * q[0] ** 2 / a2
        h12 = -2.0 * k * q[0] / a2
        h22 = 1.0 / a2
        return np.array([h11 * v[0] + h12 * v[1], h12 * v[0] + h22 * v[1]])

    return TargetModel("banana", 2, potential, gradient, hessian_vec)


FUNNEL_SCALES = ("variance", "sd")


def funnel_model(n: int = 10, scale: str = "variance") -> TargetModel:
    """The funnel density over ``n + 1`` coordinates.

    ``q1 ~ N(0, sd=3)``. With ``scale="variance"`` (the classic construction) the
    other ``n`` coordinates are ``N(0, variance=exp(-q1))``; with
    ``scale="sd"`` they are ``N(0, sd=exp(-q1))``, a much sharper funnel.
    Either way the narrow neck sits at large positive ``q1`` and the Hessian
    at the origin is ``diag(1/9, 1, ..., 1)``.
    """
    n = int(n)
    if n < 1:
        raise ModelError(f"funnel needs n >= 1 small-scale coordinates, got {n}")
    if scale not in FUNNEL_SCALES:
        raise ModelError(f"funnel scale must be one of {FUNNEL_SCALES}, got {scale!r}")
    # precision of the small-scale coordinates is exp(2 c q1)
    c = 0.5 if scale == "variance" else 1.0

    def potential(q):
        x = q[1:]
        return q[0] ** 2 / 18.0 + 0.5 * np.exp(2.0 * c * q[0]) * (x @ x) - n * c * q[0]

    def gradient(q):
        x = q[1:]
        s = np.exp(2.0 * c * q[0])
        g = np.empty_like(q)
        g[0] = q[0] / 9.0 + c * s * (x @ x) - n * c
        g[1:] = s * x
        return g

    def hessian_vec(q, v):
        x = q[1:]
        s = np.exp(2.0 * c * q[0])
        out = np.empty_like(q)
        out[0] = (1.0 / 9.0 + 2.0 * c * c * s * (x @ x)) * v[0] + 2.0 * c * s * (x @ v[1:])
        out[1:] = 2.0 * c * s * x * v[0] + s * v[1:]
        return out

    name = f"funnel{n + 1}" if scale == "variance" else f"funnel{n + 1}_sd"
    return TargetModel(name, n + 1, potential, gradient, hessian_vec)


def make_model(spec: ModelSpec) -> TargetModel:
    """Build a built-in model from its spec, validating the parameters."""
    params = dict(spec.parameters)
    if spec.kind == "gaussian":
        if "covariance" not in params:
            raise ModelError("gaussian model requires a 'covariance' matrix")
        return gaussian_model(params["covariance"])
    if spec.kind == "banana":
        return banana_model(float(params.get("a", 1.0)), float(params.get("b", 100.0)))
    if spec.kind == "funnel":
        n = params.get("n", 10)
        if isinstance(n, bool) or not isinstance(n, (int, float)) or int(n) != n:
            raise ModelError(f"funnel n must be an integer, got {n!r}")
        return funnel_model(int(n), params.get("scale", "variance"))
    raise ModelError(f"unknown model kind {spec.kind!r}; expected one of {MODEL_KINDS}")


def finite_difference_gradient(model: TargetModel, q: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of the potential, one coordinate at a time."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    q = np.asarray(q, dtype=float)
    out = np.empty(model.dim)
    for i in range(model.dim):
        step = np.zeros(model.dim)
        step[i] = eps
        out[i] = (model.potential(q + step) - model.potential(q - step)) / (2.0 * eps)
    return out


def finite_difference_hvp(
    model: TargetModel, q: np.ndarray, v: np.ndarray, eps: float = 1e-5
) -> np.ndarray:
    """Directional central difference of the gradient along ``v``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    v = np.asarray(v, dtype=float)
    if not np.any(v):
        raise ValueError("direction v must be nonzero")
    q = np.asarray(q, dtype=float)
    return (model.gradient(q + eps * v) - model.gradient(q - eps * v)) / (2.0 * eps)


def default_initial_position(spec: ModelSpec, model: TargetModel) -> np.ndarray:
    """A high-density starting point: the origin, or the ridge point for banana."""
    q = np.zeros(model.dim)
    if spec.kind == "banana":
        a = float(spec.parameters.get("a", 1.0))
        q[1] = a**3 * float(spec.parameters.get("b", 100.0))
    return q
