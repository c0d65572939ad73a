"""Phase-space state, mass matrices and work counters shared by the integrators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class PhasePoint:
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        if self.q.shape != self.p.shape:
            raise ValueError(f"q and p shapes differ: {self.q.shape} vs {self.p.shape}")

    def copy(self) -> "PhasePoint":
        return PhasePoint(self.q.copy(), self.p.copy())

    def flipped(self) -> "PhasePoint":
        """Same position with the momentum negated."""
        return PhasePoint(self.q, -self.p)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.q, self.p])

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.p)))


@dataclass
class WorkCounters:
    """Gradient, Hessian-vector product and potential evaluation counts.

    Work is gradients plus HVPs; potential evaluations are tracked but free.
    """

    n_grad: int = 0
    n_hvp: int = 0
    n_potential: int = 0

    @property
    def work(self) -> int:
        return self.n_grad + self.n_hvp

    def __iadd__(self, other: "WorkCounters") -> "WorkCounters":
        self.n_grad += other.n_grad
        self.n_hvp += other.n_hvp
        self.n_potential += other.n_potential
        return self

    def __add__(self, other: "WorkCounters") -> "WorkCounters":
        out = WorkCounters(self.n_grad, self.n_hvp, self.n_potential)
        out += other
        return out


class MassMatrix:
    """Symmetric positive definite mass matrix ``M``.

    Stores ``M``, applies ``M^{-1}`` and keeps a Cholesky factor ``L`` with
    ``L L^T = M`` for drawing momenta. ``form`` is one of ``identity``,
    ``diagonal`` or ``dense``.
    """

    def __init__(self, form: str, values: np.ndarray | None = None, dim: int | None = None):
        self.form = form
        if form == "identity":
            if dim is None:
                raise ValueError("identity mass matrix needs a dimension")
            self.dim = int(dim)
            self.values = np.ones(self.dim)
        elif form == "diagonal":
            values = np.asarray(values, dtype=float)
            if values.ndim != 1 or np.any(values <= 0) or not np.all(np.isfinite(values)):
                raise ValueError("diagonal mass values must be a positive vector")
            self.dim = values.shape[0]
            self.values = values
            self._inv = 1.0 / values
            self._sqrt = np.sqrt(values)
        elif form == "dense":
            values = np.asarray(values, dtype=float)
            if values.ndim != 2 or values.shape[0] != values.shape[1]:
                raise ValueError("dense mass matrix must be square")
            if not np.allclose(values, values.T, rtol=1e-12, atol=1e-14):
                raise ValueError("dense mass matrix must be symmetric")
            try:
                self._chol = np.linalg.cholesky(values)
            except np.linalg.LinAlgError as exc:
                raise ValueError("dense mass matrix is not positive definite") from exc
            self.dim = values.shape[0]
            self.values = values
            chol_inv = np.linalg.inv(self._chol)
            self._inv_matrix = chol_inv.T @ chol_inv
        else:
            raise ValueError(f"unknown mass matrix form {form!r}")
        if dim is not None and int(dim) != self.dim:
            raise ValueError(f"mass matrix dimension {self.dim} does not match {dim}")

    @classmethod
    def identity(cls, dim: int) -> "MassMatrix":
        return cls("identity", dim=dim)

    @classmethod
    def diagonal(cls, values) -> "MassMatrix":
        return cls("diagonal", values)

    @classmethod
    def dense(cls, values) -> "MassMatrix":
        return cls("dense", values)

    def __repr__(self) -> str:
        return f"MassMatrix(form={self.form!r}, dim={self.dim})"

    def inv_apply(self, v: np.ndarray) -> np.ndarray:
        if self.form == "identity":
            return v
        if self.form == "diagonal":
            return self._inv * v
        return self._inv_matrix @ v

    def apply(self, v: np.ndarray) -> np.ndarray:
        if self.form == "identity":
            return v
        if self.form == "diagonal":
            return self.values * v
        return self.values @ v

    @property
    def matrix(self) -> np.ndarray:
        if self.form == "dense":
            return self.values.copy()
        return np.diag(self.values)

    @property
    def inverse_matrix(self) -> np.ndarray:
        if self.form == "identity":
            return np.eye(self.dim)
        if self.form == "diagonal":
            return np.diag(self._inv)
        return self._inv_matrix.copy()

    @property
    def cholesky(self) -> np.ndarray:
        """Lower-triangular ``L`` with ``L L^T = M``."""
        if self.form == "identity":
            return np.eye(self.dim)
        if self.form == "diagonal":
            return np.diag(self._sqrt)
        return self._chol.copy()

    def scale_normal(self, z: np.ndarray) -> np.ndarray:
        """Map a standard normal vector to a ``N(0, M)`` draw."""
        if self.form == "identity":
            return z
        if self.form == "diagonal":
            return self._sqrt * z
        return self._chol @ z

    def kinetic(self, p: np.ndarray) -> float:
        return 0.5 * float(p @ self.inv_apply(p))


def as_mass(mass: MassMatrix | None, dim: int) -> MassMatrix:
    return MassMatrix.identity(dim) if mass is None else mass
