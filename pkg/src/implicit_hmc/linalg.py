"""Small matrix-free linear algebra: GMRES, power iteration, Jacobi eigenvalues."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class LinearOperator:
    """A square linear map known only through its action ``v -> A v``."""

    dim: int
    apply: Callable[[np.ndarray], np.ndarray]

    def __call__(self, v: np.ndarray) -> np.ndarray:
        return self.apply(v)

    @classmethod
    def from_matrix(cls, A: np.ndarray) -> "LinearOperator":
        A = np.asarray(A, dtype=float)
        return cls(A.shape[0], lambda v: A @ v)


@dataclass
class GmresResult:
    solution: np.ndarray
    iterations: int
    residual_norm: float
    converged: bool
    breakdown: bool = False


@dataclass
class PowerResult:
    eigenvalue: float
    vector: np.ndarray
    converged: bool
    iterations: int


def _givens(a: float, b: float) -> tuple[float, float]:
    if b == 0.0:
        return 1.0, 0.0
    r = np.hypot(a, b)
    return a / r, b / r


def gmres(
    A: LinearOperator,
    b: np.ndarray,
    x0: np.ndarray | None = None,
    tol: float = 1e-10,
    max_iter: int | None = None,
) -> GmresResult:
    """Unrestarted GMRES with modified Gram-Schmidt Arnoldi.

    ``tol`` bounds the relative residual ``||A x - b|| / ||b||`` (absolute when
    ``b`` is zero). ``iterations`` counts applications of ``A``: one per Krylov
    step plus one for the initial residual when ``x0`` is nonzero.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if A.dim != n:
        raise ValueError(f"operator dimension {A.dim} does not match rhs length {n}")
    if max_iter is None:
        max_iter = n
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()

    applications = 0
    if np.any(x0):
        r0 = b - A(x0)
        applications += 1
    else:
        r0 = b.copy()

    b_norm = np.linalg.norm(b)
    scale = b_norm if b_norm > 0 else 1.0
    beta = np.linalg.norm(r0)
    if beta / scale <= tol:
        return GmresResult(x0, applications, beta / scale, True)
    if not np.isfinite(beta):
        return GmresResult(x0, applications, np.inf, False)

    m = max_iter
    V = np.zeros((m + 1, n))
    H = np.zeros((m + 1, m))
    cs = np.zeros(m)
    sn = np.zeros(m)
    s = np.zeros(m + 1)
    s[0] = beta
    V[0] = r0 / beta

    k = 0
    residual = beta
    breakdown = False
    for k in range(m):
        w = A(V[k])
        applications += 1
        for i in range(k + 1):
            H[i, k] = w @ V[i]
            w = w - H[i, k] * V[i]
        H[k + 1, k] = np.linalg.norm(w)

        for i in range(k):
            t = cs[i] * H[i, k] + sn[i] * H[i + 1, k]
            H[i + 1, k] = -sn[i] * H[i, k] + cs[i] * H[i + 1, k]
            H[i, k] = t
        h_next = H[k + 1, k]
        cs[k], sn[k] = _givens(H[k, k], h_next)
        H[k, k] = cs[k] * H[k, k] + sn[k] * h_next
        H[k + 1, k] = 0.0
        s[k + 1] = -sn[k] * s[k]
        s[k] = cs[k] * s[k]
        residual = abs(s[k + 1])

        if residual / scale <= tol:
            break
        if h_next <= 1e-14 * beta:
            breakdown = True
            break
        V[k + 1] = w / h_next

    j = k + 1
    y = np.zeros(j)
    for i in range(j - 1, -1, -1):
        y[i] = (s[i] - H[i, i + 1 : j] @ y[i + 1 : j]) / H[i, i]
    x = x0 + V[:j].T @ y
    rel = residual / scale
    converged = bool(rel <= tol)
    return GmresResult(x, applications, float(rel), converged, breakdown and not converged)


def _seeded_unit_vector(dim: int, seed: int) -> np.ndarray:
    v = np.random.default_rng(seed).standard_normal(dim)
    return v / np.linalg.norm(v)


def power_method(
    A: LinearOperator, tol: float = 1e-8, max_iter: int = 1000, seed: int = 0
) -> PowerResult:
    """Dominant (largest magnitude) eigenvalue by power iteration.

    Stops when successive Rayleigh quotients agree to ``tol * |lambda|`` and the
    eigen-residual ``||A v - lambda v||`` is also below ``tol * |lambda|``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    v = _seeded_unit_vector(A.dim, seed)
    w = A(v)
    lam = float(v @ w)
    for it in range(1, max_iter + 1):
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return PowerResult(0.0, v, True, it)
        v = w / norm
        w = A(v)
        lam_new = float(v @ w)
        residual = np.linalg.norm(w - lam_new * v)
        if abs(lam_new - lam) <= tol * abs(lam_new) and residual <= tol * abs(lam_new):
            return PowerResult(lam_new, v, True, it)
        lam = lam_new
    return PowerResult(lam, v, False, max_iter)


def sym_eigenvalues(
    A: np.ndarray, *, return_vectors: bool = False, tol: float = 1e-14, max_sweeps: int = 100
):
    """Eigenvalues (ascending) of a small symmetric matrix by cyclic Jacobi.

    With ``return_vectors=True`` returns ``(w, V)`` where ``A = V diag(w) V^T``.
    """
    A = np.array(A, dtype=float, copy=True)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    n = A.shape[0]
    if n > 64:
        raise ValueError("sym_eigenvalues is meant for dimension <= 64")
    scale = np.max(np.abs(A)) if A.size else 0.0
    if not np.allclose(A, A.T, rtol=0.0, atol=1e-10 * max(scale, 1e-300)):
        raise ValueError("matrix is not symmetric")
    A = 0.5 * (A + A.T)
    V = np.eye(n)

    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(A, -1) ** 2))
        if off <= tol * max(scale, 1e-300):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot_p = c * A[:, p] - s * A[:, q]
                rot_q = s * A[:, p] + c * A[:, q]
                A[:, p], A[:, q] = rot_p, rot_q
                rot_p = c * A[p, :] - s * A[q, :]
                rot_q = s * A[p, :] + c * A[q, :]
                A[p, :], A[q, :] = rot_p, rot_q
                A[p, q] = A[q, p] = 0.0
                vp = c * V[:, p] - s * V[:, q]
                vq = s * V[:, p] + c * V[:, q]
                V[:, p], V[:, q] = vp, vq

    w = np.diag(A).copy()
    order = np.argsort(w)
    if return_vectors:
        return w[order], V[:, order]
    return w[order]
