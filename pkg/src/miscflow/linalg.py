"""Sparse storage and Jacobi-preconditioned Krylov solvers.

Matrices are plain ``scipy.sparse.csr_matrix`` objects.  The solvers are
written out here so that the singular Neumann case can keep its iterates in
the mean-zero subspace and so that every run is bit-reproducible.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import SolverError

SparseMatrix = sp.csr_matrix


def assemble_csr(rows, cols, vals, n: int) -> SparseMatrix:
    """COO triplets to CSR; duplicate entries are summed, not repeated."""
    A = sp.coo_matrix((np.asarray(vals, dtype=float), (np.asarray(rows), np.asarray(cols))),
                      shape=(n, n)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def spmv(A: SparseMatrix, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or A.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: matrix {A.shape} vs vector {x.shape}")
    return A @ x


def relative_residual(A: SparseMatrix, x: np.ndarray, b: np.ndarray) -> float:
    nb = np.linalg.norm(b)
    r = np.linalg.norm(b - spmv(A, x))
    return r / nb if nb > 0 else r


def _jacobi(A: SparseMatrix) -> np.ndarray:
    d = A.diagonal().astype(float)
    if np.any(d == 0):
        return np.ones_like(d)
    return 1.0 / d


def _zero_mean(v: np.ndarray) -> np.ndarray:
    return v - v.mean()


def solve_cg(A: SparseMatrix, b: np.ndarray, tol: float = 1e-10, maxit: int | None = None,
             nullspace: bool = False, x0: np.ndarray | None = None) -> np.ndarray:
    """Preconditioned conjugate gradients for symmetric positive (semi-)definite ``A``.

    With ``nullspace=True`` the constant vector is treated as the kernel:
    ``b`` is projected onto zero sum and all iterates stay mean-zero.
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"dimension mismatch: matrix {A.shape} vs rhs {b.shape}")
    maxit = maxit if maxit is not None else 10 * n + 100
    proj = _zero_mean if nullspace else (lambda v: v)
    b = proj(b)
    nb = np.linalg.norm(b)
    x = np.zeros(n) if x0 is None else proj(np.asarray(x0, dtype=float).copy())
    if nb == 0.0:
        return np.zeros(n)
    minv = _jacobi(A)

    r = b - A @ x
    z = proj(minv * r)
    p = z.copy()
    rz = r @ z
    it = 0
    while it < maxit:
        if np.linalg.norm(r) <= tol * nb:
            r_true = b - A @ x
            if np.linalg.norm(r_true) <= tol * nb:
                return proj(x)
            r = r_true
            z = proj(minv * r)
            p = z.copy()
            rz = r @ z
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0.0:
            raise SolverError("CG breakdown: matrix not positive on the search space",
                              np.linalg.norm(r) / nb, it)
        alpha = rz / pAp
        x = x + alpha * p
        r = r - alpha * Ap
        z = proj(minv * r)
        rz_new = r @ z
        if not (np.isfinite(rz_new) and rz > 0.0):
            raise SolverError("CG breakdown: non-finite or vanishing preconditioned residual",
                              float(np.linalg.norm(r) / nb), it)
        p = z + (rz_new / rz) * p
        rz = rz_new
        it += 1
    res = np.linalg.norm(b - A @ x) / nb
    if res <= tol:
        return proj(x)
    raise SolverError(f"CG did not converge in {maxit} iterations (residual {res:.3e})", res, it)


def solve_bicgstab(A: SparseMatrix, b: np.ndarray, tol: float = 1e-10,
                   maxit: int | None = None, x0: np.ndarray | None = None) -> np.ndarray:
    """Right-preconditioned BiCGStab for general nonsingular ``A``."""
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"dimension mismatch: matrix {A.shape} vs rhs {b.shape}")
    maxit = maxit if maxit is not None else 10 * n + 100
    nb = np.linalg.norm(b)
    if nb == 0.0:
        return np.zeros(n)
    minv = _jacobi(A)
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    r = b - A @ x
    if np.linalg.norm(r) <= tol * nb:
        return x
    r_hat = r.copy()
    rho = alpha = omega = 1.0
    v = np.zeros(n)
    p = np.zeros(n)
    for it in range(maxit):
        rho_new = r_hat @ r
        if rho_new == 0.0:
            break
        beta = (rho_new / rho) * (alpha / omega)
        p = r + beta * (p - omega * v)
        y = minv * p
        v = A @ y
        denom = r_hat @ v
        if denom == 0.0:
            break
        alpha = rho_new / denom
        s = r - alpha * v
        if np.linalg.norm(s) <= tol * nb:
            x = x + alpha * y
            if np.linalg.norm(b - A @ x) <= tol * nb:
                return x
            r = b - A @ x
            r_hat = r.copy()
            rho = alpha = omega = 1.0
            v[:] = 0.0
            p[:] = 0.0
            continue
        z = minv * s
        t = A @ z
        tt = t @ t
        if tt == 0.0:
            break
        omega = (t @ s) / tt
        x = x + alpha * y + omega * z
        r = s - omega * t
        rho = rho_new
        if np.linalg.norm(r) <= tol * nb:
            r_true = b - A @ x
            if np.linalg.norm(r_true) <= tol * nb:
                return x
            r = r_true
            r_hat = r.copy()
            rho = alpha = omega = 1.0
            v[:] = 0.0
            p[:] = 0.0
        if omega == 0.0:
            break
    res = np.linalg.norm(b - A @ x) / nb
    if res <= tol:
        return x
    raise SolverError(f"BiCGStab failed (residual {res:.3e} after {it + 1} iterations)", res, it + 1)
