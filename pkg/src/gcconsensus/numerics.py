"""Dense real matrix kernel.

Sized for agent dimension d <= ~16 and network size N <= ~64.  Everything
here is a pure function of its arguments; inputs are never modified.

Symmetric eigenproblems use cyclic Jacobi rotations, Lyapunov equations
are solved through their Kronecker-vectorized linear system, and linear
systems use LU with partial pivoting.  Only the general (nonsymmetric)
eigenvalue problem is delegated to LAPACK through ``numpy.linalg.eigvals``.
"""

import math
from typing import NamedTuple

import numpy as np

from .errors import (
    DimensionMismatch,
    NoConvergence,
    NonSymmetric,
    NotHurwitz,
    PositiveDefiniteFailure,
    Singular,
)

SYM_TOL = 1e-12
JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100
PIVOT_TOL = 1e-13
RANK_TOL = 1e-9
HURWITZ_MARGIN = -1e-10


class SymmetricEig(NamedTuple):
    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray  # orthonormal columns


def as_matrix(M, name="matrix"):
    """Return ``M`` as a finite 2-D float array (copy)."""
    a = np.array(M, dtype=float, copy=True)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def _square(a, name):
    if a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {a.shape}")


def _check_symmetric(a, name, tol=SYM_TOL):
    _square(a, name)
    scale = max(np.linalg.norm(a), 1.0)
    asym = np.linalg.norm(a - a.T)
    if asym > tol * scale:
        raise NonSymmetric(f"{name} asymmetry {asym:.3e} exceeds {tol:g} relative")


def symmetrize(M):
    a = np.asarray(M, dtype=float)
    return 0.5 * (a + a.T)


def _off_norm(a):
    return float(np.linalg.norm(a - np.diag(np.diag(a))))


def sym_eig(M, tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS):
    """Eigendecomposition of a real symmetric matrix by cyclic Jacobi.

    Sweeps over all (p, q) pairs until the off-diagonal Frobenius norm
    drops to ``tol * ||M||_F``.

    Returns
    -------
    SymmetricEig
        Eigenvalues in ascending order with matching orthonormal
        eigenvectors as columns.

    Raises
    ------
    NonSymmetric
        If ``M`` is not symmetric to 1e-12 relative.
    NoConvergence
        If ``max_sweeps`` sweeps do not reach the tolerance.
    """
    a = as_matrix(M)
    _check_symmetric(a, "M")
    a = symmetrize(a)
    n = a.shape[0]
    v = np.eye(n)
    scale = np.linalg.norm(a)
    if n == 1 or scale == 0.0:
        return SymmetricEig(np.diag(a).copy(), v)

    target = tol * scale
    for _ in range(max_sweeps):
        off = _off_norm(a)
        if off <= target:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = (1.0 if tau >= 0 else -1.0) / (abs(tau) + math.hypot(1.0, tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                colp = a[:, p].copy()
                colq = a[:, q]
                a[:, p] = c * colp - s * colq
                a[:, q] = s * colp + c * colq
                rowp = a[p, :].copy()
                rowq = a[q, :]
                a[p, :] = c * rowp - s * rowq
                a[q, :] = s * rowp + c * rowq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q]
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        off = _off_norm(a)
        if off > target:
            raise NoConvergence(f"Jacobi did not converge in {max_sweeps} sweeps (off={off:.3e})")

    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return SymmetricEig(w[order], v[:, order])


def eigvalsh(M):
    return sym_eig(M).eigenvalues


def min_eig(M):
    return float(sym_eig(M).eigenvalues[0])


def max_eig(M):
    return float(sym_eig(M).eigenvalues[-1])


def eigvals_general(M):
    """Eigenvalues of a general square matrix (LAPACK geev)."""
    a = as_matrix(M)
    _square(a, "M")
    return np.linalg.eigvals(a)


def is_hurwitz(M, margin=HURWITZ_MARGIN):
    return bool(np.all(eigvals_general(M).real < margin))


def solve_linear(M, b):
    """Solve ``M x = b`` by LU factorization with partial pivoting.

    ``b`` may be a vector or a matrix of right-hand sides.  Raises
    ``Singular`` when a pivot falls below ``1e-13 * ||M||_F``.
    """
    a = as_matrix(M, "M")
    _square(a, "M")
    rhs = np.array(b, dtype=float, copy=True)
    vector = rhs.ndim == 1
    if vector:
        rhs = rhs[:, None]
    n = a.shape[0]
    if rhs.shape[0] != n:
        raise DimensionMismatch(f"rhs has {rhs.shape[0]} rows, matrix is {n}x{n}")

    floor = PIVOT_TOL * np.linalg.norm(a)
    for k in range(n):
        p = k + int(np.argmax(np.abs(a[k:, k])))
        if abs(a[p, k]) <= floor or a[p, k] == 0.0:
            raise Singular(f"pivot {abs(a[p, k]):.3e} at column {k} below {floor:.3e}")
        if p != k:
            a[[k, p]] = a[[p, k]]
            rhs[[k, p]] = rhs[[p, k]]
        if k + 1 < n:
            f = a[k + 1:, k] / a[k, k]
            a[k + 1:, k:] -= np.outer(f, a[k, k:])
            rhs[k + 1:] -= np.outer(f, rhs[k])

    x = np.empty_like(rhs)
    for k in range(n - 1, -1, -1):
        x[k] = (rhs[k] - a[k, k + 1:] @ x[k + 1:]) / a[k, k]
    return x[:, 0] if vector else x


def inv(M):
    a = as_matrix(M)
    return solve_linear(a, np.eye(a.shape[0]))


def cholesky(M):
    """Lower-triangular ``L`` with ``L @ L.T == M``.

    Raises ``PositiveDefiniteFailure`` when ``M`` is not positive definite.
    """
    a = as_matrix(M)
    _check_symmetric(a, "M")
    a = symmetrize(a)
    n = a.shape[0]
    L = np.zeros_like(a)
    for j in range(n):
        d = a[j, j] - L[j, :j] @ L[j, :j]
        if not d > 0.0:
            raise PositiveDefiniteFailure(f"non-positive pivot {d:.3e} at index {j}")
        L[j, j] = np.sqrt(d)
        if j + 1 < n:
            L[j + 1:, j] = (a[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


def is_positive_definite(M):
    try:
        cholesky(M)
    except PositiveDefiniteFailure:
        return False
    return True


def logdet_pd(M):
    """log det of a positive definite matrix via Cholesky."""
    L = cholesky(M)
    return 2.0 * float(np.sum(np.log(np.diag(L))))


def kron(A, B):
    """Kronecker product: block (i, j) equals ``A[i, j] * B``."""
    a = as_matrix(A, "A")
    b = as_matrix(B, "B")
    m, n = a.shape
    p, q = b.shape
    out = np.empty((m * p, n * q))
    for i in range(m):
        for j in range(n):
            out[i * p:(i + 1) * p, j * q:(j + 1) * q] = a[i, j] * b
    return out


def solve_lyapunov(F, W):
    """Solve ``F.T @ X + X @ F + W = 0`` for symmetric ``X``.

    Uses the vectorized form ``(I kron F.T + F.T kron I) vec(X) = -vec(W)``
    with column-major ``vec``.  ``F`` must be Hurwitz.
    """
    f = as_matrix(F, "F")
    w = as_matrix(W, "W")
    _square(f, "F")
    _check_symmetric(w, "W", tol=1e-10)
    d = f.shape[0]
    if w.shape != (d, d):
        raise DimensionMismatch(f"W has shape {w.shape}, expected {(d, d)}")
    re = eigvals_general(f).real
    if np.any(re >= HURWITZ_MARGIN):
        raise NotHurwitz(f"F has eigenvalue with real part {re.max():.3e}")
    eye = np.eye(d)
    op = kron(eye, f.T) + kron(f.T, eye)
    x = solve_linear(op, -w.reshape(-1, order="F"))
    return symmetrize(x.reshape(d, d, order="F"))


def singular_values(M):
    """Singular values, descending, from the symmetric embedding [[0, M], [M.T, 0]].

    The embedding has eigenvalues +/- sigma_i, which avoids the loss of
    small singular values that squaring into ``M.T @ M`` would cause.
    """
    a = as_matrix(M)
    m, n = a.shape
    aug = np.zeros((m + n, m + n))
    aug[:m, m:] = a
    aug[m:, :m] = a.T
    w = sym_eig(aug).eigenvalues
    return np.clip(w[::-1][:min(m, n)], 0.0, None)


def spectral_norm(M):
    s = singular_values(M)
    return float(s[0]) if s.size else 0.0


def rank_of(M, tol=RANK_TOL):
    """Number of singular values above ``tol`` times the largest."""
    s = singular_values(M)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))
