"""Guaranteed-cost gain synthesis through a modified algebraic Riccati equation.

The equation solved is

    A^T P + P A + P M P + NQ = 0,

with, for the Lipschitz-nonlinear criterion,

    M  = lambda_max^2 B R B^T - 2 lambda_min B B^T + I,
    NQ = 3 lambda_max Q + gamma^2 I,

and, for the linear criterion, the same without the ``+ I`` and
``gamma^2 I`` terms.  ``M`` is generally indefinite, so the solver starts
from the standard LQR-type equation that keeps only the negative
semidefinite part of ``M`` and walks to the full ``M`` by homotopy, with a
Newton-Kleinman iteration at every stage.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    BadCostMatrix,
    DimensionMismatch,
    NoStabilizingSolution,
    NonlinearModel,
    NotHurwitz,
    NotStabilizable,
    NotPositiveDefinite,
    Singular,
)
from .numerics import (
    as_matrix,
    eigvals_general,
    is_hurwitz,
    is_positive_definite,
    max_eig,
    solve_linear,
    solve_lyapunov,
    sym_eig,
    symmetrize,
)
from .model import check_stabilizable

MODES = ("nonlinear_thm2", "linear_thm3")
NK_TOL = 1e-12
NK_MAX_ITER = 200
HOMOTOPY_STEPS = 4
MAX_HALVINGS = 8
RESIDUAL_TOL = 1e-8
STABILIZING_MARGIN = -1e-10


@dataclass(frozen=True, eq=False)
class CostWeights:
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        Q = as_matrix(self.Q, "Q")
        R = as_matrix(self.R, "R")
        for name, X in (("Q", Q), ("R", R)):
            if X.shape[0] != X.shape[1]:
                raise BadCostMatrix(f"{name} must be square, got {X.shape}")
            if np.linalg.norm(X - X.T) > 1e-12 * max(1.0, np.linalg.norm(X)):
                raise BadCostMatrix(f"{name} is not symmetric")
            if not is_positive_definite(X):
                raise BadCostMatrix(f"{name} is not positive definite")
        object.__setattr__(self, "Q", symmetrize(Q))
        object.__setattr__(self, "R", symmetrize(R))

    def to_dict(self):
        return {"Q": self.Q.tolist(), "R": self.R.tolist()}


@dataclass(frozen=True, eq=False)
class RiccatiProblem:
    A: np.ndarray
    M: np.ndarray
    NQ: np.ndarray
    B: Optional[np.ndarray] = None
    mode: str = "nonlinear_thm2"
    provenance: dict = field(default_factory=dict)

    def residual_matrix(self, P):
        return self.A.T @ P + P @ self.A + P @ self.M @ P + self.NQ


def riccati_matrices(A, B, Q, R, gamma, lam_min, lam_max, mode="nonlinear_thm2"):
    d = A.shape[0]
    BBt = B @ B.T
    M = lam_max ** 2 * (B @ R @ B.T) - 2.0 * lam_min * BBt
    NQ = 3.0 * lam_max * Q
    if mode == "nonlinear_thm2":
        M = M + np.eye(d)
        NQ = NQ + gamma ** 2 * np.eye(d)
    return symmetrize(M), symmetrize(NQ)


def build_riccati(m, cost, bounds, mode="nonlinear_thm2"):
    """Assemble the Riccati data for a model, cost weights and spectral bounds.

    ``bounds`` is anything with ``lambda_min``/``lambda_max`` attributes
    (a ``TopologySet``) or a ``(lambda_min, lambda_max)`` pair.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if not isinstance(cost, CostWeights):
        cost = CostWeights(*cost)
    lam_min, lam_max = _bounds(bounds)
    if cost.Q.shape != (m.d, m.d):
        raise DimensionMismatch(f"Q has shape {cost.Q.shape}, expected {(m.d, m.d)}")
    if cost.R.shape != (m.p, m.p):
        raise DimensionMismatch(f"R has shape {cost.R.shape}, expected {(m.p, m.p)}")
    M, NQ = riccati_matrices(m.A, m.B, cost.Q, cost.R, m.gamma, lam_min, lam_max, mode)
    prov = {"lambda_min": lam_min, "lambda_max": lam_max, "gamma": m.gamma,
            "Q": cost.Q, "R": cost.R}
    return RiccatiProblem(np.array(m.A), M, NQ, np.array(m.B), mode, prov)


def _bounds(bounds):
    if hasattr(bounds, "lambda_min"):
        lo, hi = float(bounds.lambda_min), float(bounds.lambda_max)
    else:
        lo, hi = (float(v) for v in bounds)
    if not (0 < lo <= hi):
        raise ValueError(f"need 0 < lambda_min <= lambda_max, got ({lo}, {hi})")
    return lo, hi


@dataclass(frozen=True, eq=False)
class SynthesisResult:
    P: np.ndarray
    K: Optional[np.ndarray]
    residual: float
    mode: str
    iterations: int = 0
    stages: tuple = ()

    def beta(self, x0, N):
        return guaranteed_cost(self, x0, N)

    def to_dict(self, beta=None):
        return {
            "P": self.P.tolist(),
            "K": None if self.K is None else self.K.tolist(),
            "beta": beta,
            "residual": self.residual,
            "mode": self.mode,
        }


def _newton_kleinman(A, M, NQ, P, tol=NK_TOL, max_iter=NK_MAX_ITER):
    """Newton iteration ``(A + M P_k)^T P_{k+1} + P_{k+1} (A + M P_k) = -(NQ - P_k M P_k)``.

    Returns ``(P, iterations)`` or raises ``NoStabilizingSolution``.
    """
    last_step = np.inf
    for it in range(1, max_iter + 1):
        F = A + M @ P
        try:
            P_next = solve_lyapunov(F, NQ - P @ M @ P)
        except (NotHurwitz, Singular) as exc:
            res = np.linalg.norm(A.T @ P + P @ A + P @ M @ P + NQ)
            raise NoStabilizingSolution(f"Newton iterate lost stability: {exc}", res) from None
        step = np.linalg.norm(P_next - P)
        P = P_next
        if not np.all(np.isfinite(P)) or np.linalg.norm(P) > 1e12:
            raise NoStabilizingSolution("Newton iteration diverged", float("inf"))
        if step <= tol * (1.0 + np.linalg.norm(P)):
            return P, it
        # quadratic convergence has bottomed out at roundoff
        if it > 20 and step >= last_step and step <= 1e-9 * (1.0 + np.linalg.norm(P)):
            return P, it
        last_step = step
    res = np.linalg.norm(A.T @ P + P @ A + P @ M @ P + NQ)
    if res <= RESIDUAL_TOL * (1.0 + np.linalg.norm(P)):
        return P, max_iter
    raise NoStabilizingSolution(f"no convergence in {max_iter} Newton iterations", res)


def _initial_stabilizing(A, G):
    """``P0`` with ``A - G P0`` Hurwitz, for ``G`` positive semidefinite.

    Zero when ``A`` is already Hurwitz; otherwise Bass's construction
    ``P0 = Z^{-1}`` with ``(A + mu I) Z + Z (A + mu I)^T = 2 G``.
    """
    d = A.shape[0]
    if is_hurwitz(A):
        return np.zeros((d, d))
    mu = 1.0 + float(np.max(np.abs(eigvals_general(A).real)))
    try:
        # kernel form F^T Z + Z F + W = 0 with F = -(A + mu I)^T, W = 2 G
        Z = solve_lyapunov(-(A + mu * np.eye(d)).T, 2.0 * G)
    except (NotHurwitz, Singular) as exc:
        raise NoStabilizingSolution(f"no stabilizing initial gain: {exc}") from None
    if not is_positive_definite(Z):
        raise NoStabilizingSolution("negative-definite part of M cannot stabilize A")
    try:
        P0 = symmetrize(solve_linear(Z, np.eye(d)))
    except Singular:
        raise NoStabilizingSolution("negative-definite part of M cannot stabilize A") from None
    if not is_hurwitz(A - G @ P0):
        raise NoStabilizingSolution("initial gain does not stabilize A")
    return P0


def _split_negative(M):
    w, V = sym_eig(M)
    return symmetrize((V * np.minimum(w, 0.0)) @ V.T)


def solve_care(prob, tol=NK_TOL, max_iter=NK_MAX_ITER, homotopy_steps=HOMOTOPY_STEPS):
    """Stabilizing solution of ``A^T P + P A + P M P + NQ = 0``.

    Stage 0 keeps only the negative semidefinite part of ``M`` (a standard
    LQR-type equation) and is started from Bass's stabilizing gain.  The
    positive part is then blended in over ``homotopy_steps`` equal steps;
    a failing step is retried at half the step length, up to 8 times.

    When ``M`` is indefinite the equation may have more than one solution
    with ``A + M P`` Hurwitz; the one returned is the solution reached by
    this continuation path.

    Raises
    ------
    NoStabilizingSolution
        If a stage cannot be solved, or the final closed loop ``A + M P``
        is not Hurwitz, or the residual bound is not met.
    NotPositiveDefinite
        If the stabilizing solution is found but fails Cholesky.
    """
    A = as_matrix(prob.A, "A")
    M = symmetrize(as_matrix(prob.M, "M"))
    NQ = symmetrize(as_matrix(prob.NQ, "NQ"))
    M_neg = _split_negative(M)
    M_pos = M - M_neg

    P = _initial_stabilizing(A, -M_neg)
    P, total = _newton_kleinman(A, M_neg, NQ, P, tol, max_iter)
    stages = [0.0]

    s = 0.0
    step = 1.0 / homotopy_steps
    halvings = 0
    positive_part = np.linalg.norm(M_pos) > 0
    while positive_part and s < 1.0:
        s_next = min(1.0, s + step)
        M_s = M if s_next == 1.0 else M_neg + s_next * M_pos
        try:
            P_try, its = _newton_kleinman(A, M_s, NQ, P, tol, max_iter)
        except NoStabilizingSolution as exc:
            if halvings >= MAX_HALVINGS:
                raise NoStabilizingSolution("homotopy stalled", exc.residual, s) from None
            step /= 2.0
            halvings += 1
            continue
        P, s = P_try, s_next
        total += its
        stages.append(s)

    residual = float(np.linalg.norm(prob.residual_matrix(P)))
    if residual > RESIDUAL_TOL * (1.0 + np.linalg.norm(P)):
        raise NoStabilizingSolution("residual bound not met", residual, s)
    if not np.all(eigvals_general(A + M @ P).real <= STABILIZING_MARGIN):
        raise NoStabilizingSolution("solution is not stabilizing", residual, s)
    if not is_positive_definite(P):
        raise NotPositiveDefinite(P)
    K = None if prob.B is None else prob.B.T @ P
    return SynthesisResult(P, K, residual, prob.mode, total, tuple(stages))


def riccati_residual(prob, P):
    return float(np.linalg.norm(prob.residual_matrix(np.asarray(P, dtype=float))))


def synthesize(m, cost, topo, mode="nonlinear_thm2"):
    """Stabilizability check, Riccati assembly and solve in one call."""
    report = check_stabilizable(m)
    if not report:
        raise NotStabilizable(report.witness)
    return solve_care(build_riccati(m, cost, topo, mode))


def guaranteed_cost(res, x0, N):
    """``beta = (1/N) x0^T ((N I - 1 1^T) kron P) x0``."""
    P = res.P if hasattr(res, "P") else np.asarray(res, dtype=float)
    d = P.shape[0]
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != N * d:
        raise DimensionMismatch(f"x0 has {x0.size} entries, expected N*d = {N * d}")
    X = x0.reshape(N, d)
    # The form vanishes on 1 kron v, so anchor on agent 1 before removing the
    # mean; identical blocks then give exactly zero.
    Z = X - X[0]
    Y = Z - Z.mean(axis=0)
    beta = float(np.sum((Y @ P) * Y))
    return max(beta, 0.0)


@dataclass
class LinearCriterionReport:
    condition_ok: bool
    lambda_R_max: float
    threshold: float
    stabilizable: bool
    M_negative_semidefinite: Optional[bool] = None


def theorem3_check(m, cost, bounds):
    """Sufficient condition for the linear case.

    ``lambda_max(R) < 2 lambda_min / lambda_max^2`` together with
    stabilizability of ``(A, B)``; when it holds, the quadratic-term matrix
    ``lambda_max^2 B R B^T - 2 lambda_min B B^T`` is also checked to be
    negative semidefinite.
    """
    if m.f.kind != "zero":
        raise NonlinearModel("the linear criterion applies only when f is identically zero")
    if not isinstance(cost, CostWeights):
        cost = CostWeights(*cost)
    lam_min, lam_max = _bounds(bounds)
    lam_R = max_eig(cost.R)
    threshold = 2.0 * lam_min / lam_max ** 2
    stab = bool(check_stabilizable(m))
    ok = lam_R < threshold and stab
    nsd = None
    if ok:
        M, _ = riccati_matrices(m.A, m.B, cost.Q, cost.R, 0.0, lam_min, lam_max, "linear_thm3")
        nsd = bool(max_eig(M) <= 1e-12 * max(1.0, np.linalg.norm(M)))
    return LinearCriterionReport(bool(ok), lam_R, threshold, stab, nsd)
