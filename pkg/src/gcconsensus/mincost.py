"""Minimum guaranteed cost by trace minimization over two block LMIs.

Decision variables are symmetric ``P~`` and ``X~`` (both d x d).  The
constraints are

    LMI1 = [[X~, I], [I, P~]]                              > 0
    LMI2 = [[S(P~), 3 lmax P~ Q, gamma P~],
            [  *,   -3 lmax Q,   0      ],
            [  *,      0,        -I     ]]                 < 0

with ``S(P~) = P~ A^T + A P~ + lmax^2 B R B^T - 2 lmin B B^T + I``.  The
Schur complement of LMI2 is the congruence ``P~ Xi(P~^{-1}) P~`` of the
Riccati map used in synthesis, which fixes the sign of the
``lmax^2 B R B^T`` term as ``+``.  ``paper_literal_lmi=True`` flips that
sign for comparison.

The solver is a primal log-det barrier method: phase I maximizes the
smallest eigenvalue margin to find a strictly feasible ``P~``; phase II
minimizes ``trace(X~) + mu * barrier`` by damped Newton while ``mu`` is
divided by 10 from 1 down to 1e-8.
"""

import warnings
from dataclasses import dataclass, field
import numpy as np

from .errors import DimensionMismatch, Infeasible, PositiveDefiniteFailure, Singular
from .numerics import (
    as_matrix,
    cholesky,
    eigvalsh,
    inv,
    logdet_pd,
    solve_linear,
    solve_lyapunov,
    symmetrize,
)

MU_START = 1.0
MU_END = 1e-8
MU_FACTOR = 10.0
NEWTON_MAX_ITER = 80
NEWTON_TOL = 1e-10
ARMIJO = 0.25
MARGIN_FLOOR = 1e-9


@dataclass(frozen=True, eq=False)
class LmiProblem:
    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    gamma: float
    lambda_min: float
    lambda_max: float
    mode: str = "nonlinear_thm2"
    paper_literal_lmi: bool = False

    def __post_init__(self):
        for name in ("A", "B", "Q", "R"):
            object.__setattr__(self, name, as_matrix(getattr(self, name), name))
        d = self.A.shape[0]
        if self.A.shape != (d, d) or self.B.shape[0] != d or self.Q.shape != (d, d):
            raise DimensionMismatch("inconsistent A, B, Q shapes")
        if self.R.shape != (self.B.shape[1],) * 2:
            raise DimensionMismatch("R must be p x p")

    @property
    def d(self):
        return self.A.shape[0]

    @classmethod
    def from_problem(cls, m, cost, bounds, mode="nonlinear_thm2", paper_literal_lmi=False):
        lo = getattr(bounds, "lambda_min", None)
        hi = getattr(bounds, "lambda_max", None)
        if lo is None:
            lo, hi = bounds
        return cls(m.A, m.B, cost.Q, cost.R, m.gamma if mode == "nonlinear_thm2" else 0.0,
                   float(lo), float(hi), mode, paper_literal_lmi)

    def constant_block(self):
        """The ``P~``-independent part of the (1,1) block of LMI2."""
        sign = -1.0 if self.paper_literal_lmi else 1.0
        C = sign * self.lambda_max ** 2 * (self.B @ self.R @ self.B.T)
        C = C - 2.0 * self.lambda_min * (self.B @ self.B.T)
        if self.mode == "nonlinear_thm2":
            C = C + np.eye(self.d)
        return symmetrize(C)


def assemble_lmis(prob, P_tilde, X_tilde):
    """Return ``(LMI1, LMI2)`` at the given point (2d x 2d and 3d x 3d)."""
    d = prob.d
    Pt = as_matrix(P_tilde, "P_tilde")
    Xt = as_matrix(X_tilde, "X_tilde")
    if Pt.shape != (d, d) or Xt.shape != (d, d):
        raise DimensionMismatch(f"P_tilde and X_tilde must be {d}x{d}")
    I = np.eye(d)
    L1 = np.block([[Xt, I], [I, Pt]])
    lq = 3.0 * prob.lambda_max
    S = Pt @ prob.A.T + prob.A @ Pt + prob.constant_block()
    Z = np.zeros((d, d))
    L2 = np.block([
        [S, lq * Pt @ prob.Q, prob.gamma * Pt],
        [lq * prob.Q @ Pt, -lq * prob.Q, Z],
        [prob.gamma * Pt, Z, -I],
    ])
    return symmetrize(L1), symmetrize(L2)


def schur_reduction(prob, P_tilde):
    """Schur complement of LMI2 with respect to its (2,2)-(3,3) corner."""
    Pt = as_matrix(P_tilde)
    S = Pt @ prob.A.T + prob.A @ Pt + prob.constant_block()
    return symmetrize(S + 3.0 * prob.lambda_max * Pt @ prob.Q @ Pt + prob.gamma ** 2 * Pt @ Pt)


def riccati_map(prob, P):
    """``A^T P + P A + P M P + NQ`` with ``M`` taken from the LMI's own (1,1) block."""
    P = as_matrix(P)
    M = prob.constant_block()
    NQ = 3.0 * prob.lambda_max * prob.Q + prob.gamma ** 2 * np.eye(prob.d)
    return symmetrize(prob.A.T @ P + P @ prob.A + P @ M @ P + NQ)


def point_from_riccati(prob, P, eps, direction="identity"):
    """Interior candidate ``(P~, X~)`` built from a Riccati solution ``P``.

    ``P~ = (P + eps D)^{-1}`` and ``X~ = P~^{-1} + eps I``, with ``D = I``
    for ``direction="identity"`` or, for ``direction="lyapunov"``, the
    solution ``Y`` of ``(A + M P)^T Y + Y (A + M P) = -I`` scaled to unit
    norm.  The Lyapunov direction makes the Riccati map strictly negative
    to first order in ``eps``; the identity shift does so only when the
    symmetric part of ``A + M P`` is negative definite (always for d = 1).
    """
    P = symmetrize(as_matrix(P, "P"))
    d = prob.d
    if direction == "identity":
        D = np.eye(d)
    elif direction == "lyapunov":
        F = prob.A + prob.constant_block() @ P
        D = solve_lyapunov(F, np.eye(d))
        D = D / np.linalg.norm(D, 2)
    else:
        raise ValueError(f"unknown direction {direction!r}")
    Pt = symmetrize(inv(P + eps * D))
    Xt = symmetrize(inv(Pt)) + eps * np.eye(d)
    return Pt, Xt


@dataclass
class MinCostResult:
    P_tilde: np.ndarray
    X_tilde: np.ndarray
    K: np.ndarray
    beta_star: float
    margins: tuple
    mu_final: float
    N: int
    gap_bound: float = float("nan")
    stalled: bool = False
    paper_literal_lmi: bool = False
    history: list = field(default_factory=list, repr=False)

    def to_dict(self):
        return {
            "P_tilde": self.P_tilde.tolist(),
            "X_tilde": self.X_tilde.tolist(),
            "K": self.K.tolist(),
            "beta_star": self.beta_star,
            "margins": list(self.margins),
            "paper_literal_lmi": self.paper_literal_lmi,
        }


def min_guaranteed_cost(res, N):
    """``beta* = 0.5 N trace(X~)``."""
    Xt = res.X_tilde if hasattr(res, "X_tilde") else np.asarray(res, dtype=float)
    return 0.5 * N * float(np.trace(Xt))


def margins(prob, P_tilde, X_tilde):
    L1, L2 = assemble_lmis(prob, P_tilde, X_tilde)
    return float(eigvalsh(L1)[0]), float(eigvalsh(L2)[-1])


# --- symmetric-matrix parametrization -------------------------------------

def _sym_basis(d):
    basis = []
    for i in range(d):
        for j in range(i, d):
            E = np.zeros((d, d))
            E[i, j] = E[j, i] = 1.0
            basis.append(E)
    return basis


def _from_svec(v, d):
    S = np.zeros((d, d))
    iu = np.triu_indices(d)
    S[iu] = v
    return S + np.triu(S, 1).T


def _to_svec(S):
    return np.asarray(S)[np.triu_indices(S.shape[0])].copy()


class _AffineLMI:
    """``F(x) = F0 + sum_k x_k F_k`` kept as ``vec(F) = f0 + G x``."""

    def __init__(self, func, nvar):
        F0 = func(np.zeros(nvar))
        self.shape = F0.shape
        self.f0 = F0.reshape(-1)
        cols = []
        for k in range(nvar):
            e = np.zeros(nvar)
            e[k] = 1.0
            cols.append(func(e).reshape(-1) - self.f0)
        self.G = np.column_stack(cols)

    def __call__(self, x):
        return symmetrize((self.f0 + self.G @ x).reshape(self.shape))


def _barrier_terms(lmis, x):
    """Value, gradient and Hessian of ``-sum log det F_i(x)``; ``None`` if infeasible."""
    val = 0.0
    n = x.size
    g = np.zeros(n)
    H = np.zeros((n, n))
    for F in lmis:
        Fx = F(x)
        try:
            val -= logdet_pd(Fx)
        except PositiveDefiniteFailure:
            return None
        Fi = symmetrize(inv(Fx))
        g -= F.G.T @ Fi.reshape(-1)
        # Hessian: G^T (Fi kron Fi) G, applied column by column
        m = Fx.shape[0]
        Gm = F.G.T.reshape(n, m, m)
        FGF = np.einsum("ab,kbc,cd->kad", Fi, Gm, Fi)
        H += np.einsum("kad,lad->kl", FGF, Gm)
    return val, g, symmetrize(H)


def _newton_center(c, lmis, x, mu, max_iter=NEWTON_MAX_ITER):
    """Minimize ``c.x + mu * barrier(x)`` from a strictly feasible ``x``.

    Returns ``(x, stalled)``.
    """
    terms = _barrier_terms(lmis, x)
    if terms is None:
        raise ValueError("starting point is not strictly feasible")
    for _ in range(max_iter):
        phi, g, H = terms
        f = c @ x + mu * phi
        grad = c + mu * g
        hess = mu * H
        try:
            L = cholesky(hess)
            dx = -solve_linear(L.T, solve_linear(L, grad))
        except (PositiveDefiniteFailure, Singular):
            try:
                dx = -solve_linear(hess, grad)
            except Singular:
                return x, True
        decrement = -grad @ dx
        if decrement / 2.0 <= NEWTON_TOL * max(1.0, abs(f)) * 1e-3 or decrement <= 0:
            return x, bool(decrement < 0)
        t = 1.0
        while True:
            x_new = x + t * dx
            new_terms = _barrier_terms(lmis, x_new)
            if new_terms is not None:
                f_new = c @ x_new + mu * new_terms[0]
                if f_new <= f + ARMIJO * t * (grad @ dx):
                    break
            t *= 0.5
            if t < 1e-14:
                return x, True
        x, terms = x_new, new_terms
    return x, True


def _mu_schedule():
    mus = []
    mu = MU_START
    while mu >= MU_END * (1 - 1e-9):
        mus.append(mu)
        mu /= MU_FACTOR
    return mus


def _phase_one(prob, lmi2_of_P):
    """Find a strictly feasible ``P~``: maximize ``t`` with ``P~ - tI > 0``, ``-LMI2 - tI > 0``."""
    d = prob.d
    nP = d * (d + 1) // 2
    nvar = nP + 1
    m2 = 3 * d

    def F_pos(x):
        return _from_svec(x[:nP], d) - x[nP] * np.eye(d)

    def F_neg(x):
        return -lmi2_of_P(_from_svec(x[:nP], d)) - x[nP] * np.eye(m2)

    lmis = [_AffineLMI(F_pos, nvar), _AffineLMI(F_neg, nvar)]
    c = np.zeros(nvar)
    c[-1] = -1.0

    P0 = np.eye(d)
    t0 = min(eigvalsh(P0)[0], eigvalsh(-lmi2_of_P(P0))[0]) - 1.0
    x = np.concatenate([_to_svec(P0), [t0]])
    best_t = t0
    for mu in _mu_schedule():
        x, _ = _newton_center(c, lmis, x, mu)
        best_t = x[-1]
        if best_t > 0:
            return _from_svec(x[:nP], d), best_t
    raise Infeasible("no strictly feasible point for the LMIs", best_t)


def barrier_solve(prob, N):
    """Minimize ``trace(X~)`` subject to both LMIs; returns a ``MinCostResult``.

    Raises ``Infeasible`` when phase I cannot find a strictly feasible
    point.  If Newton centering stalls, the best strictly feasible iterate
    is returned with ``stalled=True`` and a ``RuntimeWarning``.
    """
    d = prob.d
    nP = d * (d + 1) // 2
    nvar = 2 * nP

    def lmi2_of_P(Pt):
        return assemble_lmis(prob, Pt, np.eye(d))[1]

    Pt, _ = _phase_one(prob, lmi2_of_P)
    Xt = symmetrize(inv(Pt)) + np.eye(d)

    def F1(x):
        return assemble_lmis(prob, _from_svec(x[:nP], d), _from_svec(x[nP:], d))[0]

    def F2(x):
        return -assemble_lmis(prob, _from_svec(x[:nP], d), _from_svec(x[nP:], d))[1]

    lmis = [_AffineLMI(F1, nvar), _AffineLMI(F2, nvar)]
    c = np.concatenate([np.zeros(nP), _to_svec(np.eye(d))])
    x = np.concatenate([_to_svec(Pt), _to_svec(Xt)])

    best = None
    stalled = False
    mu_final = MU_START
    history = []
    for mu in _mu_schedule():
        x, st = _newton_center(c, lmis, x, mu)
        stalled = stalled or bool(st)
        Pt, Xt = _from_svec(x[:nP], d), _from_svec(x[nP:], d)
        m1, m2 = margins(prob, Pt, Xt)
        obj = float(np.trace(Xt))
        history.append({"mu": mu, "trace": obj, "margins": (m1, m2), "stalled": st})
        if m1 >= MARGIN_FLOOR and m2 <= -MARGIN_FLOOR and (best is None or obj <= best[0]):
            best = (obj, Pt, Xt, (m1, m2))
            mu_final = mu
    if best is None:
        raise Infeasible("no iterate met the strict-feasibility margins", float("nan"))
    if stalled:
        warnings.warn("barrier Newton centering stalled; returning best feasible iterate",
                      RuntimeWarning, stacklevel=2)

    _, Pt, Xt, marg = best
    K = prob.B.T @ symmetrize(inv(Pt))
    res = MinCostResult(
        P_tilde=Pt, X_tilde=Xt, K=K,
        beta_star=0.5 * N * float(np.trace(Xt)),
        margins=marg, mu_final=mu_final, N=N,
        gap_bound=mu_final * 5 * d,
        stalled=stalled, paper_literal_lmi=prob.paper_literal_lmi, history=history,
    )
    return res
