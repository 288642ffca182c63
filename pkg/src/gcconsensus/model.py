"""Agent dynamics ``x' = A x + f(x) + B u`` with a Lipschitz nonlinearity."""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DimensionMismatch
from .numerics import as_matrix, eigvals_general, rank_of, spectral_norm

KINDS = ("zero", "sin_affine", "custom")
UNSTABLE_MARGIN = -1e-10


@dataclass(frozen=True)
class NonlinearitySpec:
    """Nonlinearity ``f`` and its declared Lipschitz constant ``gamma``.

    ``sin_affine`` terms are 1-based ``(row, arg, coeff)`` triples meaning
    ``f[row] += coeff * sin(x[arg])``.  ``custom`` wraps a Python callable
    and can only be built in code, not from a config file.
    """

    kind: str = "zero"
    gamma: float = 0.0
    terms: tuple = ()
    func: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown nonlinearity kind {self.kind!r}")
        gamma = float(self.gamma)
        if not np.isfinite(gamma) or gamma < 0:
            raise ValueError(f"gamma must be a finite non-negative number, got {self.gamma}")
        if self.kind == "zero" and gamma != 0.0:
            raise ValueError("zero nonlinearity must declare gamma = 0")
        if self.kind != "zero" and gamma <= 0.0:
            raise ValueError(f"{self.kind} nonlinearity needs gamma > 0")
        if self.kind == "custom" and not callable(self.func):
            raise ValueError("custom nonlinearity needs a callable func")
        terms = tuple((int(r), int(k), float(c)) for r, k, c in self.terms)
        if self.kind == "sin_affine" and not terms:
            raise ValueError("sin_affine nonlinearity needs at least one term")
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "terms", terms)

    @classmethod
    def zero(cls):
        return cls("zero", 0.0)

    @classmethod
    def sin_affine(cls, terms, gamma):
        return cls("sin_affine", gamma, tuple(terms))

    @classmethod
    def custom(cls, func, gamma):
        return cls("custom", gamma, func=func)

    def coefficient_matrix(self, d):
        C = np.zeros((d, d))
        for r, k, c in self.terms:
            C[r - 1, k - 1] += c
        return C


@dataclass(frozen=True, eq=False)
class AgentModel:
    A: np.ndarray
    B: np.ndarray
    f: NonlinearitySpec = field(default_factory=NonlinearitySpec.zero)

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        B = as_matrix(self.B, "B")
        if A.shape[0] != A.shape[1]:
            raise DimensionMismatch(f"A must be square, got {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise DimensionMismatch(f"B has {B.shape[0]} rows, A is {A.shape[0]}x{A.shape[0]}")
        d = A.shape[0]
        for r, k, _ in self.f.terms:
            if not (1 <= r <= d and 1 <= k <= d):
                raise DimensionMismatch(f"sin term ({r}, {k}) outside 1..{d}")
        A.setflags(write=False)
        B.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        if self.f.kind == "sin_affine":
            C = self.f.coefficient_matrix(d)
            C.setflags(write=False)
            object.__setattr__(self, "_C", C)

    @property
    def d(self):
        return self.A.shape[0]

    @property
    def p(self):
        return self.B.shape[1]

    @property
    def gamma(self):
        return self.f.gamma

    @classmethod
    def from_dict(cls, data):
        nl = data.get("nonlinearity", {"kind": "zero"})
        kind = nl.get("kind", "zero")
        if kind == "zero":
            spec = NonlinearitySpec.zero()
        elif kind == "sin_affine":
            spec = NonlinearitySpec.sin_affine(nl["terms"], data["gamma"])
        else:
            raise ValueError(f"nonlinearity kind {kind!r} cannot be loaded from a file")
        return cls(data["A"], data["B"], spec)

    def to_dict(self):
        nl = {"kind": self.f.kind}
        if self.f.kind == "sin_affine":
            nl["terms"] = [list(t) for t in self.f.terms]
        return {"A": self.A.tolist(), "B": self.B.tolist(), "nonlinearity": nl, "gamma": self.gamma}

    def f_batch(self, X):
        """Apply ``f`` to each row of an ``(N, d)`` array."""
        kind = self.f.kind
        if kind == "zero":
            return np.zeros_like(X)
        if kind == "sin_affine":
            return np.sin(X) @ self._C.T
        return np.array([np.asarray(self.f.func(x), dtype=float) for x in X]).reshape(X.shape)


def eval_f(m, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (m.d,):
        raise DimensionMismatch(f"state has shape {x.shape}, expected ({m.d},)")
    return m.f_batch(x[None, :])[0]


def eval_F(m, x, N):
    """Stacked nonlinearity ``[f(x_1); ...; f(x_N)]`` for ``x`` of length ``N d``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (N * m.d,):
        raise DimensionMismatch(f"stacked state has shape {x.shape}, expected ({N * m.d},)")
    return m.f_batch(x.reshape(N, m.d)).reshape(-1)


@dataclass
class LipschitzReport:
    max_ratio: float
    ok: bool
    analytic_bound: Optional[float] = None


def validate_lipschitz(m, samples=1000, radius=10.0, seed=0):
    """Spot-check the declared Lipschitz constant on random pairs in a ball.

    For ``sin_affine`` the analytic bound ``||C||_2`` is also computed and
    the declared ``gamma`` must dominate it.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    d = m.d
    Y = rng.uniform(-radius, radius, (samples, d))
    Z = rng.uniform(-radius, radius, (samples, d))
    # half the pairs are close together, where derivative bounds bite
    close = samples // 2
    Z[:close] = Y[:close] + rng.normal(scale=1e-3 * radius, size=(close, d))
    num = np.linalg.norm(m.f_batch(Y) - m.f_batch(Z), axis=1)
    den = np.linalg.norm(Y - Z, axis=1)
    keep = den > 0
    max_ratio = float(np.max(num[keep] / den[keep])) if np.any(keep) else 0.0

    gamma = m.gamma
    ok = max_ratio <= gamma * (1 + 1e-9)
    bound = None
    if m.f.kind == "sin_affine":
        bound = spectral_norm(m.f.coefficient_matrix(d))
        ok = ok and gamma >= bound * (1 - 1e-12)
    return LipschitzReport(max_ratio, bool(ok), bound)


@dataclass
class StabilizabilityReport:
    stabilizable: bool
    witness: Optional[complex] = None

    def __bool__(self):
        return self.stabilizable


def _pbh_rank(A, B, lam):
    d = A.shape[0]
    if abs(lam.imag) == 0.0:
        return rank_of(np.hstack([A - lam.real * np.eye(d), B]))
    # real form of the complex matrix [A - lam I, B]
    Mr = np.hstack([A - lam.real * np.eye(d), B])
    Mi = np.hstack([-lam.imag * np.eye(d), np.zeros_like(B)])
    return rank_of(np.block([[Mr, -Mi], [Mi, Mr]])) // 2


def check_stabilizable(m):
    """PBH test on every eigenvalue of ``A`` with real part >= -1e-10."""
    A, B = m.A, m.B
    for lam in eigvals_general(A):
        if lam.real >= UNSTABLE_MARGIN and _pbh_rank(A, B, complex(lam)) < m.d:
            return StabilizabilityReport(False, complex(lam))
    return StabilizabilityReport(True)
