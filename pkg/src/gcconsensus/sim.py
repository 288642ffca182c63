"""Closed-loop simulation of the networked agents under a switching topology.

The stacked dynamics are

    x' = (I_N kron A - L_sigma kron B K) x + F(x),

integrated here in matrix form ``X' = X A^T - L X (B K)^T + f(X)`` where
row ``i`` of ``X`` is agent ``i``.  The reference trajectory
``c' = A c + f(c)`` starts from the average initial state and is advanced
by the same RK4 scheme, without ever looking at the switching signal.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, DwellViolation, NonFiniteState
from .graph import laplacian, orthonormal_complement

BLOWUP = 1e12
CONSENSUS_REL = 1e-4
V_TOL = 1e-9
COST_CHECK_TOL = 1e-8
DEFAULT_DWELL = 0.5


@dataclass(frozen=True)
class SwitchingSignal:
    """Piecewise-constant, right-continuous topology index.

    ``switches`` holds ``(t_start, index)`` pairs with 0-based indices,
    sorted by time, the first at ``t = 0``.
    """

    dwell: float
    switches: tuple
    mode: str = "schedule"
    seed: Optional[int] = None

    def __post_init__(self):
        if not (self.dwell > 0 and math.isfinite(self.dwell)):
            raise ValueError(f"dwell time must be positive, got {self.dwell}")
        sw = tuple((float(t), int(k)) for t, k in self.switches)
        if not sw:
            raise ValueError("switching signal needs at least one entry")
        if sw[0][0] != 0.0:
            raise ValueError(f"first switch must be at t = 0, got {sw[0][0]}")
        for (t0, _), (t1, _) in zip(sw, sw[1:]):
            if t1 - t0 < self.dwell * (1 - 1e-12):
                raise DwellViolation(
                    f"switch at t={t1:g} follows t={t0:g} by {t1 - t0:g} < dwell {self.dwell:g}")
        object.__setattr__(self, "switches", sw)

    def index_at(self, t):
        idx = self.switches[0][1]
        for ts, k in self.switches:
            if ts <= t:
                idx = k
            else:
                break
        return idx

    def validate_for(self, topo):
        for _, k in self.switches:
            if not 0 <= k < len(topo):
                raise ValueError(f"topology index {k + 1} outside 1..{len(topo)}")

    def to_dict(self):
        return {"mode": self.mode, "dwell": self.dwell, "seed": self.seed,
                "schedule": [[t, k + 1] for t, k in self.switches]}


def constant_signal(index=0, dwell=DEFAULT_DWELL):
    return SwitchingSignal(dwell, ((0.0, index),))


def generate_signal(spec, topo):
    """Build a switching signal from a config mapping.

    ``spec`` has ``mode`` (``"schedule"`` or ``"random"``) and ``dwell``.
    Schedule mode reads ``schedule``: ``[[t_start, graph], ...]`` with
    1-based graph numbers.  Random mode reads ``seed`` and ``t_end`` and
    draws a uniform graph index and a uniform dwell in ``[T_d, 2 T_d]``
    for every segment.
    """
    mode = spec.get("mode", "schedule")
    dwell = float(spec.get("dwell", DEFAULT_DWELL))
    if mode == "schedule":
        entries = spec.get("schedule", [[0.0, 1]])
        sig = SwitchingSignal(dwell, tuple((t, int(k) - 1) for t, k in entries), "schedule")
    elif mode == "random":
        seed = int(spec.get("seed", 42))
        t_end = float(spec["t_end"])
        rng = np.random.default_rng(seed)
        t = 0.0
        switches = []
        while t < t_end:
            switches.append((t, int(rng.integers(len(topo)))))
            t += float(rng.uniform(dwell, 2.0 * dwell))
        sig = SwitchingSignal(dwell, tuple(switches), "random", seed)
    else:
        raise ValueError(f"unknown switching mode {mode!r}")
    sig.validate_for(topo)
    return sig


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (steps + 1, N * d)
    reference: np.ndarray  # (steps + 1, d)
    disagreement: np.ndarray
    cost_running: np.ndarray
    lyapunov: Optional[np.ndarray]
    topology: np.ndarray  # index used on [t_k, t_{k+1}]
    N: int
    d: int
    cost_check: float = 0.0  # worst relative mismatch between cost forms
    complete: bool = True

    def agent_states(self):
        return self.states.reshape(len(self.times), self.N, self.d)

    @property
    def J_T(self):
        return float(self.cost_running[-1])


@dataclass
class CostTerms:
    control: float
    regulation: float
    control_form: float
    regulation_form: float

    @property
    def total(self):
        return self.control + self.regulation

    @property
    def mismatch(self):
        return max(_rel_gap(self.control, self.control_form),
                   _rel_gap(self.regulation, self.regulation_form))


def _rel_gap(a, b):
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0.0 else abs(a - b) / scale


def accumulate_cost(X, graph, K, Q, R, L=None):
    """Instantaneous control and regulation cost at a network state.

    ``X`` is ``(N, d)``.  The pairwise sums are computed edge by edge:
    ``J_Cu = sum_i u_i^T R u_i`` with ``u_i = K sum_j w_ij (x_j - x_i)``
    and ``J_Cx = sum_i sum_j w_ij (x_j - x_i)^T Q (x_j - x_i)``.  They are
    returned together with the Laplacian quadratic forms
    ``x^T (L^2 kron K^T R K) x`` and ``x^T (2 L kron Q) x`` for cross-checking.
    """
    X = np.asarray(X, dtype=float)
    i, j, w = graph.edge_arrays()
    diff = X[j] - X[i]
    inflow = np.zeros_like(X)
    np.add.at(inflow, i, w[:, None] * diff)
    np.add.at(inflow, j, -w[:, None] * diff)
    U = inflow @ K.T
    control = float(np.sum((U @ R) * U))
    regulation = 2.0 * float(np.sum(w * np.sum((diff @ Q) * diff, axis=1)))

    # Shifting every agent by the same vector leaves both forms unchanged
    # (L 1 = 0); anchoring on agent 1 keeps the differences exact near consensus.
    Y = X - X[0]
    if L is None:
        L = laplacian(graph)
    LY = L @ Y
    control_form = float(np.sum((LY @ (K.T @ R @ K)) * LY))
    regulation_form = 2.0 * float(np.sum((LY @ Q) * Y))
    return CostTerms(control, regulation, control_form, regulation_form)


def _rk4(rhs, y, h):
    k1 = rhs(y)
    k2 = rhs(y + 0.5 * h * k1)
    k3 = rhs(y + 0.5 * h * k2)
    k4 = rhs(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step_topologies(sig, n_steps, h):
    """Topology index for each step interval, with switch times snapped to the grid."""
    idx = np.empty(n_steps, dtype=int)
    marks = [(int(round(t / h)), k) for t, k in sig.switches]
    for (start, k), (stop, _) in zip(marks, marks[1:] + [(n_steps, None)]):
        idx[max(start, 0):max(min(stop, n_steps), 0)] = k
    return idx


def integrate(m, K, topo, sig, x0, t_end, h=1e-3, P=None, cost=None):
    """Fixed-step RK4 run of the closed loop on ``[0, t_end]``.

    Parameters
    ----------
    m : AgentModel
    K : (p, d) gain
    topo : TopologySet
    sig : SwitchingSignal
    x0 : initial state, ``(N, d)`` or stacked length ``N d``
    t_end, h : horizon and step; the grid has ``round(t_end / h)`` steps
    P : optional ``(d, d)`` matrix; when given, ``V(t)`` is recorded
    cost : optional ``CostWeights``; without it the running cost is zero

    Raises ``NonFiniteState`` (carrying the partial trajectory) when any
    state entry exceeds 1e12 in magnitude or becomes non-finite.
    """
    N, d = topo.n, m.d
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape != (m.p, d):
        raise DimensionMismatch(f"K has shape {K.shape}, expected {(m.p, d)}")
    X = np.array(x0, dtype=float).reshape(-1)
    if X.size != N * d:
        raise DimensionMismatch(f"x0 has {X.size} entries, expected N*d = {N * d}")
    if not np.all(np.isfinite(X)):
        raise ValueError("x0 must be finite")
    if not (h > 0 and t_end > 0):
        raise ValueError("need h > 0 and t_end > 0")
    sig.validate_for(topo)
    X = X.reshape(N, d)

    n_steps = int(round(t_end / h))
    times = np.arange(n_steps + 1) * h
    modes = step_topologies(sig, n_steps, h)
    A_T = m.A.T
    BK_T = (m.B @ K).T
    laps = topo.laplacians()
    Ubar = orthonormal_complement(N) if P is not None else None

    # L 1 = 0, so the coupling can act on the state anchored at agent 1;
    # identical agents then get exactly zero input and stay bitwise identical.
    def make_rhs(L):
        def rhs(Y):
            return Y @ A_T - L @ (Y - Y[0]) @ BK_T + m.f_batch(Y)
        return rhs

    rhs_by_topology = [make_rhs(L) for L in laps]

    def ref_rhs(c):
        return c @ A_T + m.f_batch(c)

    states = np.empty((n_steps + 1, N * d))
    reference = np.empty((n_steps + 1, d))
    disagreement = np.empty(n_steps + 1)
    cost_running = np.zeros(n_steps + 1)
    lyap = np.empty(n_steps + 1) if P is not None else None

    def record(k, Xk, ck):
        states[k] = Xk.reshape(-1)
        reference[k] = ck[0]
        Z = Xk - Xk[0]
        disagreement[k] = np.linalg.norm(Z - Z.mean(axis=0))
        if lyap is not None:
            S = Ubar.T @ (Xk - Xk[0])
            lyap[k] = float(np.sum((S @ P) * S))

    def integrand(Xk, gidx):
        if cost is None:
            return 0.0, 0.0
        terms = accumulate_cost(Xk, topo.graphs[gidx], K, cost.Q, cost.R, laps[gidx])
        return terms.total, terms.mismatch

    c = X.mean(axis=0, keepdims=True)
    record(0, X, c)
    worst = 0.0
    cached = None  # (topology, integrand) at the current state
    for k in range(n_steps):
        g = modes[k]
        if cached is not None and cached[0] == g:
            g_left = cached[1]
        else:
            g_left, mis = integrand(X, g)
            worst = max(worst, mis)
        X = _rk4(rhs_by_topology[g], X, h)
        c = _rk4(ref_rhs, c, h)
        if not np.all(np.isfinite(X)) or np.max(np.abs(X)) > BLOWUP:
            partial = Trajectory(times[:k + 1], states[:k + 1], reference[:k + 1],
                                 disagreement[:k + 1], cost_running[:k + 1],
                                 None if lyap is None else lyap[:k + 1],
                                 modes[:k], N, d, worst, complete=False)
            raise NonFiniteState(f"state left the |x| <= {BLOWUP:g} box at t = {times[k + 1]:g}",
                                 partial)
        g_right, mis = integrand(X, g)
        worst = max(worst, mis)
        cached = (g, g_right)
        cost_running[k + 1] = cost_running[k] + 0.5 * h * (g_left + g_right)
        record(k + 1, X, c)

    return Trajectory(times, states, reference, disagreement, cost_running, lyap,
                      modes, N, d, worst)


@dataclass
class ConvergenceReport:
    consensus_time: Optional[float]
    J_T_final: float
    beta: float
    bound_satisfied: bool
    V_monotone: Optional[bool]
    tracking_error: Optional[float] = None
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "consensus_time": self.consensus_time,
            "J_T_final": self.J_T_final,
            "beta": self.beta,
            "bound_satisfied": self.bound_satisfied,
            "V_monotone": self.V_monotone,
            "tracking_error": self.tracking_error,
        }


def first_time_below(traj, threshold):
    hits = np.nonzero(traj.disagreement <= threshold)[0]
    return None if hits.size == 0 else int(hits[0])


def tracking_error(traj, start=0):
    """``max_i ||x_i(t) - c(t)|| / (1 + ||c(t)||)`` over steps ``start..``."""
    X = traj.agent_states()[start:]
    C = traj.reference[start:]
    err = np.linalg.norm(X - C[:, None, :], axis=2).max(axis=1)
    return float(np.max(err / (1.0 + np.linalg.norm(C, axis=1))))


def lyapunov_monotone(V, tol=V_TOL):
    V = np.asarray(V)
    return bool(np.all(V[1:] <= V[:-1] + tol * (1.0 + V[:-1])))


def convergence_report(traj, beta):
    """Consensus time, final cost against ``beta`` and V(t) monotonicity.

    Consensus time is the first grid time at which the disagreement is at
    most ``1e-4 (1 + initial disagreement)``; ``None`` if never reached.
    """
    k = first_time_below(traj, CONSENSUS_REL * (1.0 + traj.disagreement[0]))
    J = traj.J_T
    return ConvergenceReport(
        consensus_time=None if k is None else float(traj.times[k]),
        J_T_final=J,
        beta=float(beta),
        bound_satisfied=bool(J <= beta),
        V_monotone=None if traj.lyapunov is None else lyapunov_monotone(traj.lyapunov),
        tracking_error=None if k is None else tracking_error(traj, k),
    )


def csv_header(N, d):
    cols = ["t"]
    cols += [f"x_{i}_{k}" for i in range(1, N + 1) for k in range(1, d + 1)]
    cols += [f"c_{k}" for k in range(1, d + 1)]
    cols += ["disagreement", "J_T", "V"]
    return ",".join(cols)


def write_csv(traj, path):
    """One row per grid point, every number in ``%.17g``."""
    n = len(traj.times)
    V = traj.lyapunov if traj.lyapunov is not None else np.full(n, np.nan)
    table = np.column_stack([traj.times, traj.states, traj.reference,
                             traj.disagreement, traj.cost_running, V])
    with open(path, "w", newline="\n") as fh:
        fh.write(csv_header(traj.N, traj.d) + "\n")
        np.savetxt(fh, table, fmt="%.17g", delimiter=",")
