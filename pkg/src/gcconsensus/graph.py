"""Weighted undirected interaction graphs and switching topology sets."""

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import Disconnected, DisconnectedMember, EmptySet, SizeMismatch
from .numerics import sym_eig

SPECTRAL_ZERO = 1e-9


@dataclass(frozen=True)
class WeightedGraph:
    """Undirected graph on nodes ``1..n``; each edge ``(i, j, w)`` has ``i != j``, ``w > 0``."""

    n: int
    edges: tuple = ()

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"node count must be a positive integer, got {self.n}")
        seen = set()
        clean = []
        for e in self.edges:
            if len(e) != 3:
                raise ValueError(f"edge {e!r} must be (i, j, w)")
            i, j, w = int(e[0]), int(e[1]), float(e[2])
            if i != e[0] or j != e[1]:
                raise ValueError(f"edge {e!r} has non-integer node index")
            if not (1 <= i <= self.n and 1 <= j <= self.n):
                raise ValueError(f"edge {e!r} references a node outside 1..{self.n}")
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            if not (np.isfinite(w) and w > 0):
                raise ValueError(f"edge {e!r} weight must be positive")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise ValueError(f"duplicate edge {key}")
            seen.add(key)
            clean.append((i, j, w))
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "edges", tuple(clean))

    @classmethod
    def from_dict(cls, data):
        return cls(int(data["n"]), tuple(tuple(e) for e in data.get("edges", ())))

    def to_dict(self):
        return {"n": self.n, "edges": [[i, j, w] for i, j, w in self.edges]}

    def adjacency(self):
        W = np.zeros((self.n, self.n))
        for i, j, w in self.edges:
            W[i - 1, j - 1] = W[j - 1, i - 1] = w
        return W

    def edge_arrays(self):
        """0-based ``(i, j, w)`` arrays, one entry per undirected edge."""
        if not self.edges:
            return np.zeros(0, int), np.zeros(0, int), np.zeros(0)
        e = np.array(self.edges, dtype=float)
        return e[:, 0].astype(int) - 1, e[:, 1].astype(int) - 1, e[:, 2]


def laplacian(g):
    """``L = D - W`` for the weighted adjacency ``W`` and degree matrix ``D``."""
    W = g.adjacency()
    return np.diag(W.sum(axis=1)) - W


def is_connected(g):
    """Breadth-first search over the positive-weight edges."""
    nbrs = [[] for _ in range(g.n)]
    for i, j, _ in g.edges:
        nbrs[i - 1].append(j - 1)
        nbrs[j - 1].append(i - 1)
    seen = {0}
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in nbrs[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return len(seen) == g.n


def spectrum(g):
    """Ascending Laplacian eigenvalues of a connected graph."""
    lam = sym_eig(laplacian(g)).eigenvalues
    if g.n > 1 and lam[1] <= SPECTRAL_ZERO:
        raise Disconnected(f"algebraic connectivity {lam[1]:.3e} <= {SPECTRAL_ZERO:g}")
    lam = lam.copy()
    lam[0] = 0.0 if abs(lam[0]) <= SPECTRAL_ZERO else lam[0]
    return lam


@dataclass(frozen=True)
class TopologySet:
    graphs: tuple
    lambda_min: float
    lambda_max: float
    spectra: tuple = field(repr=False, default=())

    @property
    def n(self):
        return self.graphs[0].n

    def __len__(self):
        return len(self.graphs)

    def laplacians(self):
        return [laplacian(g) for g in self.graphs]


def set_bounds(graphs):
    """Build a ``TopologySet`` and its spectral bounds.

    ``lambda_min`` is the smallest algebraic connectivity over the set and
    ``lambda_max`` the largest Laplacian eigenvalue over the set.
    """
    graphs = tuple(graphs)
    if not graphs:
        raise EmptySet("topology set is empty")
    n = graphs[0].n
    for k, g in enumerate(graphs):
        if g.n != n:
            raise SizeMismatch(f"topology #{k + 1} has {g.n} nodes, expected {n}")
    if n < 2:
        raise SizeMismatch("a network needs at least two agents")
    spectra = []
    for k, g in enumerate(graphs):
        if not is_connected(g):
            raise DisconnectedMember(k)
        spectra.append(spectrum(g))
    lam_min = min(float(s[1]) for s in spectra)
    lam_max = max(float(s[-1]) for s in spectra)
    return TopologySet(graphs, lam_min, lam_max, tuple(spectra))


def disagreement_projector(n):
    """``(n I - 1 1^T) / n``, the projector onto the disagreement subspace."""
    if n < 2:
        raise ValueError("n must be at least 2")
    return np.eye(n) - np.full((n, n), 1.0 / n)


def orthonormal_complement(n):
    """``n x (n-1)`` matrix with orthonormal columns orthogonal to the ones vector.

    Columns come from Gram-Schmidt on ``e_k - e_1`` for ``k = 2..n``
    (two passes for numerical orthogonality).
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    ones = np.full(n, 1.0 / np.sqrt(n))
    cols = []
    for k in range(1, n):
        v = -np.eye(n)[0] + np.eye(n)[k]
        for _ in range(2):
            v = v - (ones @ v) * ones
            for u in cols:
                v = v - (u @ v) * u
        cols.append(v / np.linalg.norm(v))
    return np.column_stack(cols)
