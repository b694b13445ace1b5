"""Communication digraph and the coupling matrices built from it.

Node 0 is the leader; nodes 1..N are agents.  ``weights[i, j]`` holds the
gain a_ij an agent i applies to information received from node j, so an edge
j -> i exists iff ``weights[i, j] > 0``.  The leader receives nothing.

Two coupling matrices drive the synthesis:

* ``build_h`` -- the N x N matrix L + Delta pairing the agent-subgraph
  Laplacian with the leader pinning weights.  Every eigenvalue has positive
  real part exactly when the leader can reach every agent.
* ``build_augmented_h`` -- the D x D block matrix obtained by expanding each
  agent into its chain of r_i + 1 observer stages (D = sum of r_i + 1).
  Diagonal blocks carry the stage chain (1 on the first r_i diagonal
  entries, -1 on the superdiagonal, total in-weight in the corner);
  off-diagonal block (i, j) carries -a_ij in its bottom-left entry.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DiGraph",
    "AugmentedSpec",
    "GraphError",
    "has_spanning_tree",
    "build_h",
    "build_augmented_h",
    "min_real_part",
]


class GraphError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DiGraph:
    """Weighted digraph on N agents plus the leader node 0."""

    weights: np.ndarray  # (N+1, N+1), weights[i, j] = a_ij >= 0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] < 2:
            raise GraphError(f"adjacency must be square of size >= 2, got {w.shape}")
        if np.any(w < 0):
            raise GraphError("edge weights must be non-negative")
        if np.any(np.diag(w) != 0):
            raise GraphError("self-loops are not allowed (diagonal must be zero)")
        if np.any(w[0] != 0):
            raise GraphError("the leader (node 0) cannot receive edges")

    @property
    def n_agents(self) -> int:
        return self.weights.shape[0] - 1

    @classmethod
    def from_edges(cls, n_agents: int, edges) -> "DiGraph":
        """Build from an edge list of (from_node, to_node, weight)."""
        w = np.zeros((n_agents + 1, n_agents + 1))
        for src, dst, weight in edges:
            src, dst = int(src), int(dst)
            if not (0 <= src <= n_agents and 0 <= dst <= n_agents):
                raise GraphError(f"edge ({src} -> {dst}) references an unknown node")
            if weight <= 0:
                raise GraphError(f"edge ({src} -> {dst}) has non-positive weight {weight}")
            if w[dst, src] != 0:
                raise GraphError(f"duplicate edge ({src} -> {dst})")
            w[dst, src] = float(weight)
        return cls(w)

    def in_neighbors(self, i: int) -> list[tuple[int, float]]:
        """Nodes j feeding agent i, as (j, a_ij) pairs."""
        row = self.weights[i]
        return [(j, float(row[j])) for j in np.nonzero(row)[0]]


@dataclass(frozen=True)
class AugmentedSpec:
    """Per-agent chain orders for the stage-expanded graph."""

    orders: tuple[int, ...]
    dimension: int = field(init=False)

    def __post_init__(self):
        if not self.orders or any(int(r) < 1 for r in self.orders):
            raise GraphError("every agent order must be a positive integer")
        object.__setattr__(self, "orders", tuple(int(r) for r in self.orders))
        object.__setattr__(self, "dimension", sum(r + 1 for r in self.orders))


def has_spanning_tree(g: DiGraph) -> bool:
    """True iff every agent is reachable from the leader along directed edges."""
    n = g.n_agents
    w = g.weights
    seen = np.zeros(n + 1, dtype=bool)
    seen[0] = True
    stack = [0]
    while stack:
        j = stack.pop()
        for i in np.nonzero(w[:, j])[0]:
            if not seen[i]:
                seen[i] = True
                stack.append(i)
    return bool(seen.all())


def build_h(g: DiGraph) -> np.ndarray:
    """N x N coupling matrix: agent Laplacian plus leader pinning diagonal."""
    n = g.n_agents
    a = g.weights[1:, 1:]  # agent-to-agent weights
    lap = np.diag(a.sum(axis=1)) - a
    return lap + np.diag(g.weights[1:, 0])


def build_augmented_h(g: DiGraph, spec: AugmentedSpec) -> np.ndarray:
    """D x D block coupling matrix over the stage-expanded chains."""
    n = g.n_agents
    if len(spec.orders) != n:
        raise GraphError(
            f"augmented spec has {len(spec.orders)} orders for {n} agents")
    offsets = np.concatenate(([0], np.cumsum([r + 1 for r in spec.orders])))
    d = spec.dimension
    h = np.zeros((d, d))
    for i in range(n):
        r = spec.orders[i]
        o = offsets[i]
        for l in range(r):
            h[o + l, o + l] = 1.0
            h[o + l, o + l + 1] = -1.0
        h[o + r, o + r] = g.weights[i + 1].sum()  # all in-weights incl. leader
        for j in range(n):
            if j != i and g.weights[i + 1, j + 1] > 0:
                h[o + r, offsets[j]] = -g.weights[i + 1, j + 1]
    return h


def min_real_part(m: np.ndarray) -> float:
    """Smallest real part over the spectrum (dense QR eigensolver)."""
    m = np.asarray(m, dtype=float)
    if m.size == 0:
        raise GraphError("empty matrix has no spectrum")
    if not np.all(np.isfinite(m)):
        raise GraphError("matrix entries must be finite")
    return float(np.linalg.eigvals(m).real.min())
