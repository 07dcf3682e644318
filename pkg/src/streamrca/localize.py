"""Root-cause ranking by random walk with restarts from the KPI node.

Faults propagate along causal edges toward the KPI, so the walk runs on the
transposed graph: a particle starting at the KPI drifts toward likely
sources, restarting at the KPI with fixed probability. Steady-state visit
mass ranks the entities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import CausalGraph

DEFAULT_PHI_JUMP = 0.15
DEFAULT_RESTART = 0.3
DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10_000


@dataclass(frozen=True)
class RankedCauses:
    """Entities ordered by suspicion score, KPI excluded."""

    entries: tuple[tuple[str, float], ...]

    def __post_init__(self) -> None:
        labels = [label for label, _ in self.entries]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate node ids in ranking: {labels}")
        scores = [score for _, score in self.entries]
        if any(b > a for a, b in zip(scores, scores[1:])):
            raise ValueError("scores must be non-increasing")

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.entries)

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class WalkResult:
    """Stationary visit distribution plus convergence diagnostics."""

    q: np.ndarray
    iterations: int
    converged: bool


def transition_matrix(graph: CausalGraph, phi_jump: float = DEFAULT_PHI_JUMP) -> np.ndarray:
    """Row-stochastic walk matrix on the transposed adjacency.

    Each row spreads (1 - phi_jump) of its mass over reversed edges in
    proportion to weight and keeps the rest on a self-loop; rows with no
    outgoing mass keep everything.
    """
    if not 0.0 <= phi_jump <= 1.0:
        raise ValueError(f"phi_jump must be in [0, 1], got {phi_jump}")
    adj_t = graph.adjacency.T
    if np.any(adj_t < 0.0):
        raise ValueError("graph weights must be nonnegative")
    n = graph.n_nodes
    row_sums = adj_t.sum(axis=1)
    h = np.zeros((n, n))
    active = row_sums > 0.0
    h[active] = (1.0 - phi_jump) * adj_t[active] / row_sums[active, None]
    # Residual row mass sits on the diagonal: phi_jump for active rows, all
    # of it for dangling rows.
    h[np.arange(n), np.arange(n)] += 1.0 - h.sum(axis=1)
    return h


def rwr(
    h: np.ndarray,
    restart: float = DEFAULT_RESTART,
    q_init: np.ndarray | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> WalkResult:
    """Iterate q <- (1-restart)·Hᵀq + restart·q_init to its fixed point."""
    n = h.shape[0]
    if h.shape != (n, n):
        raise ValueError(f"transition matrix must be square, got {h.shape}")
    if not 0.0 <= restart <= 1.0:
        raise ValueError(f"restart must be in [0, 1], got {restart}")
    if q_init is None:
        q_init = np.full(n, 1.0 / n)
    q_init = np.asarray(q_init, dtype=np.float64)
    if q_init.shape != (n,) or np.any(q_init < 0.0) or abs(q_init.sum() - 1.0) > 1e-9:
        raise ValueError("q_init must be a probability distribution over the nodes")
    ht = h.T
    q = q_init.copy()
    for iteration in range(1, max_iter + 1):
        q_next = (1.0 - restart) * (ht @ q) + restart * q_init
        delta = float(np.abs(q_next - q).sum())
        q = q_next
        if delta < tol:
            return WalkResult(q=q, iterations=iteration, converged=True)
    return WalkResult(q=q, iterations=max_iter, converged=False)


def kpi_point_mass(graph: CausalGraph) -> np.ndarray:
    q = np.zeros(graph.n_nodes)
    q[graph.kpi_index] = 1.0
    return q


def rank_nodes(
    q: np.ndarray | WalkResult, graph: CausalGraph, k: int
) -> RankedCauses:
    """Top-k entities by visit mass; KPI dropped, ties broken by label."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    scores = q.q if isinstance(q, WalkResult) else np.asarray(q, dtype=np.float64)
    if scores.shape != (graph.n_nodes,):
        raise ValueError(
            f"score vector shape {scores.shape} does not match {graph.n_nodes} nodes"
        )
    order = [
        (label, float(scores[i]))
        for i, label in enumerate(graph.node_labels)
        if i != graph.kpi_index
    ]
    order.sort(key=lambda item: (-item[1], item[0]))
    return RankedCauses(entries=tuple(order[:k]))


def localize(
    graph: CausalGraph,
    k: int,
    *,
    phi_jump: float = DEFAULT_PHI_JUMP,
    restart: float = DEFAULT_RESTART,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> RankedCauses:
    """One-call pipeline: transition matrix, walk from the KPI, rank."""
    h = transition_matrix(graph, phi_jump)
    result = rwr(h, restart, kpi_point_mass(graph), tol, max_iter)
    return rank_nodes(result, graph, k)
