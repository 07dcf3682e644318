"""Stopping rule for the online learning episode.

Two consecutive snapshots are compared on both structure and verdict:
similarity of edge-weight distributions (Jensen-Shannon, base 2 so the
score lands in [0, 1]) and similarity of the ranked cause lists
(rank-biased overlap). The weighted combination must strictly exceed a
threshold to stop.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import CausalGraph
from .localize import RankedCauses

EPSILON = 1e-12


@dataclass(frozen=True)
class ConvergenceConfig:
    alpha: float = 0.5
    threshold: float = 0.95
    rbo_p: float = 0.9

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if not 0.0 < self.threshold <= 1.0:
            raise ValueError(f"threshold must be in (0, 1], got {self.threshold}")
        if not 0.0 < self.rbo_p < 1.0:
            raise ValueError(f"rbo_p must be in (0, 1), got {self.rbo_p}")


def edge_distribution(graph: CausalGraph) -> np.ndarray:
    """Off-diagonal weights smoothed by epsilon and normalized to sum 1."""
    n = graph.n_nodes
    mask = ~np.eye(n, dtype=bool)
    weights = graph.adjacency[mask] + EPSILON
    return weights / weights.sum()


def graph_similarity(g1: CausalGraph, g2: CausalGraph) -> float:
    """1 minus the Jensen-Shannon divergence of the edge distributions."""
    if g1.node_labels != g2.node_labels:
        raise ValueError(
            f"node sets differ: {g1.node_labels} vs {g2.node_labels}"
        )
    p = edge_distribution(g1)
    q = edge_distribution(g2)
    m = 0.5 * (p + q)
    js = 0.5 * _kl_base2(p, m) + 0.5 * _kl_base2(q, m)
    # Clamp float fuzz so the result is an honest [0, 1] similarity.
    return float(min(1.0, max(0.0, 1.0 - js)))


def _kl_base2(p: np.ndarray, q: np.ndarray) -> float:
    return float(np.sum(p * np.log2(p / q)))


def list_similarity(
    l1: RankedCauses | Sequence[str],
    l2: RankedCauses | Sequence[str],
    p: float = 0.9,
) -> float:
    """Extrapolated rank-biased overlap of two rankings.

    Evaluated at depth k = min(len(l1), len(l2)): the weighted sum of
    agreements plus the optimistic tail term A_k * p^k.
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"persistence must be in (0, 1), got {p}")
    a = list(l1.labels if isinstance(l1, RankedCauses) else l1)
    b = list(l2.labels if isinstance(l2, RankedCauses) else l2)
    for name, lst in (("first", a), ("second", b)):
        if len(set(lst)) != len(lst):
            raise ValueError(f"{name} list contains duplicate ids: {lst}")
    k = min(len(a), len(b))
    if k == 0:
        return 1.0 if not a and not b else 0.0
    seen_a: set[str] = set()
    seen_b: set[str] = set()
    overlap = 0
    weighted = 0.0
    agreement = 0.0
    for depth in range(1, k + 1):
        item_a, item_b = a[depth - 1], b[depth - 1]
        if item_a == item_b:
            overlap += 1
        else:
            if item_a in seen_b:
                overlap += 1
            if item_b in seen_a:
                overlap += 1
            seen_a.add(item_a)
            seen_b.add(item_b)
        agreement = overlap / depth
        weighted += agreement * p ** (depth - 1)
    return float((1.0 - p) * weighted + agreement * p**k)


def combined(g_sim: float, l_sim: float, cfg: ConvergenceConfig) -> tuple[float, bool]:
    """Weighted similarity score and the strict stopping verdict."""
    for name, value in (("graph similarity", g_sim), ("list similarity", l_sim)):
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"{name} must be in [0, 1], got {value}")
    score = cfg.alpha * g_sim + (1.0 - cfg.alpha) * l_sim
    return score, score > cfg.threshold
