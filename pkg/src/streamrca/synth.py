"""Synthetic metric streams with a known causal DAG and an injected fault.

The generator samples a random DAG over m entities plus a KPI sink, draws
structural-VAR coefficients, simulates a normal period, then injects a
persistent mean shift at one node and lets it propagate through the
instantaneous structure and the AR dynamics. Ground truth (DAG, fault node,
trigger time) is returned alongside the frame so retrieval quality can be
scored exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import CausalGraph, MetricFrame
from .errors import ConfigError, DataError

SPECTRAL_CAP = 0.95
MAX_DAG_RESAMPLES = 100
# Rows simulated and discarded before recording starts, so the normal
# period is sampled from the stationary regime rather than the ramp-up
# from the zero initial state.
BURN_IN = 200


@dataclass(frozen=True)
class SyntheticSpec:
    """Knobs for one generated fault episode."""

    m: int = 10
    t_normal: int = 400
    t_fault: int = 200
    edge_prob: float | None = None
    fault_node: int = 0
    shift_magnitude: float = 5.0
    noise_std: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.m < 2:
            raise ConfigError(f"need at least 2 entities, got {self.m}")
        if self.t_normal < 2 or self.t_fault < 2:
            raise ConfigError("both period lengths must be >= 2")
        if not 0 <= self.fault_node < self.m:
            raise ConfigError(
                f"fault_node {self.fault_node} out of range for m={self.m}"
            )
        if self.edge_prob is not None and not 0.0 < self.edge_prob < 1.0:
            raise ConfigError(f"edge_prob must be in (0, 1), got {self.edge_prob}")
        if self.noise_std <= 0.0:
            raise ConfigError(f"noise_std must be positive, got {self.noise_std}")
        if self.shift_magnitude < 0.0:
            raise ConfigError("shift_magnitude must be nonnegative")

    @property
    def density(self) -> float:
        # Expected out-degree about 2 unless overridden.
        return self.edge_prob if self.edge_prob is not None else min(0.9, 2.0 / self.m)


def _sample_dag(
    rng: np.random.Generator, m: int, density: float
) -> tuple[np.ndarray, np.ndarray]:
    """Random DAG over m entities + KPI sink; returns (adjacency, topo order).

    Node m is the KPI: last in topological order, at least one parent, no
    children. The adjacency is in node-id space (not topo-order space).
    """
    n = m + 1
    order = np.concatenate([rng.permutation(m), [m]])
    adj = np.zeros((n, n))
    for i in range(n - 1):
        for j in range(i + 1, n):
            if rng.random() < density:
                adj[order[i], order[j]] = rng.uniform(0.4, 0.9)
    if not np.any(adj[:, m] > 0):
        parent = int(order[rng.integers(0, m)])
        adj[parent, m] = rng.uniform(0.4, 0.9)
    return adj, order


def _reaches(adj: np.ndarray, src: int, dst: int) -> bool:
    n = adj.shape[0]
    seen = np.zeros(n, dtype=bool)
    stack = [src]
    while stack:
        node = stack.pop()
        if node == dst:
            return True
        if seen[node]:
            continue
        seen[node] = True
        stack.extend(np.flatnonzero(adj[node] > 0).tolist())
    return False


def generate(spec: SyntheticSpec) -> tuple[MetricFrame, CausalGraph, dict]:
    """Simulate one fault episode; returns (frame, true graph, truth record).

    The truth record carries the trigger index, the root-cause label set,
    and the channel labels, ready to serialize next to the CSV.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.m + 1
    adj = None
    for _ in range(MAX_DAG_RESAMPLES):
        candidate, _ = _sample_dag(rng, spec.m, spec.density)
        if _reaches(candidate, spec.fault_node, spec.m):
            adj = candidate
            break
    if adj is None:
        raise DataError(
            f"no sampled DAG connected node {spec.fault_node} to the KPI in "
            f"{MAX_DAG_RESAMPLES} attempts; raise edge_prob"
        )

    # Instantaneous structure A and AR diagonal D, damped until the reduced
    # one-step transition D(I-A)^{-1} is comfortably stable.
    inv_ia = np.linalg.inv(np.eye(n) - adj)
    d_diag = rng.uniform(0.2, 0.6, size=n)
    reduced = np.diag(d_diag) @ inv_ia
    radius = max(abs(np.linalg.eigvals(reduced)))
    if radius >= SPECTRAL_CAP:
        d_diag *= SPECTRAL_CAP / (radius + 1e-12)

    t_total = spec.t_normal + spec.t_fault
    noise = rng.normal(0.0, spec.noise_std, size=(BURN_IN + t_total, n))
    values = np.zeros((t_total, n))
    row = np.zeros(n)
    shift = np.zeros(n)

    for step in range(BURN_IN + t_total):
        t = step - BURN_IN
        eps = noise[step].copy()
        if t == spec.t_normal:
            sigma = values[: spec.t_normal, spec.fault_node].std()
            shift[spec.fault_node] = spec.shift_magnitude * sigma
        eps += shift
        row = (row * d_diag + eps) @ inv_ia
        if t >= 0:
            values[t] = row

    labels = tuple(f"e{i + 1}" for i in range(spec.m)) + ("kpi",)
    frame = MetricFrame(
        timestamps=np.arange(t_total, dtype=np.float64),
        values=values,
        entity_names=labels,
        kpi_index=spec.m,
    )
    graph = CausalGraph(adjacency=adj, node_labels=labels, kpi_index=spec.m)
    truth = {
        "trigger": spec.t_normal,
        "root_causes": [labels[spec.fault_node]],
        "nodes": list(labels),
    }
    return frame, graph, truth
