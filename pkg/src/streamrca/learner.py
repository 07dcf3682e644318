"""Incremental causal-graph learning over streaming batches.

Each batch is encoded twice: a state-invariant path that mixes a summary of
retained previous-state rows with the recurrent batch summary, and a
state-dependent path driven by the recurrent summary alone. Both paths run
through two-layer graph convolutions normalized by the previous released
graph, decode to symmetric edge-probability matrices, and are fused through
a skew commutator that decides edge directions. Training minimizes
reconstruction against the previous graph, three structural-VAR predictive
errors, an L1 sparsity term, and a differentiable acyclicity penalty.

The fused matrix itself, with its continuous weights, becomes the anchor
for the next batch. Thresholding and cycle pruning happen in
``release_graph`` as a separate step for consumers that need a certified
DAG, so the anchor never collapses to the handful of edges that cleared
the release threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .data import Batch, CausalGraph, MetricFrame, lag_embed
from .errors import ConfigError, DivergenceError

ACYCLICITY_TOL = 1e-6
# Channels below this fraction of the strongest baseline deviation are
# treated as bystanders when composing the localization graph.
EXCITATION_CUT = 0.1


@dataclass(frozen=True)
class LearnerConfig:
    """Dimensions, penalties, and schedule for the incremental learner."""

    d_u: int = 16
    d_h: int = 16
    d_z: int = 16
    lag: int = 1
    epochs: int = 200
    lr: float = 1e-2
    lambda1: float = 1e-2
    lambda2: float = 1.0
    rho_max: int = 512
    tau_edge: float = 0.3
    bootstrap_epochs: int = 600
    bootstrap_lr: float = 2e-2
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("d_u", "d_h", "d_z"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.lag < 1:
            raise ConfigError(f"lag must be >= 1, got {self.lag}")
        if self.epochs < 1 or self.bootstrap_epochs < 1:
            raise ConfigError("epoch counts must be >= 1")
        if self.lr <= 0 or self.bootstrap_lr <= 0:
            raise ConfigError("learning rates must be positive")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("penalty weights must be nonnegative")
        if self.rho_max < self.lag + 2:
            raise ConfigError(f"rho_max must be >= lag + 2, got {self.rho_max}")
        if not 0.0 <= self.tau_edge < 1.0:
            raise ConfigError(f"tau_edge must be in [0, 1), got {self.tau_edge}")


@dataclass
class LearnerState:
    """Everything carried from batch to batch.

    ``params`` are mutable float64 matrices updated in place by the
    optimizer; ``hidden``/``cell`` advance once per trained batch;
    ``prev_state_data`` is a rolling tail of the most recent rows seen
    before the current batch, with a width fixed at bootstrap time.
    """

    config: LearnerConfig
    params: dict[str, np.ndarray]
    hidden: np.ndarray
    cell: np.ndarray
    prev_graph: CausalGraph
    prev_state_data: np.ndarray
    rho: int
    svar_scale: float = 1.0
    optimizer: ad.Adam | None = None
    batches_trained: int = 0
    # Directed adjacency fitted at bootstrap. The structural-VAR stage is
    # where edge orientation is identifiable from data, so it is retained
    # verbatim and merged into every graph handed to the localizer; the
    # fused per-batch graphs contribute fault-period weights on top.
    structure_prior: np.ndarray | None = None
    # Per-channel mean/std of the bootstrap window, kept so each batch can
    # be scored for how far every channel has moved off its quiet baseline.
    baseline_mean: np.ndarray | None = None
    baseline_std: np.ndarray | None = None
    excitation: np.ndarray | None = None

    @property
    def n_nodes(self) -> int:
        return self.hidden.shape[1]

    def snapshot(self) -> "LearnerState":
        """Deep copy for divergence rollback."""
        return LearnerState(
            config=self.config,
            params={k: v.copy() for k, v in self.params.items()},
            hidden=self.hidden.copy(),
            cell=self.cell.copy(),
            prev_graph=self.prev_graph,
            prev_state_data=self.prev_state_data.copy(),
            rho=self.rho,
            svar_scale=self.svar_scale,
            optimizer=None if self.optimizer is None else self.optimizer.clone(),
            batches_trained=self.batches_trained,
            structure_prior=(
                None if self.structure_prior is None else self.structure_prior.copy()
            ),
            baseline_mean=(
                None if self.baseline_mean is None else self.baseline_mean.copy()
            ),
            baseline_std=(
                None if self.baseline_std is None else self.baseline_std.copy()
            ),
            excitation=None if self.excitation is None else self.excitation.copy(),
        )


@dataclass(frozen=True)
class BatchArtifacts:
    """Final-epoch forward products of one trained batch."""

    z_hat: np.ndarray
    z_check: np.ndarray
    a_hat: np.ndarray
    a_check: np.ndarray
    a_fused: np.ndarray
    loss_trace: tuple[float, ...] = field(default=())


def _offdiag_mask(n: int) -> np.ndarray:
    return 1.0 - np.eye(n)


def _normalized_adjacency(adjacency: np.ndarray) -> np.ndarray:
    """Degree-symmetrized (A + I) used by both graph convolutions."""
    a = adjacency + np.eye(adjacency.shape[0])
    inv_sqrt = 1.0 / np.sqrt(a.sum(axis=1))
    return inv_sqrt[:, None] * a * inv_sqrt[None, :]


def _gcn(nrm: ad.Node, x: ad.Node, w1: ad.Node, w2: ad.Node) -> ad.Node:
    # tanh on the output layer bounds every embedding coordinate, which
    # combined with the 1/d_z logit scale in the decoder keeps the sigmoid
    # out of its flat tails: saturated edge probabilities stop learning and
    # previously froze the whole graph after a few batches.
    hidden = ad.relu(ad.matmul(nrm, ad.matmul(x, w1)))
    return ad.tanh(ad.matmul(nrm, ad.matmul(hidden, w2)))


def _decode(z: ad.Node, mask: ad.Node) -> ad.Node:
    d_z = z.value.shape[1]
    logits = ad.scalar_scale(ad.matmul(z, ad.transpose(z)), 1.0 / np.sqrt(d_z))
    return ad.elementwise_mul(ad.sigmoid(logits), mask)


def _fuse(a_hat: ad.Node, a_check: ad.Node) -> ad.Node:
    # One product, minus its own transpose: the skew part is then exactly
    # antisymmetric in floating point, so opposing edges can never both
    # survive the relu and the diagonal is identically zero.
    prod = ad.matmul(a_hat, ad.transpose(a_check))
    inner = ad.subtract(prod, ad.transpose(prod))
    return ad.relu(ad.tanh(inner))


def fuse_values(a_hat: np.ndarray, a_check: np.ndarray) -> np.ndarray:
    """Array-level fusion, identical to the differentiable path."""
    a_hat = np.asarray(a_hat, dtype=np.float64)
    a_check = np.asarray(a_check, dtype=np.float64)
    if a_hat.shape != a_check.shape or a_hat.shape[0] != a_hat.shape[1]:
        raise ValueError(f"fusion needs equal square shapes, got {a_hat.shape} and {a_check.shape}")
    prod = a_hat @ a_check.T
    return np.maximum(np.tanh(prod - prod.T), 0.0)


def acyclicity(adjacency: np.ndarray) -> float:
    """tr(exp(A∘A)) - n without building a tape."""
    tape = ad.Tape()
    return ad.expm_trace(tape.leaf(adjacency)).item()


def _find_cycle(adjacency: np.ndarray) -> list[tuple[int, int]] | None:
    """Edges of one directed cycle among positive entries, or None."""
    n = adjacency.shape[0]
    color = [0] * n  # 0 unseen, 1 on stack, 2 done
    parent_edge: dict[int, int] = {}
    for root in range(n):
        if color[root] != 0:
            continue
        stack: list[tuple[int, int]] = [(root, 0)]
        color[root] = 1
        while stack:
            node, ptr = stack[-1]
            successors = np.flatnonzero(adjacency[node] > 0)
            if ptr < len(successors):
                stack[-1] = (node, ptr + 1)
                nxt = int(successors[ptr])
                if color[nxt] == 1:
                    cycle = [(node, nxt)]
                    walk = node
                    while walk != nxt:
                        prev = parent_edge[walk]
                        cycle.append((prev, walk))
                        walk = prev
                    cycle.reverse()
                    return cycle
                if color[nxt] == 0:
                    color[nxt] = 1
                    parent_edge[nxt] = node
                    stack.append((nxt, 0))
            else:
                color[node] = 2
                stack.pop()
    return None


def release_graph(
    fused: np.ndarray,
    labels: tuple[str, ...],
    kpi_index: int,
    tau_edge: float,
) -> CausalGraph:
    """Threshold the fused weights, then prune cycles smallest-edge-first."""
    a = np.array(fused, dtype=np.float64)
    a[a < tau_edge] = 0.0
    np.fill_diagonal(a, 0.0)
    while True:
        cycle = _find_cycle(a)
        if cycle is None:
            break
        weakest = min(cycle, key=lambda edge: a[edge])
        a[weakest] = 0.0
    if acyclicity(a) > ACYCLICITY_TOL:
        raise DivergenceError("cycle pruning failed to certify an acyclic graph")
    return CausalGraph(adjacency=a, node_labels=labels, kpi_index=kpi_index)


def _init_params(
    rng: np.random.Generator, n: int, rho: int, cfg: LearnerConfig
) -> dict[str, np.ndarray]:
    def dense(rows: int, cols: int) -> np.ndarray:
        return rng.normal(0.0, 1.0 / np.sqrt(rows), size=(rows, cols))

    lstm_b = np.zeros((1, 4 * n))
    lstm_b[0, n : 2 * n] = 1.0  # forget-gate bias opens the memory path
    return {
        "w_p": dense(rho, cfg.d_u),
        "b_p": np.zeros((n, cfg.d_u)),
        "lstm_wx": dense(n, 4 * n),
        "lstm_wh": dense(n, 4 * n),
        "lstm_b": lstm_b,
        # Zero projection: the recurrent summary feeds the embeddings only
        # once training grows this weight, so batch-to-batch sampling noise
        # does not whipsaw the fused graph before the data demands it.
        "proj_w": np.zeros((n, cfg.d_h)),
        "proj_b": rng.normal(0.0, 0.1, size=(n, cfg.d_h)),
        "gcn_inv_w1": dense(cfg.d_u + cfg.d_h, cfg.d_z),
        "gcn_inv_w2": dense(cfg.d_z, cfg.d_z),
        "gcn_dep_w1": dense(cfg.d_h, cfg.d_z),
        "gcn_dep_w2": dense(cfg.d_z, cfg.d_z),
        "d_hat": dense(cfg.lag * n, n) * 0.1,
        "d_check": dense(cfg.lag * n, n) * 0.1,
    }


def _forward(
    tape: ad.Tape,
    leaves: dict[str, ad.Node],
    state: LearnerState,
    batch_values: np.ndarray,
    norm_adj: np.ndarray,
    mask: np.ndarray,
) -> dict[str, ad.Node]:
    """Encode, decode, and fuse one batch; returns all named nodes."""
    cfg = state.config
    prev_t = tape.leaf(state.prev_state_data.T)
    u_p = ad.add(ad.matmul(prev_t, leaves["w_p"]), leaves["b_p"])

    xs = tape.leaf(batch_values)
    h0 = tape.leaf(state.hidden)
    c0 = tape.leaf(state.cell)
    h_last, c_last = ad.lstm_last(
        xs, h0, c0, leaves["lstm_wx"], leaves["lstm_wh"], leaves["lstm_b"]
    )
    h_col = ad.transpose(h_last)
    h_nodes = ad.add(
        ad.elementwise_mul(ad.tile_cols(h_col, cfg.d_h), leaves["proj_w"]),
        leaves["proj_b"],
    )

    nrm = tape.leaf(norm_adj)
    z_hat = _gcn(nrm, ad.concat_cols(u_p, h_nodes), leaves["gcn_inv_w1"], leaves["gcn_inv_w2"])
    z_check = _gcn(nrm, h_nodes, leaves["gcn_dep_w1"], leaves["gcn_dep_w2"])

    mask_node = tape.leaf(mask)
    a_hat = _decode(z_hat, mask_node)
    a_check = _decode(z_check, mask_node)
    a_fused = _fuse(a_hat, a_check)
    return {
        "z_hat": z_hat,
        "z_check": z_check,
        "h_nodes": h_nodes,
        "h_last": h_last,
        "c_last": c_last,
        "a_hat": a_hat,
        "a_check": a_check,
        "a_fused": a_fused,
    }


def _svar_residual(
    cur: ad.Node, lag: ad.Node, a: ad.Node, d: ad.Node, scale: float = 1.0
) -> ad.Node:
    """Squared prediction error of x_t = x_t A + x_lag D, per row and unit scale.

    Dividing by rows times the data variance keeps the term comparable
    across batch sizes and raw measurement units, so the sparsity and
    acyclicity weights do not need retuning per dataset.
    """
    predicted = ad.add(ad.matmul(cur, a), ad.matmul(lag, d))
    err = ad.frobenius_sq(ad.subtract(cur, predicted))
    return ad.scalar_scale(err, 1.0 / (cur.value.shape[0] * scale))


def data_scale(values: np.ndarray) -> float:
    """Mean per-channel variance, floored so division stays safe.

    One global scalar, not per-channel scaling: relative channel magnitudes
    carry orientation information in an equal-noise structural model and
    must survive normalization.
    """
    return max(float(np.mean(np.var(values, axis=0))), 1e-12)


def _loss(
    tape: ad.Tape,
    leaves: dict[str, ad.Node],
    nodes: dict[str, ad.Node],
    state: LearnerState,
    prev_cur: np.ndarray,
    prev_lag: np.ndarray,
    batch_cur: np.ndarray,
    batch_lag: np.ndarray,
) -> ad.Node:
    cfg = state.config
    n = state.n_nodes
    ap = state.prev_graph.adjacency
    prev = tape.leaf(ap)
    inverted = tape.leaf((1.0 - ap) * _offdiag_mask(n))

    # Reconstruction is averaged per entry so its pull is comparable to the
    # per-row predictive errors; summing n^2 entries would let the anchor
    # overpower the data and pin every batch to the previous graph.
    recon = ad.frobenius_sq(ad.subtract(nodes["a_hat"], prev))
    recon = ad.add(recon, ad.frobenius_sq(ad.subtract(nodes["a_check"], inverted)))
    loss = ad.scalar_scale(recon, 1.0 / (n * n))

    pc, pl = tape.leaf(prev_cur), tape.leaf(prev_lag)
    bc, bl = tape.leaf(batch_cur), tape.leaf(batch_lag)
    scale = state.svar_scale
    loss = ad.add(loss, _svar_residual(pc, pl, nodes["a_hat"], leaves["d_hat"], scale))
    loss = ad.add(loss, _svar_residual(bc, bl, nodes["a_hat"], leaves["d_hat"], scale))
    loss = ad.add(loss, _svar_residual(bc, bl, nodes["a_check"], leaves["d_check"], scale))

    if cfg.lambda1 > 0:
        sparsity = ad.add(ad.l1_sum(nodes["a_hat"]), ad.l1_sum(nodes["a_check"]))
        loss = ad.add(loss, ad.scalar_scale(sparsity, cfg.lambda1))
    if cfg.lambda2 > 0:
        loss = ad.add(loss, ad.scalar_scale(ad.expm_trace(nodes["a_fused"]), cfg.lambda2))
    return loss


def encode(state: LearnerState, batch: Batch) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One inference pass; advances the recurrent state as a side effect."""
    values = np.asarray(batch.values, dtype=np.float64)
    if values.shape[1] != state.n_nodes:
        raise ConfigError(
            f"batch width {values.shape[1]} does not match {state.n_nodes} nodes"
        )
    tape = ad.Tape()
    leaves = ad.leaf_dict(tape, state.params, trainable=())
    nodes = _forward(
        tape,
        leaves,
        state,
        values,
        _normalized_adjacency(state.prev_graph.adjacency),
        _offdiag_mask(state.n_nodes),
    )
    state.hidden = nodes["h_last"].value.copy()
    state.cell = nodes["c_last"].value.copy()
    return nodes["z_hat"].value, nodes["z_check"].value, nodes["h_nodes"].value


def train_batch(
    state: LearnerState, batch: Batch, lr: float | None = None
) -> tuple[CausalGraph, BatchArtifacts]:
    """Optimize on one batch and emit the fused graph.

    The returned graph carries the raw fused weights and replaces
    ``state.prev_graph``, so the next batch is anchored to a smoothly
    varying target; run ``release_graph`` on it to obtain the thresholded
    DAG for localization. Every epoch rebuilds the tape from the same
    recurrent state; the state advances exactly once, after training, so
    truncated backpropagation stops at batch boundaries. A non-finite loss
    raises DivergenceError with the state partially updated (snapshot
    before calling to retry, optionally with a reduced ``lr``).
    """
    cfg = state.config
    values = np.asarray(batch.values, dtype=np.float64)
    if values.shape[1] != state.n_nodes:
        raise ConfigError(
            f"batch width {values.shape[1]} does not match {state.n_nodes} nodes"
        )
    if values.shape[0] <= cfg.lag:
        raise ConfigError(
            f"batch needs more than lag={cfg.lag} rows, got {values.shape[0]}"
        )
    norm_adj = _normalized_adjacency(state.prev_graph.adjacency)
    mask = _offdiag_mask(state.n_nodes)
    prev_cur, prev_lag = lag_embed(state.prev_state_data, cfg.lag)
    batch_cur, batch_lag = lag_embed(values, cfg.lag)

    # The optimizer lives on the state: batches continue one long
    # optimization instead of re-fitting from fresh moments, and the step
    # size decays geometrically so successive fused graphs settle once the
    # post-fault data is stationary. An lr override (the divergence retry
    # path) starts the optimizer over at that rate.
    state.batches_trained += 1
    if lr is not None or state.optimizer is None:
        state.optimizer = ad.Adam(lr=cfg.lr if lr is None else lr)
    optimizer = state.optimizer
    if lr is None:
        # Within an episode the problem shrinks batch over batch (the anchor
        # already encodes most of the answer), so cool the step size
        # geometrically to keep late batches from chasing sampling noise.
        optimizer.lr = cfg.lr * 0.7 ** (state.batches_trained - 1)
    trace: list[float] = []
    for _ in range(cfg.epochs):
        tape = ad.Tape()
        leaves = ad.leaf_dict(tape, state.params)
        nodes = _forward(tape, leaves, state, values, norm_adj, mask)
        loss = _loss(tape, leaves, nodes, state, prev_cur, prev_lag, batch_cur, batch_lag)
        value = loss.item()
        if not np.isfinite(value):
            raise DivergenceError(f"non-finite loss {value!r} at epoch {len(trace)}")
        trace.append(value)
        ad.backward(tape, loss)
        optimizer.step(state.params, ad.collect_grads(leaves))

    # One clean pass with the final parameters yields the artifacts and the
    # recurrent state for the next batch.
    tape = ad.Tape()
    leaves = ad.leaf_dict(tape, state.params, trainable=())
    nodes = _forward(tape, leaves, state, values, norm_adj, mask)
    artifacts = BatchArtifacts(
        z_hat=nodes["z_hat"].value,
        z_check=nodes["z_check"].value,
        a_hat=nodes["a_hat"].value,
        a_check=nodes["a_check"].value,
        a_fused=nodes["a_fused"].value,
        loss_trace=tuple(trace),
    )
    fused = CausalGraph(
        adjacency=artifacts.a_fused,
        node_labels=state.prev_graph.node_labels,
        kpi_index=state.prev_graph.kpi_index,
    )
    state.hidden = nodes["h_last"].value.copy()
    state.cell = nodes["c_last"].value.copy()
    state.prev_state_data = np.vstack([state.prev_state_data, values])[-state.rho :]
    state.prev_graph = fused
    if state.baseline_mean is not None:
        # Running per-episode mean (batch.index restarts at 1 per fault):
        # single-batch estimates swap near-tied channels and churn the
        # ranked list; the mean tightens as the episode accumulates.
        fresh = np.abs(values.mean(axis=0) - state.baseline_mean) / state.baseline_std
        if batch.index <= 1 or state.excitation is None:
            state.excitation = fresh
        else:
            k = batch.index
            state.excitation = state.excitation * ((k - 1) / k) + fresh / k
    return fused, artifacts


def localization_graph(state: LearnerState, fused: CausalGraph) -> CausalGraph:
    """Certified-acyclic graph for the random walk.

    The walk runs on the structure prior's edge set with weights lifted to
    the fused batch graph wherever the latter is higher, then scaled by how
    far each edge's source channel has moved off the bootstrap baseline.
    Orientation comes from the prior, where it is identifiable from
    pre-fault data; the scaling steers the walk along the paths the fault
    actually excites (the walk normalizes per node, so only the relative
    shares among a node's parents matter). Fused edges outside the prior's
    support are dropped: their orientation is an artifact of the
    antisymmetric fusion, and admitting them creates cycles whose pruning
    can evict weak true edges.
    """
    weights = fused.adjacency
    prior = state.structure_prior
    tau = state.config.tau_edge
    if prior is not None:
        # No re-threshold: the prior deliberately holds candidate edges
        # below tau_edge, including both directions of unresolved pairs.
        # Cycle pruning at the end of this function settles orientation on
        # the gated weights, where fault-period evidence can break ties.
        weights = np.where(prior > 0, np.maximum(weights, prior), 0.0)
        # The KPI is the outcome by definition; an edge out of it is an
        # estimation artifact, and left in place it can beat the real
        # reverse edge during cycle pruning and strand the walk's start.
        weights[fused.kpi_index, :] = 0.0
        tau = 0.0
        if state.excitation is not None and state.excitation.max() > 0.0:
            # Bystander channels must lose their edges outright, not just
            # get down-weighted: the walk renormalizes each node's parent
            # shares, so a quiet parent that is a node's only parent would
            # still receive that node's full mass and, being parentless
            # itself, trap it under the dangling-row rule. Severing quiet
            # sources turns the deepest excited node into the trap, which
            # is the ranking the excitation supports. The fault cone sits
            # far above the sampling-noise band in practice, so the cut
            # has a wide margin on both sides.
            gate = state.excitation / state.excitation.max()
            kpi_column = weights[:, fused.kpi_index].copy()
            weights = weights * np.where(gate >= EXCITATION_CUT, gate, 0.0)[:, None]
            if weights[:, fused.kpi_index].max() == 0.0 and kpi_column.max() > 0.0:
                # Never isolate the KPI: with no in-edge the walk cannot
                # leave it and every entity scores zero.
                best = int(np.argmax(kpi_column))
                weights[best, fused.kpi_index] = kpi_column[best]
    return release_graph(
        weights,
        fused.node_labels,
        fused.kpi_index,
        tau,
    )


def _fit_structure(
    cur: np.ndarray,
    lag: np.ndarray,
    scale: float,
    mask: np.ndarray,
    rng: np.random.Generator,
    cfg: LearnerConfig,
) -> np.ndarray:
    """One sigmoid-parameterized structural-VAR fit under an edge mask."""
    n = mask.shape[0]
    # Start sparse (sigmoid around 0.12): the acyclicity penalty is then
    # inactive at the outset and edges grow only where the data pays for
    # them, instead of a dense start being crushed wholesale and weak true
    # edges dying in sigmoid saturation.
    free = {
        "s": -2.0 + rng.normal(0.0, 0.1, size=(n, n)),
        "d0": rng.normal(0.0, 0.1, size=(cfg.lag * n, n)),
    }
    optimizer = ad.Adam(lr=cfg.bootstrap_lr)
    for _ in range(cfg.bootstrap_epochs):
        tape = ad.Tape()
        leaves = ad.leaf_dict(tape, free)
        a_hat = ad.elementwise_mul(ad.sigmoid(leaves["s"]), tape.leaf(mask))
        loss = _svar_residual(tape.leaf(cur), tape.leaf(lag), a_hat, leaves["d0"], scale)
        if cfg.lambda1 > 0:
            loss = ad.add(loss, ad.scalar_scale(ad.l1_sum(a_hat), cfg.lambda1))
        if cfg.lambda2 > 0:
            loss = ad.add(loss, ad.scalar_scale(ad.expm_trace(a_hat), cfg.lambda2))
        value = loss.item()
        if not np.isfinite(value):
            raise DivergenceError(f"non-finite bootstrap loss {value!r}")
        ad.backward(tape, loss)
        optimizer.step(free, ad.collect_grads(leaves))
    return _sigmoid_array(free["s"]) * mask


def bootstrap_initial(
    history: MetricFrame | np.ndarray,
    labels: tuple[str, ...] | None = None,
    kpi_index: int | None = None,
    config: LearnerConfig | None = None,
) -> tuple[CausalGraph, LearnerState]:
    """Fit the initial graph on pre-trigger history and seed the learner.

    The initial structure is a free sigmoid-squashed matrix trained on the
    structural-VAR objective with the same sparsity and acyclicity
    penalties, then thresholded and pruned like any released graph. When a
    node pair carries weight in both directions after the first fit, the
    pair is committed to its stronger direction and the fit is repeated
    under that mask: an ambiguous pair otherwise splits one dependency's
    weight across two mutually exclusive edges, and both halves can land
    under the release threshold even when the dependency itself is strong.
    """
    cfg = config or LearnerConfig()
    if isinstance(history, MetricFrame):
        values = history.values
        labels = history.entity_names if labels is None else labels
        kpi_index = history.kpi_index if kpi_index is None else kpi_index
    else:
        values = np.asarray(history, dtype=np.float64)
        if labels is None or kpi_index is None:
            raise ConfigError("labels and kpi_index are required with a bare array")
    rows, n = values.shape
    if rows < 2 * cfg.lag + 2:
        raise ConfigError(
            f"bootstrap needs at least {2 * cfg.lag + 2} rows, got {rows}"
        )
    rho = min(rows, cfg.rho_max)
    data = np.array(values[-rho:], dtype=np.float64)
    mask = _offdiag_mask(n)
    cur, lag = lag_embed(data, cfg.lag)
    scale = data_scale(data)

    rng = np.random.default_rng(cfg.seed)
    weights = _fit_structure(cur, lag, scale, mask, rng, cfg)
    contested = (weights > 0.05) & (weights.T > 0.05)
    if contested.any():
        stronger = (weights > weights.T) | (
            (weights == weights.T) & (np.arange(n)[:, None] < np.arange(n)[None, :])
        )
        resolved = _fit_structure(
            cur, lag, scale, np.where(contested & ~stronger, 0.0, mask), rng, cfg
        )
    else:
        resolved = weights
    graph = release_graph(resolved, tuple(labels), int(kpi_index), cfg.tau_edge)
    # The walk prior keeps weaker candidate edges than the released graph
    # (localization dies on a missing edge but tolerates a spurious one)
    # and stays unpruned: when both directions of a pair survive, which one
    # is real is decided at walk time, once fault-period excitation can
    # weigh in. Pruning here would commit to raw-weight near-ties.
    prior = np.array(weights)
    prior[prior < cfg.tau_edge / 2] = 0.0
    np.fill_diagonal(prior, 0.0)
    if prior[:, kpi_index].max() == 0.0:
        # A walk that cannot leave the KPI ranks nothing. If thresholding
        # emptied the KPI's in-edges, keep the strongest raw candidate.
        best = int(np.argmax(weights[:, kpi_index]))
        prior[best, kpi_index] = weights[best, kpi_index]
    state = LearnerState(
        config=cfg,
        params=_init_params(rng, n, rho, cfg),
        hidden=np.zeros((1, n)),
        cell=np.zeros((1, n)),
        prev_graph=graph,
        prev_state_data=data,
        rho=rho,
        svar_scale=scale,
        structure_prior=prior,
        baseline_mean=data.mean(axis=0),
        baseline_std=np.maximum(data.std(axis=0), 1e-12),
    )
    return graph, state


def _sigmoid_array(v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out
