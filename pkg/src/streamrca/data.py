"""Core data containers and loaders for multivariate metric/KPI streams.

A stream is a time-indexed matrix with one column per monitored entity plus
exactly one KPI column. Loaders normalize, batch, and lag-embed that matrix;
the weighted directed graph container defined here is shared by the learning
and localization stages.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

# Relative tolerance on the sampling step before a stream is rejected as
# non-uniform (loaders accept mild jitter from collection agents).
STEP_TOLERANCE = 1e-6


def _frozen_array(values: np.ndarray) -> np.ndarray:
    # Copy so freezing never flips writeability on a caller's array.
    out = np.array(values, dtype=np.float64, order="C")
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class MetricFrame:
    """Immutable time-indexed matrix of entity metrics with one KPI channel.

    ``values`` has shape (T, M+1) where column ``kpi_index`` is the KPI and
    the remaining M columns are entity metrics. ``timestamps`` are epoch
    seconds, strictly increasing with a constant step.
    """

    timestamps: np.ndarray
    values: np.ndarray
    entity_names: tuple[str, ...]
    kpi_index: int

    def __post_init__(self) -> None:
        ts = _frozen_array(self.timestamps)
        vals = _frozen_array(self.values)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)
        if vals.ndim != 2:
            raise ValueError(f"values must be 2-D, got shape {vals.shape}")
        if ts.shape != (vals.shape[0],):
            raise ValueError(
                f"timestamps shape {ts.shape} does not match {vals.shape[0]} rows"
            )
        if len(self.entity_names) != vals.shape[1]:
            raise ValueError(
                f"{len(self.entity_names)} names for {vals.shape[1]} columns"
            )
        if not 0 <= self.kpi_index < vals.shape[1]:
            raise ValueError(f"kpi_index {self.kpi_index} out of range")
        if ts.size >= 2:
            steps = np.diff(ts)
            if np.any(steps <= 0):
                raise DataError("timestamps must be strictly increasing")
            step = steps[0]
            if np.any(np.abs(steps - step) > STEP_TOLERANCE * max(abs(step), 1.0)):
                raise DataError("timestamps do not advance with a constant step")
        if not np.all(np.isfinite(vals)):
            raise DataError("values contain NaN or Inf after cleaning")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]

    @property
    def n_entities(self) -> int:
        return self.values.shape[1] - 1

    def with_values(self, values: np.ndarray) -> "MetricFrame":
        return MetricFrame(self.timestamps, values, self.entity_names, self.kpi_index)


@dataclass(frozen=True)
class Batch:
    """One contiguous slice of a stream, ``index`` counts from 1."""

    values: np.ndarray
    index: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _frozen_array(self.values))
        if self.index < 1:
            raise ValueError(f"batch index must be >= 1, got {self.index}")


@dataclass(frozen=True)
class CausalGraph:
    """Weighted directed graph over M entities plus the KPI node.

    ``adjacency[i, j]`` is the weight of edge i -> j; weights are nonnegative
    and the diagonal is identically zero.
    """

    adjacency: np.ndarray
    node_labels: tuple[str, ...]
    kpi_index: int

    def __post_init__(self) -> None:
        adj = _frozen_array(self.adjacency)
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "node_labels", tuple(self.node_labels))
        n = len(self.node_labels)
        if adj.shape != (n, n):
            raise ValueError(f"adjacency shape {adj.shape} for {n} labels")
        if not 0 <= self.kpi_index < n:
            raise ValueError(f"kpi_index {self.kpi_index} out of range")
        if np.any(np.diagonal(adj) != 0.0):
            raise ValueError("adjacency diagonal must be identically zero")
        if np.any(adj < 0.0):
            raise ValueError("adjacency weights must be nonnegative")

    @property
    def n_nodes(self) -> int:
        return len(self.node_labels)

    def edge_count(self, threshold: float = 0.0) -> int:
        return int(np.count_nonzero(self.adjacency > threshold))

    def has_antisymmetric_support(self) -> bool:
        """True when no pair of opposing edges carries positive weight."""
        return not np.any((self.adjacency * self.adjacency.T) != 0.0)


def _parse_timestamp(raw: str, row: int) -> float:
    text = raw.strip()
    try:
        return float(text)
    except ValueError:
        pass
    try:
        dt = datetime.fromisoformat(text)
    except ValueError as exc:
        raise DataError(f"row {row}: cannot parse timestamp {raw!r}") from exc
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def load_csv(
    path: str | Path,
    kpi_column: str,
    *,
    forward_fill: bool = False,
) -> MetricFrame:
    """Load a metric stream from CSV.

    Expects a header ``timestamp,<entity...>,<kpi>`` with timestamps as
    ISO-8601 or epoch seconds. Rows are sorted by timestamp; duplicate
    timestamps are rejected. Missing cells fail the load unless
    ``forward_fill`` is set, in which case they repeat the previous row's
    value (a missing cell in the first row always fails).
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = list(reader)
    if not header or header[0].strip().lower() != "timestamp":
        raise DataError(f"{path}: first column must be 'timestamp'")
    names = [h.strip() for h in header[1:]]
    if kpi_column not in names:
        raise ConfigError(f"{path}: KPI column {kpi_column!r} not found in header")
    if len(names) < 2:
        raise ConfigError(f"{path}: need at least one metric column besides the KPI")
    if not rows:
        raise DataError(f"{path}: no data rows")

    n_cols = len(names)
    timestamps = np.empty(len(rows), dtype=np.float64)
    values = np.empty((len(rows), n_cols), dtype=np.float64)
    for r, row in enumerate(rows):
        if len(row) != n_cols + 1:
            raise DataError(f"{path}: row {r + 2} has {len(row)} fields, expected {n_cols + 1}")
        timestamps[r] = _parse_timestamp(row[0], r + 2)
        for c, cell in enumerate(row[1:]):
            text = cell.strip()
            if text == "":
                if forward_fill and r > 0:
                    values[r, c] = values[r - 1, c]
                    continue
                raise DataError(f"{path}: row {r + 2}, column {names[c]!r} is empty")
            try:
                values[r, c] = float(text)
            except ValueError:
                raise DataError(
                    f"{path}: row {r + 2}, column {names[c]!r}: non-numeric value {cell!r}"
                ) from None

    order = np.argsort(timestamps, kind="stable")
    timestamps = timestamps[order]
    values = values[order]
    if np.any(np.diff(timestamps) == 0):
        raise DataError(f"{path}: duplicate timestamps")
    return MetricFrame(timestamps, values, tuple(names), names.index(kpi_column))


def write_csv(frame: MetricFrame, path: str | Path) -> None:
    """Write a frame back to CSV; inverse of load_csv up to float formatting."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", *frame.entity_names])
        for ts, row in zip(frame.timestamps, frame.values):
            stamp = int(ts) if float(ts).is_integer() else repr(float(ts))
            writer.writerow([stamp, *(repr(float(v)) for v in row)])


def channel_stats(
    values: np.ndarray, window: tuple[int, int]
) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel mean and std over the half-open row range ``window``.

    Channels with std below 1e-12 get std 1.0 so normalization maps them
    to all-zeros instead of dividing by noise.
    """
    lo, hi = window
    if hi <= lo:
        raise ValueError(f"empty stats window [{lo}, {hi})")
    seg = values[lo:hi]
    mean = seg.mean(axis=0)
    std = seg.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    return mean, std


def zscore_normalize(frame: MetricFrame, stats_window: tuple[int, int]) -> MetricFrame:
    """Shift/scale every channel by its mean/std computed on ``stats_window``."""
    mean, std = channel_stats(frame.values, stats_window)
    lo, hi = stats_window
    seg_std = frame.values[lo:hi].std(axis=0)
    normalized = (frame.values - mean) / std
    # Constant-on-window channels are forced to zero everywhere.
    normalized[:, seg_std < 1e-12] = 0.0
    return frame.with_values(normalized)


def make_batches(frame: MetricFrame, start: int, b: int) -> list[Batch]:
    """Cut rows [start, T) into contiguous batches of length ``b``.

    A trailing remainder shorter than ``b`` is dropped rather than padded.
    """
    if b < 2:
        raise ValueError(f"batch length must be >= 2, got {b}")
    if start >= frame.n_rows:
        raise ValueError(f"start {start} beyond {frame.n_rows} rows")
    batches = []
    k = 1
    for lo in range(start, frame.n_rows - b + 1, b):
        batches.append(Batch(frame.values[lo : lo + b], k))
        k += 1
    return batches


def lag_embed(values: np.ndarray, q: int) -> tuple[np.ndarray, np.ndarray]:
    """Align rows with their q preceding rows.

    Returns ``(current, lagged)`` where ``current`` holds rows q..T-1 and
    row t of ``lagged`` concatenates rows t-1, ..., t-q (nearest lag first).
    """
    values = np.asarray(values, dtype=np.float64)
    t_len, n = values.shape
    if q < 1:
        raise ValueError(f"lag order must be >= 1, got {q}")
    if t_len <= q:
        raise ValueError(f"need more than q={q} rows, got {t_len}")
    current = values[q:]
    lagged = np.concatenate([values[q - j : t_len - j] for j in range(1, q + 1)], axis=1)
    return current, lagged


def graph_to_dot(graph: CausalGraph, threshold: float = 0.0) -> str:
    """Deterministic DOT text with edges above ``threshold`` only."""
    if threshold < 0:
        raise ValueError(f"threshold must be >= 0, got {threshold}")
    lines = ["digraph causes {"]
    for label in graph.node_labels:
        lines.append(f'  "{label}";')
    adj = graph.adjacency
    for i, src in enumerate(graph.node_labels):
        for j, dst in enumerate(graph.node_labels):
            w = adj[i, j]
            if w > threshold:
                lines.append(f'  "{src}" -> "{dst}" [label="{w:.4f}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def graph_to_json(graph: CausalGraph) -> dict:
    """JSON-ready dict: nodes, kpi_index, and (src, dst)-sorted weighted edges."""
    edges = []
    for i, src in enumerate(graph.node_labels):
        for j, dst in enumerate(graph.node_labels):
            w = float(graph.adjacency[i, j])
            if w > 0.0:
                edges.append({"src": src, "dst": dst, "weight": w})
    edges.sort(key=lambda e: (e["src"], e["dst"]))
    return {
        "nodes": list(graph.node_labels),
        "kpi_index": graph.kpi_index,
        "edges": edges,
    }


def graph_from_json(payload: dict) -> CausalGraph:
    """Inverse of graph_to_json."""
    labels = tuple(payload["nodes"])
    index = {label: i for i, label in enumerate(labels)}
    adj = np.zeros((len(labels), len(labels)))
    for edge in payload["edges"]:
        try:
            i, j = index[edge["src"]], index[edge["dst"]]
        except KeyError as exc:
            raise DataError(f"edge references unknown node {exc}") from None
        adj[i, j] = float(edge["weight"])
    return CausalGraph(adj, labels, int(payload["kpi_index"]))


def save_graph(graph: CausalGraph, path: str | Path) -> None:
    Path(path).write_text(json.dumps(graph_to_json(graph), indent=2) + "\n")


def load_graph(path: str | Path) -> CausalGraph:
    return graph_from_json(json.loads(Path(path).read_text()))
