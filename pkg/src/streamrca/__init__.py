"""Online root-cause analysis for multivariate metric streams.

The package watches a KPI plus entity metrics, detects system-state changes
with a subspace/CUSUM trigger, incrementally learns a directed causal graph
over the entities while the change unfolds, and localizes likely root causes
by random walk with restarts from the KPI node.
"""

from __future__ import annotations

from .data import Batch, CausalGraph, MetricFrame, load_csv, load_graph, save_graph
from .errors import ConfigError, DataError, DivergenceError, StreamRCAError
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = [
    "Batch",
    "CausalGraph",
    "MetricFrame",
    "load_csv",
    "load_graph",
    "save_graph",
    "ConfigError",
    "DataError",
    "DivergenceError",
    "StreamRCAError",
    "BACKEND",
    "__version__",
]
