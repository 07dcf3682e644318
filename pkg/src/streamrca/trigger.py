"""System-state change detection on metric streams.

A base window of T0 rows defines the normal operating subspace: each
channel's window is cut into non-overlapping length-L segments laid out as
Page-matrix columns, the per-channel Page matrices are stacked vertically,
and the top singular directions of that stack span the pre-change geometry.
At detection time every stride-1 window is flattened channel-major and
scored by how much energy falls outside that subspace; a one-sided CUSUM
over the shifted scores fires the trigger.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .data import MetricFrame, channel_stats
from .errors import ConfigError, DataError

DEFAULT_WINDOW = 10
DEFAULT_ENERGY = 0.95
DEFAULT_C_QUANTILE = 0.95
DEFAULT_KAPPA = 5.0


def default_t0(l_win: int) -> int:
    return 20 * l_win


@dataclass
class SubspaceModel:
    """Fitted pre-change subspace plus CUSUM state.

    ``u0`` spans the retained directions, ``u_perp`` the discarded ones;
    together they form an orthonormal basis of R^{(M+1)·L}. ``y_stat`` is the
    only mutable field and is advanced by cusum_step.
    """

    u0: np.ndarray
    u_perp: np.ndarray
    l_win: int
    r: int
    c: float
    h_thresh: float
    t0: int
    mean: np.ndarray
    std: np.ndarray
    energy: float = DEFAULT_ENERGY
    c_quantile: float = DEFAULT_C_QUANTILE
    kappa: float = DEFAULT_KAPPA
    y_stat: float = field(default=0.0)

    @property
    def n_channels(self) -> int:
        return self.mean.shape[0]

    def vectorize(self, window: np.ndarray) -> np.ndarray:
        """Normalize a (channels, L) window and flatten it channel-major."""
        window = np.asarray(window, dtype=np.float64)
        if window.shape != (self.n_channels, self.l_win):
            raise ConfigError(
                f"window must be {(self.n_channels, self.l_win)}, got {window.shape}"
            )
        normalized = (window - self.mean[:, None]) / self.std[:, None]
        return normalized.reshape(-1)


def _page_stack(values: np.ndarray, l_win: int) -> np.ndarray:
    """Stack per-channel Page matrices of non-overlapping length-L segments."""
    t_len, n_ch = values.shape
    n_cols = t_len // l_win
    trimmed = values[: n_cols * l_win]
    # (channel, L, column) blocks stacked vertically, column j = segment j.
    blocks = [
        trimmed[:, m].reshape(n_cols, l_win).T for m in range(n_ch)
    ]
    return np.vstack(blocks)


def _sliding_vectors(values: np.ndarray, l_win: int) -> np.ndarray:
    """All stride-1 windows, flattened channel-major; row i ends at t=i+L-1."""
    windows = np.lib.stride_tricks.sliding_window_view(values, l_win, axis=0)
    # windows has shape (T-L+1, channels, L); flatten the last two axes.
    return windows.reshape(windows.shape[0], -1)


def fit_base(
    frame_or_values: MetricFrame | np.ndarray,
    l_win: int = DEFAULT_WINDOW,
    energy: float = DEFAULT_ENERGY,
    *,
    c_quantile: float = DEFAULT_C_QUANTILE,
    kappa: float = DEFAULT_KAPPA,
) -> SubspaceModel:
    """Fit the normal-state subspace on a base window and calibrate c and h.

    The shift constant c is the ``c_quantile`` quantile of in-sample residual
    energies over all stride-1 windows in the base segment, and the CUSUM
    threshold is ``kappa`` times c.
    """
    values = (
        frame_or_values.values
        if isinstance(frame_or_values, MetricFrame)
        else np.asarray(frame_or_values, dtype=np.float64)
    )
    t0 = values.shape[0]
    if l_win < 2:
        raise ConfigError(f"window length must be >= 2, got {l_win}")
    if not 0.0 < energy <= 1.0:
        raise ConfigError(f"energy fraction must be in (0, 1], got {energy}")
    if t0 < 2 * l_win:
        raise ConfigError(f"base period needs >= {2 * l_win} rows, got {t0}")

    mean, std = channel_stats(values, (0, t0))
    normalized = (values - mean) / std
    z = _page_stack(normalized, l_win)
    u, s, _ = np.linalg.svd(z, full_matrices=True)
    if s.size == 0 or s[0] < 1e-12:
        raise DataError("base window is degenerate: no signal energy in any channel")
    energies = s * s
    cum = np.cumsum(energies)
    rank = int(np.searchsorted(cum, energy * cum[-1] - 1e-15) + 1)
    rank = min(rank, u.shape[1] - 1)
    u0 = u[:, :rank]
    u_perp = u[:, rank:]

    vecs = _sliding_vectors(normalized, l_win)
    residuals = np.einsum("ij,ij->i", vecs @ u_perp, vecs @ u_perp)
    c = float(np.quantile(residuals, c_quantile))
    h = kappa * c
    if h <= 0.0:
        h = 1e-12
    return SubspaceModel(
        u0=u0,
        u_perp=u_perp,
        l_win=l_win,
        r=rank,
        c=c,
        h_thresh=h,
        t0=t0,
        mean=mean,
        std=std,
        energy=energy,
        c_quantile=c_quantile,
        kappa=kappa,
    )


def detection_score(model: SubspaceModel, window: np.ndarray) -> float:
    """Residual energy of one window outside the fitted subspace, minus c."""
    vec = model.vectorize(window)
    proj = model.u_perp.T @ vec
    return float(proj @ proj) - model.c


def score_rows(model: SubspaceModel, values: np.ndarray, start: int) -> np.ndarray:
    """Detection scores for every window ending at t in [start, T).

    ``values`` uses frame layout (rows are timestamps); windows straddle
    segment boundaries freely.
    """
    t_len = values.shape[0]
    if start < model.l_win - 1:
        raise ConfigError(f"first scored index must be >= {model.l_win - 1}")
    if start >= t_len:
        return np.empty(0)
    normalized = (values - model.mean) / model.std
    vecs = _sliding_vectors(normalized, model.l_win)
    rows = vecs[start - model.l_win + 1 :]
    proj = rows @ model.u_perp
    return np.einsum("ij,ij->i", proj, proj) - model.c


def cusum_step(model: SubspaceModel, score: float) -> tuple[float, bool]:
    """Advance the one-sided CUSUM by one score; returns (y_new, triggered)."""
    y_new = max(model.y_stat + score, 0.0)
    model.y_stat = y_new
    return y_new, y_new > model.h_thresh


def refresh(model: SubspaceModel, frame_or_values: MetricFrame | np.ndarray) -> SubspaceModel:
    """Refit on a fresh T0-row segment after a trigger; CUSUM restarts at 0."""
    values = (
        frame_or_values.values
        if isinstance(frame_or_values, MetricFrame)
        else np.asarray(frame_or_values, dtype=np.float64)
    )
    if values.shape[0] < model.t0:
        raise DataError(
            f"refresh needs {model.t0} rows, got {values.shape[0]}; keep buffering"
        )
    return fit_base(
        values[: model.t0],
        model.l_win,
        model.energy,
        c_quantile=model.c_quantile,
        kappa=model.kappa,
    )


@dataclass(frozen=True)
class TriggerEvent:
    t: int
    y: float


def run_detector(
    values: np.ndarray,
    l_win: int = DEFAULT_WINDOW,
    energy: float = DEFAULT_ENERGY,
    t0: int | None = None,
    *,
    c_quantile: float = DEFAULT_C_QUANTILE,
    kappa: float = DEFAULT_KAPPA,
    force_trigger: int | None = None,
) -> list[TriggerEvent]:
    """Detect-only loop over a full array: fit, scan, refresh after triggers.

    After each trigger at τ the detector refits on rows [τ, τ+T0) and resumes
    scoring at τ+T0; a trigger too close to the end of the data (no room to
    refresh) ends the scan. ``force_trigger`` injects a trigger at the given
    index regardless of scores.
    """
    t0 = default_t0(l_win) if t0 is None else t0
    t_len = values.shape[0]
    if t_len < t0:
        raise DataError(f"need at least T0={t0} rows, got {t_len}")
    events: list[TriggerEvent] = []
    seg_start = 0
    while True:
        model = fit_base(
            values[seg_start : seg_start + t0],
            l_win,
            energy,
            c_quantile=c_quantile,
            kappa=kappa,
        )
        live_start = seg_start + t0
        if live_start >= t_len:
            break
        scores = score_rows(model, values, live_start)
        y_path, first = kernels.cusum_scan(
            np.ascontiguousarray(scores), 0.0, model.h_thresh
        )
        if force_trigger is not None and live_start <= force_trigger < t_len:
            forced_local = force_trigger - live_start
            if first == -1 or forced_local < first:
                first = forced_local
                y_path = y_path.copy()
                y_path[forced_local] = model.h_thresh
            force_trigger = None
        if first == -1:
            break
        tau = live_start + first
        events.append(TriggerEvent(t=tau, y=float(y_path[first])))
        if tau + t0 > t_len:
            break
        seg_start = tau
    return events
