"""The online loop: watch, trigger, learn per batch, localize, converge.

The stream is replayed sample by sample through a small state machine.
NORMAL feeds the CUSUM detector; a trigger opens a fault episode, lazily
bootstraps the learner on all pre-trigger history (first episode only),
and switches to LEARNING. Arriving samples fill fixed-size batches; each
completed batch trains the learner into a fused graph, whose thresholded
DAG release is handed to the localizer for ranking. From the second batch
on, consecutive (graph, list) pairs are scored for convergence. A converged (or capped, or aborted) episode waits until the
refresh segment is complete, refits the detector on it, and returns to
NORMAL. Every transition is appended to an in-memory event log with a
stable JSON schema.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import trigger as trig
from .convergence import ConvergenceConfig, combined, graph_similarity, list_similarity
from .data import Batch, CausalGraph, MetricFrame, graph_to_json
from .errors import ConfigError, DataError, DivergenceError
from .learner import (
    LearnerConfig,
    LearnerState,
    bootstrap_initial,
    localization_graph,
    train_batch,
)
from .localize import RankedCauses, localize

PHASE_NORMAL = "NORMAL"
PHASE_TRIGGERED = "TRIGGERED"
PHASE_LEARNING = "LEARNING"
PHASE_CONVERGED = "CONVERGED"


@dataclass(frozen=True)
class PipelineConfig:
    """All knobs for the online loop, grouped the way the modules own them."""

    window: int = trig.DEFAULT_WINDOW
    energy: float = trig.DEFAULT_ENERGY
    c_quantile: float = trig.DEFAULT_C_QUANTILE
    kappa: float = trig.DEFAULT_KAPPA
    t0: int | None = None
    batch_size: int = 20
    max_batches: int = 50
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    convergence: ConvergenceConfig = field(default_factory=ConvergenceConfig)
    phi_jump: float = 0.15
    restart: float = 0.3
    top_k: int = 5
    rwr_tol: float = 1e-10
    rwr_max_iter: int = 10_000

    def __post_init__(self) -> None:
        if self.window < 2:
            raise ConfigError(f"trigger.window must be >= 2, got {self.window}")
        if not 0.0 < self.energy <= 1.0:
            raise ConfigError(f"trigger.energy must be in (0, 1], got {self.energy}")
        if not 0.0 < self.c_quantile <= 1.0:
            raise ConfigError(
                f"trigger.c_quantile must be in (0, 1], got {self.c_quantile}"
            )
        if self.kappa <= 0:
            raise ConfigError(f"trigger.kappa must be positive, got {self.kappa}")
        if self.t0 is not None and self.t0 < 2 * self.window:
            raise ConfigError(
                f"trigger.t0 must be >= {2 * self.window}, got {self.t0}"
            )
        if self.batch_size <= self.learner.lag + 1:
            raise ConfigError(
                f"learner.batch_size must exceed lag + 1 = {self.learner.lag + 1}"
            )
        if self.max_batches < 1:
            raise ConfigError(f"pipeline.max_batches must be >= 1, got {self.max_batches}")
        if not 0.0 <= self.phi_jump <= 1.0:
            raise ConfigError(f"localize.phi_jump must be in [0, 1], got {self.phi_jump}")
        if not 0.0 < self.restart <= 1.0:
            raise ConfigError(f"localize.restart must be in (0, 1], got {self.restart}")
        if self.top_k < 1:
            raise ConfigError(f"localize.k must be >= 1, got {self.top_k}")

    @property
    def resolved_t0(self) -> int:
        return trig.default_t0(self.window) if self.t0 is None else self.t0


def _to_int(v: object) -> int:
    return int(v)  # type: ignore[arg-type]


def _to_float(v: object) -> float:
    return float(v)  # type: ignore[arg-type]


_CONFIG_KEYS: dict[str, tuple[str, str | None, object]] = {
    "trigger.window": ("window", None, _to_int),
    "trigger.energy": ("energy", None, _to_float),
    "trigger.c_quantile": ("c_quantile", None, _to_float),
    "trigger.kappa": ("kappa", None, _to_float),
    "trigger.t0": ("t0", None, _to_int),
    "learner.batch_size": ("batch_size", None, _to_int),
    "learner.d_u": ("d_u", "learner", _to_int),
    "learner.d_h": ("d_h", "learner", _to_int),
    "learner.d_z": ("d_z", "learner", _to_int),
    "learner.lag": ("lag", "learner", _to_int),
    "learner.epochs": ("epochs", "learner", _to_int),
    "learner.lr": ("lr", "learner", _to_float),
    "learner.lambda1": ("lambda1", "learner", _to_float),
    "learner.lambda2": ("lambda2", "learner", _to_float),
    "learner.rho_max": ("rho_max", "learner", _to_int),
    "learner.tau_edge": ("tau_edge", "learner", _to_float),
    "learner.bootstrap_epochs": ("bootstrap_epochs", "learner", _to_int),
    "learner.bootstrap_lr": ("bootstrap_lr", "learner", _to_float),
    "learner.seed": ("seed", "learner", _to_int),
    "converge.alpha": ("alpha", "convergence", _to_float),
    "converge.threshold": ("threshold", "convergence", _to_float),
    "converge.rbo_p": ("rbo_p", "convergence", _to_float),
    "localize.phi_jump": ("phi_jump", None, _to_float),
    "localize.restart": ("restart", None, _to_float),
    "localize.k": ("top_k", None, _to_int),
    "localize.tol": ("rwr_tol", None, _to_float),
    "localize.max_iter": ("rwr_max_iter", None, _to_int),
    "pipeline.max_batches": ("max_batches", None, _to_int),
}


def config_from_mapping(mapping: dict) -> PipelineConfig:
    """Build a validated PipelineConfig from flat `section.key` entries."""
    top: dict[str, object] = {}
    nested: dict[str, dict[str, object]] = {"learner": {}, "convergence": {}}
    for key, raw in mapping.items():
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        attr, owner, caster = _CONFIG_KEYS[key]
        try:
            value = caster(raw)  # type: ignore[operator]
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config key {key!r}: {exc}") from exc
        if owner is None:
            top[attr] = value
        else:
            nested[owner][attr] = value
    try:
        learner = LearnerConfig(**nested["learner"]) if nested["learner"] else LearnerConfig()
        conv = (
            ConvergenceConfig(**nested["convergence"])
            if nested["convergence"]
            else ConvergenceConfig()
        )
        return PipelineConfig(learner=learner, convergence=conv, **top)  # type: ignore[arg-type]
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return config_from_mapping(payload)


@dataclass
class Episode:
    """Outcome of one fault episode, trigger to refresh."""

    trigger_t: int
    batches: int = 0
    converged: bool = False
    aborted: bool = False
    causes: RankedCauses | None = None
    final_score: float | None = None

    def to_json(self) -> dict:
        return {
            "trigger": self.trigger_t,
            "batches": self.batches,
            "converged": self.converged,
            "aborted": self.aborted,
            "score": self.final_score,
            "causes": (
                None
                if self.causes is None
                else [
                    {"node": label, "score": score}
                    for label, score in self.causes.entries
                ]
            ),
        }


@dataclass
class RunResult:
    events: list[dict]
    trace: list[dict]
    episodes: list[Episode]
    final_graph: CausalGraph | None


def _event(t: int, phase: str, k: int, score: float | None, top) -> dict:
    return {
        "t": int(t),
        "phase": phase,
        "k": int(k),
        "score": None if score is None else float(score),
        "top": None if top is None else list(top),
    }


def run_online(
    frame: MetricFrame,
    config: PipelineConfig | None = None,
    outdir: str | Path | None = None,
) -> RunResult:
    """Replay a stream through the full detect/learn/localize/converge loop.

    When ``outdir`` is given, per-batch graph snapshots are written under
    ``<outdir>/episode_<i>/graph_k<k>.json``; the event log, convergence
    trace, and episode results are returned in memory for the caller to
    serialize.
    """
    config = config or PipelineConfig()
    t0 = config.resolved_t0
    n_rows = frame.n_rows
    if n_rows < t0 + config.window:
        raise DataError(
            f"stream has {n_rows} rows; need at least {t0 + config.window}"
        )
    outdir = Path(outdir) if outdir is not None else None

    # Raw units throughout: the detector normalizes internally against its
    # base window, and the learner needs unscaled channels because relative
    # magnitudes orient edges in an equal-noise structural model.
    values = frame.values
    labels = frame.entity_names
    kpi_index = frame.kpi_index

    model = trig.fit_base(
        values[:t0],
        config.window,
        config.energy,
        c_quantile=config.c_quantile,
        kappa=config.kappa,
    )
    events: list[dict] = [_event(0, PHASE_NORMAL, 0, None, None)]
    trace_rows: list[dict] = []
    episodes: list[Episode] = []
    state: LearnerState | None = None
    final_graph: CausalGraph | None = None

    phase = PHASE_NORMAL
    scores = trig.score_rows(model, values, t0)
    base_idx = t0
    episode: Episode | None = None
    tau = -1
    k = 0
    batch_start = -1
    buffered = 0
    prev_released: CausalGraph | None = None
    prev_causes: RankedCauses | None = None

    def snapshot_path(batch_index: int) -> Path | None:
        if outdir is None:
            return None
        directory = outdir / f"episode_{len(episodes) + 1}"
        directory.mkdir(parents=True, exist_ok=True)
        return directory / f"graph_k{batch_index}.json"

    def finish_episode(t: int) -> str:
        """Close the current episode and refresh now if the segment is ready."""
        episodes.append(episode)
        if t >= tau + t0 - 1:
            return do_refresh(t)
        return PHASE_CONVERGED

    def do_refresh(t: int) -> str:
        nonlocal model, scores, base_idx
        model = trig.refresh(model, values[tau : tau + t0])
        scores = trig.score_rows(model, values, t + 1)
        base_idx = t + 1
        events.append(_event(t, PHASE_NORMAL, 0, None, None))
        return PHASE_NORMAL

    t = t0
    while t < n_rows:
        if phase == PHASE_NORMAL:
            y_stat, fired = trig.cusum_step(model, float(scores[t - base_idx]))
            if fired:
                tau = t
                events.append(_event(t, PHASE_TRIGGERED, 0, y_stat, None))
                if state is None:
                    _, state = bootstrap_initial(
                        values[:tau], labels, kpi_index, config.learner
                    )
                episode = Episode(trigger_t=tau)
                k = 0
                buffered = 0
                prev_released = None
                prev_causes = None
                phase = PHASE_LEARNING
        elif phase == PHASE_LEARNING:
            if buffered == 0:
                batch_start = t
            buffered += 1
            if buffered == config.batch_size:
                buffered = 0
                k += 1
                batch = Batch(values[batch_start : batch_start + config.batch_size], k)
                snap = state.snapshot()
                try:
                    fused, _ = train_batch(state, batch)
                except DivergenceError:
                    state = snap
                    snap = state.snapshot()
                    try:
                        fused, _ = train_batch(
                            state, batch, lr=config.learner.lr / 2
                        )
                    except DivergenceError as exc:
                        print(
                            f"fault at t={tau}: learner diverged twice on batch "
                            f"{k} ({exc}); abandoning episode",
                            file=sys.stderr,
                        )
                        state = snap
                        episode.aborted = True
                        phase = finish_episode(t)
                        t += 1
                        continue
                released = localization_graph(state, fused)
                causes = localize(
                    released,
                    config.top_k,
                    phi_jump=config.phi_jump,
                    restart=config.restart,
                    tol=config.rwr_tol,
                    max_iter=config.rwr_max_iter,
                )
                path = snapshot_path(k)
                if path is not None:
                    path.write_text(json.dumps(graph_to_json(fused), indent=2) + "\n")
                score: float | None = None
                converged = False
                if k >= 2:
                    # Stability is judged on the operative pair: the certified
                    # graph the walk actually ran on, and the list it produced.
                    # The raw fused matrix keeps absorbing sampling noise even
                    # once the answer has settled, so it is the anchor, not the
                    # convergence witness.
                    sg = graph_similarity(prev_released, released)
                    sl = list_similarity(
                        prev_causes, causes, config.convergence.rbo_p
                    )
                    score, converged = combined(sg, sl, config.convergence)
                    trace_rows.append(
                        {
                            "k": k,
                            "sg": float(sg),
                            "sl": float(sl),
                            "score": float(score),
                            "converged": converged,
                        }
                    )
                events.append(_event(t, PHASE_LEARNING, k, score, causes.labels))
                prev_released = released
                prev_causes = causes
                final_graph = released
                episode.batches = k
                episode.causes = causes
                episode.final_score = score
                if converged or k >= config.max_batches:
                    episode.converged = converged
                    events.append(_event(t, PHASE_CONVERGED, k, score, causes.labels))
                    phase = finish_episode(t)
        elif phase == PHASE_CONVERGED:
            if t >= tau + t0 - 1:
                phase = do_refresh(t)
        t += 1

    if phase == PHASE_LEARNING and episode is not None:
        # Stream ended mid-episode: record what we have, unconverged.
        episodes.append(episode)
    return RunResult(
        events=events,
        trace=trace_rows,
        episodes=episodes,
        final_graph=final_graph,
    )


def write_run_outputs(result: RunResult, outdir: str | Path) -> None:
    """Serialize events, trace, episode results, and the final graph."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    with (outdir / "events.jsonl").open("w") as fh:
        for event in result.events:
            fh.write(json.dumps(event) + "\n")
    with (outdir / "trace.jsonl").open("w") as fh:
        for row in result.trace:
            fh.write(json.dumps(row) + "\n")
    payload = {"episodes": [ep.to_json() for ep in result.episodes]}
    (outdir / "results.json").write_text(json.dumps(payload, indent=2) + "\n")
    if result.final_graph is not None:
        (outdir / "final_graph.json").write_text(
            json.dumps(graph_to_json(result.final_graph), indent=2) + "\n"
        )
