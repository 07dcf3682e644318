"""Retrieval metrics for ranked root-cause predictions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .localize import RankedCauses


@dataclass(frozen=True)
class FaultCase:
    """One fault episode: when it fired, what was truly at fault, what we said."""

    trigger_time: int
    root_causes: frozenset[str]
    predicted: tuple[str, ...] | RankedCauses

    def __post_init__(self) -> None:
        object.__setattr__(self, "root_causes", frozenset(self.root_causes))
        predicted = (
            self.predicted.labels
            if isinstance(self.predicted, RankedCauses)
            else tuple(self.predicted)
        )
        object.__setattr__(self, "predicted", predicted)
        if not self.root_causes:
            raise ValueError("a fault case needs at least one true root cause")
        if len(set(predicted)) != len(predicted):
            raise ValueError(f"predicted ids must be unique: {predicted}")

    def hits_at(self, k: int) -> int:
        return sum(1 for node in self.predicted[:k] if node in self.root_causes)

    def first_hit_rank(self) -> int | None:
        for rank, node in enumerate(self.predicted, start=1):
            if node in self.root_causes:
                return rank
        return None


def _check_cases(cases: Sequence[FaultCase]) -> None:
    if not cases:
        raise ValueError("metrics need at least one fault case")


def pr_at_k(cases: Sequence[FaultCase], k: int) -> float:
    """Mean fraction of true causes retrieved in the top k.

    Per case the denominator is min(k, number of true causes), so a perfect
    short list is not punished for k exceeding it.
    """
    _check_cases(cases)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    total = 0.0
    for case in cases:
        total += case.hits_at(k) / min(k, len(case.root_causes))
    return total / len(cases)


def map_at_k(cases: Sequence[FaultCase], k: int) -> float:
    """Mean over cases of the average of PR@j for j = 1..k."""
    _check_cases(cases)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    total = 0.0
    for case in cases:
        per_case = sum(
            case.hits_at(j) / min(j, len(case.root_causes)) for j in range(1, k + 1)
        )
        total += per_case / k
    return total / len(cases)


def mrr(cases: Sequence[FaultCase]) -> float:
    """Mean reciprocal rank of the first correct prediction; misses count 0."""
    _check_cases(cases)
    total = 0.0
    for case in cases:
        rank = case.first_hit_rank()
        if rank is not None:
            total += 1.0 / rank
    return total / len(cases)


def ranking_percentile(case: FaultCase, n_total: int) -> float:
    """(1 - rank/N) * 100 for the first correct prediction, 0 on a miss."""
    if n_total < 1:
        raise ValueError(f"n_total must be >= 1, got {n_total}")
    rank = case.first_hit_rank()
    if rank is None:
        return 0.0
    if rank > n_total:
        raise ValueError(f"rank {rank} exceeds n_total {n_total}")
    return (1.0 - rank / n_total) * 100.0


def summarize(cases: Sequence[FaultCase], ks: Iterable[int], n_total: int) -> dict:
    """All metrics in one JSON-friendly dict, keyed like PR@3 / MAP@3 / MRR / RP."""
    _check_cases(cases)
    out: dict[str, float] = {}
    for k in ks:
        out[f"PR@{k}"] = pr_at_k(cases, k)
        out[f"MAP@{k}"] = map_at_k(cases, k)
    out["MRR"] = mrr(cases)
    out["RP"] = sum(ranking_percentile(c, n_total) for c in cases) / len(cases)
    return out
