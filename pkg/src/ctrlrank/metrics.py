"""Ranking-quality and controllability metrics.

Graded NDCG treats control scores as relevance grades; hit rate is binary
on the ground-truth position. Control precision at K is the fraction of
the top K whose relevance meets the threshold, and control depth is the
rank of the first such item (list length + 1 when none qualifies).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

GAINS = ("exponential", "linear")


@dataclass(frozen=True)
class RankedList:
    """Relevance grades in ranked order (position 1 = top) plus the
    ground-truth rank when the ground truth is present."""

    relevance: tuple[float, ...]
    gt_position: int | None = None

    def __post_init__(self):
        if len(self.relevance) < 1:
            raise ValueError("a ranked list needs at least one item")
        if self.gt_position is not None and not 1 <= self.gt_position <= len(self.relevance):
            raise ValueError("gt_position out of range")

    @property
    def length(self) -> int:
        return len(self.relevance)


def _gain(rel: float, gain: str) -> float:
    if gain == "exponential":
        return 2.0 ** rel - 1.0
    if gain == "linear":
        return float(rel)
    raise ValueError(f"gain must be one of {GAINS}")


def ndcg_at_k(ranked: RankedList, k: int, gain: str = "exponential") -> float:
    """Normalized DCG over the top k, ideal ordering taken from the same
    list's relevance sorted descending; 0.0 when the ideal DCG is zero."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if any(r < 0 for r in ranked.relevance):
        raise ValueError("relevance grades must be non-negative")
    depth = min(k, ranked.length)
    dcg = sum(
        _gain(ranked.relevance[p], gain) / math.log2(p + 2) for p in range(depth)
    )
    ideal = sorted(ranked.relevance, reverse=True)
    idcg = sum(_gain(ideal[p], gain) / math.log2(p + 2) for p in range(depth))
    if idcg == 0.0:
        return 0.0
    return dcg / idcg


def hit_rate_at_k(ranked: RankedList, k: int) -> int:
    """1 when the ground truth sits within the top k, else 0."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return int(ranked.gt_position is not None and ranked.gt_position <= k)


def control_precision(ranked: RankedList, k: int, t: float) -> float:
    """Fraction of the top k whose relevance is at least t (inclusive)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > ranked.length:
        raise ValueError(f"k={k} exceeds list length {ranked.length}")
    return sum(1 for p in range(k) if ranked.relevance[p] >= t) / k


def control_depth(ranked: RankedList, t: float) -> int:
    """1-based rank of the first item with relevance >= t, or length + 1."""
    for p, rel in enumerate(ranked.relevance, 1):
        if rel >= t:
            return p
    return ranked.length + 1


@dataclass(frozen=True)
class EvalReport:
    """Per-run metric means over a consistent instance set."""

    scheme: str
    n_instances: int
    gt_present_rate: float
    n_skipped_empty_pairs: int
    ndcg_at_2: float
    ndcg_at_5: float
    hr_at_3: float
    cp_at_3: float
    cd: float
    threshold: float
    seed: int
    config_hash: str

    def to_document(self) -> dict:
        """Flat report document (fixed key set)."""
        return {
            "scheme": self.scheme,
            "n_instances": self.n_instances,
            "gt_present_rate": self.gt_present_rate,
            "ndcg_at_2": self.ndcg_at_2,
            "ndcg_at_5": self.ndcg_at_5,
            "hr_at_3": self.hr_at_3,
            "cp_at_3": self.cp_at_3,
            "cd": self.cd,
            "threshold": self.threshold,
            "seed": self.seed,
            "config_hash": self.config_hash,
        }


def evaluate_run(
    ranked_lists: list[RankedList],
    scheme_name: str,
    n_tokens: int,
    threshold: float | None = None,
    gain: str = "exponential",
    seed: int = 0,
    config_hash: str = "",
) -> EvalReport:
    """Arithmetic per-instance means of N@2, N@5, H@3, CP@3 and CD.

    The control threshold defaults to the token count (the maximum
    relevance a non-ground-truth item can reach).
    """
    if not ranked_lists:
        raise ValueError("cannot evaluate an empty run")
    t = float(n_tokens) if threshold is None else float(threshold)
    n = len(ranked_lists)
    gt_present = sum(1 for r in ranked_lists if r.gt_position is not None)
    skipped = sum(1 for r in ranked_lists if len(set(r.relevance)) <= 1)
    return EvalReport(
        scheme=scheme_name,
        n_instances=n,
        gt_present_rate=gt_present / n,
        n_skipped_empty_pairs=skipped,
        ndcg_at_2=sum(ndcg_at_k(r, 2, gain) for r in ranked_lists) / n,
        ndcg_at_5=sum(ndcg_at_k(r, 5, gain) for r in ranked_lists) / n,
        hr_at_3=sum(hit_rate_at_k(r, 3) for r in ranked_lists) / n,
        cp_at_3=sum(control_precision(r, 3, t) for r in ranked_lists) / n,
        cd=sum(control_depth(r, t) for r in ranked_lists) / n,
        threshold=t,
        seed=seed,
        config_hash=config_hash,
    )
