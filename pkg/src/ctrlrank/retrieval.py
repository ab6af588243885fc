"""Candidate retrieval: a recency-weighted item-to-item transition model.

Fits first-order transition counts and item popularity from train-split
windows only, then scores next items as a recency-decayed sum of normalized
transition weights plus popularity smoothing. Top-K scoring produces the
candidate lists that the re-ranker consumes; instances pair those
candidates with sampled control tokens and the ground-truth position.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .control import ControlScheme, ControlToken, sample_tokens
from .corpus import AttributeBucketing, Item, SequenceWindow

AS_RETRIEVED = "as_retrieved"
INJECT_GT = "inject_gt"
GT_POLICIES = (AS_RETRIEVED, INJECT_GT)


@dataclass
class TransitionModel:
    """First-order transitions with popularity smoothing.

    transition_counts[src][dst] counts adjacent train pairs src -> dst;
    popularity counts train occurrences per item. ``alpha`` weights the
    popularity fallback and ``gamma`` decays older history positions.
    """

    transition_counts: dict[str, dict[str, int]]
    popularity: dict[str, int]
    alpha: float = 0.1
    gamma: float = 0.8

    _index: dict[str, int] = field(init=False, repr=False)
    _items: list[str] = field(init=False, repr=False)
    _pop: np.ndarray = field(init=False, repr=False)
    _base: np.ndarray = field(init=False, repr=False)
    _rows: dict[str, tuple[np.ndarray, np.ndarray]] = field(init=False, repr=False)

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must be in (0, 1]")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        self._items = sorted(self.popularity)
        self._index = {item: i for i, item in enumerate(self._items)}
        self._pop = np.array([self.popularity[i] for i in self._items], dtype=np.float64)
        total = self._pop.sum()
        pop_norm = self._pop / total if total > 0 else self._pop
        self._base = self.alpha * pop_norm
        self._rows = {}
        for src, row in self.transition_counts.items():
            dst = sorted(row)
            counts = np.array([row[d] for d in dst], dtype=np.float64)
            weights = counts / counts.sum()
            self._rows[src] = (
                np.array([self._index[d] for d in dst], dtype=np.intp),
                weights,
            )

    @property
    def catalogue(self) -> list[str]:
        """Items seen during fitting, in sorted id order."""
        return list(self._items)

    def _score_vector(self, history: tuple[str, ...] | list[str]) -> np.ndarray:
        scores = self._base.copy()
        length = len(history)
        for pos, item in enumerate(history):
            row = self._rows.get(item)
            if row is None:
                continue
            dst, weights = row
            scores[dst] += self.gamma ** (length - 1 - pos) * weights
        return scores

    def to_document(self) -> dict:
        return {
            "version": 1,
            "alpha": self.alpha,
            "gamma": self.gamma,
            "popularity": self.popularity,
            "transitions": self.transition_counts,
        }

    @classmethod
    def from_document(cls, doc: dict) -> "TransitionModel":
        if doc.get("version") != 1:
            raise ValueError(f"unsupported retriever document version: {doc.get('version')}")
        return cls(
            transition_counts={
                s: {d: int(c) for d, c in row.items()}
                for s, row in doc["transitions"].items()
            },
            popularity={i: int(c) for i, c in doc["popularity"].items()},
            alpha=float(doc["alpha"]),
            gamma=float(doc["gamma"]),
        )


def _user_segments(windows: list[SequenceWindow]) -> list[list[str]]:
    """Reconstruct contiguous item sequences from (possibly overlapping)
    windows so each timeline position is counted once.

    Consecutive windows of one user shift by a single position; a window
    whose history does not continue the running sequence starts a new
    segment rather than fabricating a cross-gap transition.
    """
    segments: list[list[str]] = []
    current_user = None
    seq: list[str] = []
    for window in windows:
        full = list(window.history) + [window.target]
        w = len(full)
        if (
            window.user_id == current_user
            and len(seq) >= w - 1
            and seq[-(w - 1):] == list(window.history)
        ):
            seq.append(window.target)
            continue
        if seq:
            segments.append(seq)
        current_user = window.user_id
        seq = full
    if seq:
        segments.append(seq)
    return segments


def fit_retriever(
    train_windows: list[SequenceWindow], alpha: float = 0.1, gamma: float = 0.8
) -> TransitionModel:
    """Count adjacent transitions and item occurrences over train windows."""
    if not train_windows:
        raise ValueError("cannot fit a retriever on zero windows")
    transitions: dict[str, dict[str, int]] = {}
    popularity: dict[str, int] = {}
    for seq in _user_segments(train_windows):
        for item in seq:
            popularity[item] = popularity.get(item, 0) + 1
        for src, dst in zip(seq, seq[1:]):
            row = transitions.setdefault(src, {})
            row[dst] = row.get(dst, 0) + 1
    return TransitionModel(
        transition_counts=transitions, popularity=popularity, alpha=alpha, gamma=gamma
    )


def score_next(model: TransitionModel, history: list[str] | tuple[str, ...], item: str) -> float:
    """Recency-decayed transition score plus popularity smoothing for one item.

    Unseen items and unseen transitions contribute zero.
    """
    idx = model._index.get(item)
    if idx is None:
        return 0.0
    return float(model._score_vector(tuple(history))[idx])


def retrieve_candidates(
    model: TransitionModel, window: SequenceWindow, k: int = 6
) -> tuple[list[str], list[float]]:
    """Top-k catalogue items by score, excluding the window history.

    Ties break by popularity (descending) then item id (ascending); the
    returned scores follow candidate order and are non-increasing.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    n = len(model._items)
    if n < k:
        raise ValueError(f"catalogue holds {n} items, cannot retrieve {k}")
    scores = model._score_vector(window.history)
    mask = [model._index[h] for h in window.history if h in model._index]
    eligible = n - len(set(mask))
    if eligible < k:
        raise ValueError(f"only {eligible} items outside the history, cannot retrieve {k}")
    scores[list(set(mask))] = -np.inf
    # lexsort: last key is primary -> score desc, popularity desc, id asc.
    order = np.lexsort((np.arange(n), -model._pop, -scores))[:k]
    return [model._items[i] for i in order], [float(scores[i]) for i in order]


@dataclass(frozen=True)
class RankingInstance:
    """One re-ranking problem: a window, its candidates, tokens and GT slot.

    gt_index is the 0-based position of the window target among the
    candidates, or None when the target was not retrieved and not injected.
    """

    window: SequenceWindow
    candidates: tuple[str, ...]
    retrieval_scores: tuple[float, ...]
    tokens: tuple[ControlToken, ...]
    gt_index: int | None

    def __post_init__(self):
        if len(set(self.candidates)) != len(self.candidates):
            raise ValueError("candidates must be distinct")
        if len(self.retrieval_scores) != len(self.candidates):
            raise ValueError("one retrieval score per candidate")
        if any(not np.isfinite(s) for s in self.retrieval_scores):
            raise ValueError("retrieval scores must be finite")
        if self.gt_index is not None and self.candidates[self.gt_index] != self.window.target:
            raise ValueError("gt_index does not point at the window target")

    def to_document(self) -> dict:
        return {
            "user_id": self.window.user_id,
            "history": list(self.window.history),
            "target": self.window.target,
            "split": self.window.split,
            "candidates": list(self.candidates),
            "retrieval_scores": list(self.retrieval_scores),
            "tokens": [{"attribute": t.attribute, "value": t.value} for t in self.tokens],
            "gt_index": self.gt_index,
        }

    @classmethod
    def from_document(cls, doc: dict) -> "RankingInstance":
        return cls(
            window=SequenceWindow(
                user_id=doc["user_id"],
                history=tuple(doc["history"]),
                target=doc["target"],
                split=doc["split"],
            ),
            candidates=tuple(doc["candidates"]),
            retrieval_scores=tuple(float(s) for s in doc["retrieval_scores"]),
            tokens=tuple(ControlToken(t["attribute"], t["value"]) for t in doc["tokens"]),
            gt_index=doc["gt_index"],
        )


def _build_one(
    ordinal: int,
    window: SequenceWindow,
    model: TransitionModel,
    scheme: ControlScheme,
    items: dict[str, Item],
    bucketing: dict[str, AttributeBucketing],
    k: int,
    gt_policy: str,
    seed: int,
    fixed_tokens: list[ControlToken] | None,
) -> RankingInstance:
    candidates, scores = retrieve_candidates(model, window, k=k)
    target = window.target
    if target in candidates:
        gt_index = candidates.index(target)
    elif gt_policy == INJECT_GT:
        candidates[-1] = target
        scores[-1] = score_next(model, window.history, target)
        gt_index = k - 1
    else:
        gt_index = None
    if fixed_tokens is not None:
        tokens = list(fixed_tokens)
    else:
        candidate_items = [items[c] for c in candidates]
        tokens = sample_tokens(candidate_items, scheme, bucketing, seed, ordinal=ordinal)
    return RankingInstance(
        window=window,
        candidates=tuple(candidates),
        retrieval_scores=tuple(scores),
        tokens=tuple(tokens),
        gt_index=gt_index,
    )


def build_instances(
    windows: list[SequenceWindow],
    model: TransitionModel,
    scheme: ControlScheme,
    items: dict[str, Item],
    bucketing: dict[str, AttributeBucketing],
    k: int = 6,
    gt_policy: str = AS_RETRIEVED,
    seed: int = 0,
    workers: int = 1,
    fixed_tokens: list[ControlToken] | None = None,
) -> list[RankingInstance]:
    """Retrieve candidates and sample tokens for every window.

    Under inject_gt the target replaces the lowest-scored candidate when it
    was not retrieved; under as_retrieved the ground-truth slot stays empty
    in that case. Token sampling is keyed on (seed, window ordinal), so a
    window's tokens do not depend on batching or worker count; output order
    equals input order. Fixed tokens bypass sampling entirely and must
    cover the scheme attributes in order.
    """
    if gt_policy not in GT_POLICIES:
        raise ValueError(f"gt_policy must be one of {GT_POLICIES}")
    if fixed_tokens is not None:
        got = tuple(t.attribute for t in fixed_tokens)
        if got != scheme.attributes:
            raise ValueError(f"fixed tokens cover {got}, scheme needs {scheme.attributes}")

    def build(pair):
        ordinal, window = pair
        return _build_one(
            ordinal, window, model, scheme, items, bucketing, k, gt_policy, seed, fixed_tokens
        )

    indexed = list(enumerate(windows))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(build, indexed))
    return [build(p) for p in indexed]


def write_instances(instances: list[RankingInstance], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(inst.to_document(), sort_keys=True) + "\n")


def read_instances(path) -> list[RankingInstance]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(RankingInstance.from_document(json.loads(line)))
    return out
