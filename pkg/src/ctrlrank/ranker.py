"""Trainable re-ranker: per-candidate features scored by a small model
trained with the pairwise ranking objective.

Each candidate is described by a 12-dimensional feature vector combining
control-token matches, retrieval evidence, history-attribute overlap and
popularity. Supervision comes from the control-score vector: every ordered
candidate pair with a strictly higher control score must be scored higher,
enforced by the averaged -log sigmoid(s_i - s_j) loss over the pair set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .control import ControlScheme, control_scores, item_token_value
from .corpus import AttributeBucketing, Item
from .metrics import RankedList
from .retrieval import RankingInstance, TransitionModel

FEATURE_NAMES = (
    "match_fraction",
    "match_price",
    "match_rank",
    "match_brand",
    "match_category",
    "retrieval_minmax",
    "reciprocal_rank",
    "history_brand_overlap",
    "history_bucket_overlap",
    "history_category_overlap",
    "log_popularity_std",
    "bias",
)
DIM = len(FEATURE_NAMES)

ARCHITECTURES = ("linear", "mlp")


@dataclass(frozen=True)
class TrainStats:
    """Train-split statistics features are standardized with."""

    popularity: dict[str, int]
    log_pop_mean: float
    log_pop_std: float

    @classmethod
    def from_model(cls, model: TransitionModel) -> "TrainStats":
        log_pop = [math.log1p(c) for _, c in sorted(model.popularity.items())]
        mean = float(np.mean(log_pop)) if log_pop else 0.0
        std = float(np.std(log_pop)) if log_pop else 0.0
        return cls(popularity=dict(model.popularity), log_pop_mean=mean, log_pop_std=std)

    def standardized_log_pop(self, item_id: str) -> float:
        value = math.log1p(self.popularity.get(item_id, 0))
        if self.log_pop_std == 0:
            return 0.0
        return (value - self.log_pop_mean) / self.log_pop_std

    def to_document(self) -> dict:
        return {
            "popularity": self.popularity,
            "log_pop_mean": self.log_pop_mean,
            "log_pop_std": self.log_pop_std,
        }

    @classmethod
    def from_document(cls, doc: dict) -> "TrainStats":
        return cls(
            popularity={k: int(v) for k, v in doc["popularity"].items()},
            log_pop_mean=float(doc["log_pop_mean"]),
            log_pop_std=float(doc["log_pop_std"]),
        )


def extract_features(
    instance: RankingInstance,
    items: dict[str, Item],
    bucketing: dict[str, AttributeBucketing],
    train_stats: TrainStats,
) -> np.ndarray:
    """Feature matrix (K x 12) for one instance, rows in candidate order.

    Match features agree exactly with the control satisfaction entries;
    attribute flags outside the scheme stay zero.
    """
    for item_id in list(instance.candidates) + list(instance.window.history):
        if item_id not in items:
            raise KeyError(f"unresolvable item: {item_id}")
    candidates = [items[c] for c in instance.candidates]
    history = [items[h] for h in instance.window.history]
    n_tokens = len(instance.tokens)
    token_by_attr = {t.attribute: i for i, t in enumerate(instance.tokens)}

    matrix, _ = control_scores(candidates, list(instance.tokens), None, bucketing)
    scores = np.asarray(instance.retrieval_scores, dtype=np.float64)
    span = scores.max() - scores.min()
    minmax = (scores - scores.min()) / span if span > 0 else np.zeros_like(scores)

    def bucket_of(item: Item) -> str | None:
        if "price" not in bucketing or item.price is None:
            return None
        return item_token_value(item, "price", bucketing)

    history_brands = [(h.brand or "").lower() for h in history]
    history_buckets = [bucket_of(h) for h in history]
    history_cats = [{c.lower() for c in h.categories} for h in history]
    n_hist = len(history)

    features = np.zeros((len(candidates), DIM), dtype=np.float64)
    for i, item in enumerate(candidates):
        row = matrix.entries[i]
        features[i, 0] = matrix.m[i] / max(n_tokens, 1)
        for attr, col in (("price", 1), ("rank", 2), ("brand", 3), ("category", 4)):
            if attr in token_by_attr:
                features[i, col] = row[token_by_attr[attr]]
        features[i, 5] = minmax[i]
        features[i, 6] = 1.0 / (i + 1)
        brand = (item.brand or "").lower()
        if brand:
            features[i, 7] = sum(1 for b in history_brands if b == brand) / n_hist
        bucket = bucket_of(item)
        if bucket is not None:
            features[i, 8] = sum(1 for b in history_buckets if b == bucket) / n_hist
        cats = {c.lower() for c in item.categories}
        if cats:
            features[i, 9] = sum(1 for hc in history_cats if hc & cats) / n_hist
        features[i, 10] = train_stats.standardized_log_pop(item.item_id)
        features[i, 11] = 1.0
    return features


# ---------------------------------------------------------------------------
# Scorer


@dataclass
class ScorerModel:
    """Linear scorer or a one-hidden-layer tanh scorer over the features.

    Linear parameters start at zero; the hidden-layer variant initializes
    uniformly in (-1/sqrt(D), 1/sqrt(D)) from ``init_seed``. Serialization
    round-trips bit-exactly through the JSON checkpoint document.
    """

    architecture: str = "linear"
    hidden: int = 16
    init_seed: int = 0
    params: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"architecture must be one of {ARCHITECTURES}")
        if not self.params:
            self.params = self._init_params()
        self._check_shapes()

    def _init_params(self) -> dict[str, np.ndarray]:
        if self.architecture == "linear":
            return {"w": np.zeros(DIM)}
        bound = 1.0 / math.sqrt(DIM)
        rng = np.random.default_rng(self.init_seed)
        return {
            "w1": rng.uniform(-bound, bound, size=(self.hidden, DIM)),
            "b1": rng.uniform(-bound, bound, size=self.hidden),
            "w2": rng.uniform(-bound, bound, size=self.hidden),
            "b2": rng.uniform(-bound, bound, size=1),
        }

    def _check_shapes(self):
        if self.architecture == "linear":
            if self.params["w"].shape != (DIM,):
                raise ValueError("linear weights must have shape (12,)")
        else:
            if self.params["w1"].shape != (self.hidden, DIM):
                raise ValueError("hidden weights inconsistent with architecture")

    def copy(self) -> "ScorerModel":
        return ScorerModel(
            architecture=self.architecture,
            hidden=self.hidden,
            init_seed=self.init_seed,
            params={k: v.copy() for k, v in self.params.items()},
        )

    def forward(self, features: np.ndarray) -> np.ndarray:
        """Scores for feature rows; accepts (..., D) and returns (...)."""
        if features.shape[-1] != DIM:
            raise ValueError(f"feature dimension {features.shape[-1]} != {DIM}")
        if self.architecture == "linear":
            return features @ self.params["w"]
        z = features @ self.params["w1"].T + self.params["b1"]
        return np.tanh(z) @ self.params["w2"] + self.params["b2"][0]

    def gradients(self, features: np.ndarray, ds: np.ndarray) -> dict[str, np.ndarray]:
        """Parameter gradients given d(loss)/d(score) for each feature row."""
        flat_f = features.reshape(-1, DIM)
        flat_ds = ds.reshape(-1)
        if self.architecture == "linear":
            return {"w": flat_ds @ flat_f}
        z = flat_f @ self.params["w1"].T + self.params["b1"]
        h = np.tanh(z)
        dz = (flat_ds[:, None] * self.params["w2"]) * (1.0 - h * h)
        return {
            "w1": dz.T @ flat_f,
            "b1": dz.sum(axis=0),
            "w2": flat_ds @ h,
            "b2": np.array([flat_ds.sum()]),
        }

    def to_document(self) -> dict:
        return {
            "version": 1,
            "architecture": self.architecture,
            "dim": DIM,
            "hidden": self.hidden,
            "init_seed": self.init_seed,
            "params": {k: v.tolist() for k, v in sorted(self.params.items())},
        }

    @classmethod
    def from_document(cls, doc: dict) -> "ScorerModel":
        if doc.get("version") != 1:
            raise ValueError(f"unsupported checkpoint version: {doc.get('version')}")
        if doc["dim"] != DIM:
            raise ValueError(f"checkpoint dimension {doc['dim']} != {DIM}")
        return cls(
            architecture=doc["architecture"],
            hidden=doc["hidden"],
            init_seed=doc["init_seed"],
            params={k: np.asarray(v, dtype=np.float64) for k, v in doc["params"].items()},
        )


def score(model: ScorerModel, features: np.ndarray) -> np.ndarray:
    """Model scores per candidate; raises on dimension mismatch or non-finite
    output."""
    s = model.forward(np.asarray(features, dtype=np.float64))
    if not np.all(np.isfinite(s)):
        raise ValueError("scorer produced non-finite scores")
    return s


# ---------------------------------------------------------------------------
# Pairs and loss


def build_pairs(r) -> list[tuple[int, int]]:
    """All ordered index pairs (i, j) with r_i > r_j, in (i, j) order."""
    values = list(r.r) if hasattr(r, "r") else list(r)
    return [
        (i, j)
        for i in range(len(values))
        for j in range(len(values))
        if values[i] > values[j]
    ]


def ranknet_loss_and_grad(
    s: np.ndarray, pairs: list[tuple[int, int]]
) -> tuple[float, np.ndarray]:
    """Averaged -log sigmoid(s_i - s_j) over the pair set and its gradient.

    An empty pair set yields zero loss and zero gradient (the caller counts
    such instances as skipped).
    """
    s = np.asarray(s, dtype=np.float64)
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    if not pairs:
        return 0.0, np.zeros_like(s)
    pi = np.array([p[0] for p in pairs], dtype=np.intp)
    pj = np.array([p[1] for p in pairs], dtype=np.intp)
    diff = s[pi] - s[pj]
    # -log sigmoid(d) == log(1 + exp(-d)), stable for large |d|
    loss = float(np.logaddexp(0.0, -diff).mean())
    coef = -(1.0 - _sigmoid(diff)) / len(pairs)
    ds = np.zeros_like(s)
    np.add.at(ds, pi, coef)
    np.add.at(ds, pj, -coef)
    return loss, ds


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# ---------------------------------------------------------------------------
# Training


@dataclass(frozen=True)
class TrainConfig:
    """Gradient-descent settings: cosine-decayed rate with a 2% warmup,
    decoupled weight decay, seeded shuffling.

    The default base rate follows the 1e-4 / 3e-5 / 7e-6 grid used for the
    reference runs; any positive rate is accepted.
    """

    learning_rate: float = 1e-4
    epochs: int = 3
    batch_size: int = 32
    weight_decay: float = 0.0
    warmup_fraction: float = 0.02
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")

    def rate_at(self, step: int, total_steps: int) -> float:
        """Cosine-decayed learning rate with linear warmup over the first 2%."""
        warmup = max(1, round(self.warmup_fraction * total_steps))
        if step < warmup:
            return self.learning_rate * (step + 1) / warmup
        if total_steps <= warmup:
            return self.learning_rate
        progress = (step - warmup) / (total_steps - warmup)
        return self.learning_rate * 0.5 * (1.0 + math.cos(math.pi * progress))

    def to_document(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "weight_decay": self.weight_decay,
            "warmup_fraction": self.warmup_fraction,
            "seed": self.seed,
        }


@dataclass
class TrainResult:
    model: ScorerModel
    epoch_losses: list[float]
    skipped_empty_pairs: int
    best_epoch: int | None = None
    val_hit_rates: list[float] = field(default_factory=list)


def _instance_tensors(instances, items, bucketing, train_stats):
    features = []
    pair_arrays = []
    relevance = []
    for inst in instances:
        features.append(extract_features(inst, items, bucketing, train_stats))
        _, vector = control_scores(
            [items[c] for c in inst.candidates], list(inst.tokens), inst.gt_index, bucketing
        )
        relevance.append(vector)
        pairs = build_pairs(vector)
        pair_arrays.append(
            (
                np.array([p[0] for p in pairs], dtype=np.intp),
                np.array([p[1] for p in pairs], dtype=np.intp),
            )
        )
    return np.stack(features), pair_arrays, relevance


def train(
    model: ScorerModel,
    instances: list[RankingInstance],
    config: TrainConfig,
    items: dict[str, Item],
    bucketing: dict[str, AttributeBucketing],
    train_stats: TrainStats,
    val_instances: list[RankingInstance] | None = None,
) -> TrainResult:
    """Mini-batch gradient descent on the pairwise loss.

    Shuffle order is fixed per epoch from the config seed, batch gradients
    are reduced in input-index order, and the checkpoint returned is the
    one with the highest validation hit rate at 3 (final parameters when no
    validation set is given). Instances whose pair set is empty contribute
    zero loss and are counted.
    """
    if not instances:
        raise ValueError("no training instances")
    features, pair_arrays, _ = _instance_tensors(instances, items, bucketing, train_stats)
    n, k, _ = features.shape
    skipped = sum(1 for pi, _ in pair_arrays if len(pi) == 0)
    if skipped == n:
        raise ValueError("every training instance has an empty pair set")

    val_pack = None
    if val_instances:
        val_pack = [
            (extract_features(inst, items, bucketing, train_stats), inst)
            for inst in val_instances
        ]

    model = model.copy()
    rng = np.random.default_rng(config.seed)
    n_batches = math.ceil(n / config.batch_size)
    total_steps = config.epochs * n_batches
    step = 0
    epoch_losses: list[float] = []
    val_hit_rates: list[float] = []
    best: tuple[float, int, ScorerModel] | None = None

    for _ in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for b in range(n_batches):
            batch = order[b * config.batch_size : (b + 1) * config.batch_size]
            fb = features[batch]
            s = model.forward(fb)
            ds = np.zeros_like(s)
            for row, idx in enumerate(batch):
                pi, pj = pair_arrays[idx]
                if len(pi) == 0:
                    continue
                diff = s[row, pi] - s[row, pj]
                epoch_loss += float(np.logaddexp(0.0, -diff).mean())
                coef = -(1.0 - _sigmoid(diff)) / (len(pi) * len(batch))
                np.add.at(ds[row], pi, coef)
                np.add.at(ds[row], pj, -coef)
            grads = model.gradients(fb, ds)
            lr = config.rate_at(step, total_steps)
            for name, grad in grads.items():
                theta = model.params[name]
                model.params[name] = theta - lr * grad - lr * config.weight_decay * theta
            step += 1
        epoch_losses.append(epoch_loss / n)

        if val_pack is not None:
            hits = 0
            for f, inst in val_pack:
                order_idx = rerank_order(model, f, inst.retrieval_scores)
                if inst.gt_index is not None and inst.gt_index in order_idx[:3]:
                    hits += 1
            hr = hits / len(val_pack)
            val_hit_rates.append(hr)
            if best is None or hr > best[0]:
                best = (hr, len(epoch_losses), model.copy())

    if best is not None:
        return TrainResult(
            model=best[2],
            epoch_losses=epoch_losses,
            skipped_empty_pairs=skipped,
            best_epoch=best[1],
            val_hit_rates=val_hit_rates,
        )
    return TrainResult(model=model, epoch_losses=epoch_losses, skipped_empty_pairs=skipped)


# ---------------------------------------------------------------------------
# Re-ranking


@dataclass(frozen=True)
class RankedEntry:
    item_id: str
    score: float
    relevance: int
    satisfied: tuple[int, ...]
    retrieval_score: float
    candidate_index: int


def rerank_order(model: ScorerModel, features: np.ndarray, retrieval_scores) -> list[int]:
    """Candidate indices sorted by model score descending; ties break by
    retrieval score descending then candidate position ascending."""
    s = score(model, features)
    keys = list(range(len(s)))
    return sorted(keys, key=lambda i: (-s[i], -retrieval_scores[i], i))


def rerank(
    model: ScorerModel,
    instance: RankingInstance,
    items: dict[str, Item],
    bucketing: dict[str, AttributeBucketing],
    train_stats: TrainStats,
) -> list[RankedEntry]:
    """Score and sort one instance's candidates, annotated with control
    scores and per-token satisfaction flags."""
    features = extract_features(instance, items, bucketing, train_stats)
    s = score(model, features)
    matrix, vector = control_scores(
        [items[c] for c in instance.candidates],
        list(instance.tokens),
        instance.gt_index,
        bucketing,
    )
    order = rerank_order(model, features, instance.retrieval_scores)
    return [
        RankedEntry(
            item_id=instance.candidates[i],
            score=float(s[i]),
            relevance=vector.r[i],
            satisfied=matrix.entries[i],
            retrieval_score=instance.retrieval_scores[i],
            candidate_index=i,
        )
        for i in order
    ]


def ranked_list(entries: list[RankedEntry], gt_candidate_index: int | None) -> RankedList:
    """Convert ranked entries to the metric-facing list (1-based gt rank)."""
    gt_position = None
    if gt_candidate_index is not None:
        for pos, entry in enumerate(entries, 1):
            if entry.candidate_index == gt_candidate_index:
                gt_position = pos
                break
    return RankedList(
        relevance=tuple(e.relevance for e in entries), gt_position=gt_position
    )


def pair_accuracy(
    model: ScorerModel,
    instances: list[RankingInstance],
    items: dict[str, Item],
    bucketing: dict[str, AttributeBucketing],
    train_stats: TrainStats,
) -> float:
    """Fraction of all supervision pairs the model orders correctly."""
    correct = 0
    total = 0
    for inst in instances:
        features = extract_features(inst, items, bucketing, train_stats)
        s = score(model, features)
        _, vector = control_scores(
            [items[c] for c in inst.candidates], list(inst.tokens), inst.gt_index, bucketing
        )
        for i, j in build_pairs(vector):
            total += 1
            if s[i] > s[j]:
                correct += 1
    return correct / total if total else 0.0
