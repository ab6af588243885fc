"""Baselines, sweeps and the synthetic corpus generator.

The hard-filter baseline pushes fully compliant candidates to the top and
appends the rest so metric denominators stay comparable; the zero-shot
baseline keeps pure retrieval order. Sweeps re-evaluate fixed rankings
under descending thresholds or retrain per scheme for the token-count
axis. The generator plants per-user home attributes so control compliance
correlates with the actually chosen next item.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig
from .control import ControlScheme, control_scores
from .corpus import (
    AttributeBucketing,
    Corpus,
    Interaction,
    Item,
    keyword_tags,
)
from .metrics import EvalReport, RankedList, evaluate_run
from .pipeline import run_end_to_end
from .ranker import ScorerModel, TrainStats
from .retrieval import RankingInstance

log = logging.getLogger(__name__)

BASELINES = ("learned", "hard_filter", "zero_shot")

BRAND_NAMES = (
    "acme", "zenbo", "nordica", "kelvin", "orbit", "lumo", "vanta", "picozi",
    "helix", "quanta", "ferro", "midori", "solace", "drift", "ember", "cobalt",
    "rustic", "plume", "onyx", "fable",
)
CATEGORY_WORDS = (
    "kitchen", "audio", "garden", "toys", "office", "outdoor", "beauty",
    "sports", "books", "games", "tools", "travel", "pets", "crafts",
    "decor", "fitness",
)
NOUNS = ("set", "kit", "pack", "case", "stand", "bundle")


# ---------------------------------------------------------------------------
# Baselines


def zero_shot_order(instance: RankingInstance) -> list[int]:
    """Candidate indices by retrieval score descending, position ascending."""
    return sorted(
        range(len(instance.candidates)),
        key=lambda i: (-instance.retrieval_scores[i], i),
    )


def hard_filter_order(
    instance: RankingInstance,
    items: dict[str, Item],
    bucketing: dict[str, AttributeBucketing],
) -> tuple[list[int], int]:
    """Fully compliant candidates first (retrieval order), the rest appended.

    Returns the candidate index order and the compliant/excluded boundary;
    a boundary of zero means no candidate satisfied every token.
    """
    matrix, _ = control_scores(
        [items[c] for c in instance.candidates], list(instance.tokens), None, bucketing
    )
    n_tokens = len(instance.tokens)
    base = zero_shot_order(instance)
    compliant = [i for i in base if matrix.m[i] == n_tokens]
    excluded = [i for i in base if matrix.m[i] < n_tokens]
    return compliant + excluded, len(compliant)


def _ranked_from_order(
    instance: RankingInstance,
    order: list[int],
    items: dict[str, Item],
    bucketing: dict[str, AttributeBucketing],
) -> RankedList:
    _, vector = control_scores(
        [items[c] for c in instance.candidates],
        list(instance.tokens),
        instance.gt_index,
        bucketing,
    )
    gt_position = None
    if instance.gt_index is not None:
        gt_position = order.index(instance.gt_index) + 1
    return RankedList(
        relevance=tuple(vector.r[i] for i in order), gt_position=gt_position
    )


def zero_shot_rank(
    instance: RankingInstance,
    items: dict[str, Item],
    bucketing: dict[str, AttributeBucketing],
) -> RankedList:
    """Retrieval-order ranking; control tokens are ignored."""
    return _ranked_from_order(instance, zero_shot_order(instance), items, bucketing)


def hard_filter_rank(
    instance: RankingInstance,
    items: dict[str, Item],
    bucketing: dict[str, AttributeBucketing],
) -> RankedList:
    """Hard-filter ranking with excluded items appended at the bottom."""
    order, _ = hard_filter_order(instance, items, bucketing)
    return _ranked_from_order(instance, order, items, bucketing)


# ---------------------------------------------------------------------------
# Sweeps


@dataclass(frozen=True)
class SweepResult:
    """Reports along one swept axis (threshold t or token count)."""

    axis: str
    points: tuple[tuple[float, EvalReport], ...]
    baseline: str = "learned"

    def __post_init__(self):
        if self.baseline not in BASELINES:
            raise ValueError(f"baseline must be one of {BASELINES}")
        values = [p[0] for p in self.points]
        ascending = all(b > a for a, b in zip(values, values[1:]))
        descending = all(b < a for a, b in zip(values, values[1:]))
        if len(values) > 1 and not (ascending or descending):
            raise ValueError("sweep axis points must be strictly ordered")


def threshold_sweep(
    ranked_lists: list[RankedList],
    scheme: ControlScheme,
    gain: str = "exponential",
    seed: int = 0,
    config_hash: str = "",
    baseline: str = "learned",
) -> SweepResult:
    """Re-evaluate fixed rankings at every threshold from N_C down to 1."""
    if scheme.n_tokens < 2:
        raise ValueError("threshold sweeps need a multi-token scheme")
    points = []
    for t in range(scheme.n_tokens, 0, -1):
        report = evaluate_run(
            ranked_lists,
            scheme.name(),
            scheme.n_tokens,
            threshold=float(t),
            gain=gain,
            seed=seed,
            config_hash=config_hash,
        )
        points.append((float(t), report))
    return SweepResult(axis="threshold", points=tuple(points), baseline=baseline)


def _nested(schemes: list[ControlScheme]) -> bool:
    for small, big in zip(schemes, schemes[1:]):
        if not set(small.attributes) <= set(big.attributes):
            return False
    return True


def token_count_sweep(
    raw_corpus: Corpus, schemes: list[ControlScheme], config: RunConfig
) -> SweepResult:
    """Train one model per scheme and evaluate each at its own t = N_C."""
    if not _nested(schemes):
        log.warning("token-count sweep schemes are not nested")
    points = []
    for scheme in schemes:
        scheme_config = RunConfig.from_document(
            {}, **{**_config_kwargs(config), "scheme_attributes": scheme.attributes,
                   "threshold": None}
        )
        result = run_end_to_end(raw_corpus, scheme_config)
        points.append((float(scheme.n_tokens), result.report))
    return SweepResult(axis="n_tokens", points=tuple(points), baseline="learned")


def _config_kwargs(config: RunConfig) -> dict:
    return {
        "items_path": config.items_path,
        "interactions_path": config.interactions_path,
        "tags_path": config.tags_path,
        "out_dir": config.out_dir,
        "scheme_attributes": config.scheme_attributes,
        "fixed_tokens": config.fixed_tokens,
        "min_interactions": config.min_interactions,
        "max_history": config.max_history,
        "n_buckets": config.n_buckets,
        "k": config.k,
        "alpha": config.alpha,
        "gamma": config.gamma,
        "gt_policy_train": config.gt_policy_train,
        "gt_policy_eval": config.gt_policy_eval,
        "architecture": config.architecture,
        "hidden": config.hidden,
        "learning_rate": config.learning_rate,
        "epochs": config.epochs,
        "batch_size": config.batch_size,
        "weight_decay": config.weight_decay,
        "gain": config.gain,
        "threshold": config.threshold,
        "seed": config.seed,
        "workers": config.workers,
        "synth": config.synth,
    }


def baseline_rank(
    method: str,
    model: ScorerModel | None,
    instance: RankingInstance,
    items: dict[str, Item],
    bucketing: dict[str, AttributeBucketing],
    train_stats: TrainStats | None,
) -> RankedList:
    """Dispatch one instance to a ranking method by name."""
    if method == "zero_shot":
        return zero_shot_rank(instance, items, bucketing)
    if method == "hard_filter":
        return hard_filter_rank(instance, items, bucketing)
    if method == "learned":
        from .ranker import ranked_list, rerank

        entries = rerank(model, instance, items, bucketing, train_stats)
        return ranked_list(entries, instance.gt_index)
    raise ValueError(f"unknown method: {method}")


# ---------------------------------------------------------------------------
# Synthetic corpus


@dataclass(frozen=True)
class SynthConfig:
    """Planted-preference corpus with all-or-nothing control compliance.

    Each user gets a home triple (brand, price band, sales-rank band); every
    timeline position draws from the home pool, or with probability
    gt_violation_rate from the complement pool violating all three, so the
    next item disagrees with the user's home tokens at exactly that rate.
    Price and rank take one discrete value per band so the pipeline's
    train-split quantile buckets reproduce the planted bands exactly.
    """

    n_users: int = 500
    n_items: int = 2000
    n_brands: int = 16
    n_categories: int = 10
    price_min: float = 1.0
    price_max: float = 100.0
    n_price_bands: int = 5
    gt_violation_rate: float = 0.2
    min_len: int = 12
    max_len: int = 24
    seed: int = 7

    def __post_init__(self):
        if not 0.0 <= self.gt_violation_rate <= 1.0:
            raise ValueError("gt_violation_rate must be in [0, 1]")
        if self.n_items < 6:
            raise ValueError("need at least 6 items (candidate list size)")
        if self.n_brands < 2 or self.n_categories < 1:
            raise ValueError("alphabet sizes too small")
        if self.n_price_bands < 2:
            raise ValueError("need at least 2 price bands")
        if not 2 <= self.min_len <= self.max_len:
            raise ValueError("need 2 <= min_len <= max_len")
        if self.price_max <= self.price_min:
            raise ValueError("price_max must exceed price_min")

    @property
    def price_values(self) -> tuple[float, ...]:
        """One price per band: band centers over [price_min, price_max]."""
        width = (self.price_max - self.price_min) / self.n_price_bands
        return tuple(
            round(self.price_min + (b + 0.5) * width, 2)
            for b in range(self.n_price_bands)
        )

    @property
    def rank_values(self) -> tuple[int, ...]:
        """One sales rank per band: band centers over [1, n_items]."""
        width = self.n_items / self.n_price_bands
        return tuple(
            max(1, int((b + 0.5) * width)) for b in range(self.n_price_bands)
        )

    @classmethod
    def from_document(cls, doc: dict) -> "SynthConfig":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in doc.items() if k in known})


@dataclass(frozen=True)
class PlantedPreference:
    brand: str
    price_band: int
    rank_band: int


def _brand_name(i: int) -> str:
    if i < len(BRAND_NAMES):
        return BRAND_NAMES[i]
    return f"brand{i:02d}"


def _home_band_probs(n_bands: int, violation_rate: float) -> np.ndarray:
    """Home-band draw probabilities that keep the train-split quantile cut
    points strictly inside bands 2..n, so fitted bucket edges land exactly
    on the discrete band values for every seed.

    The interaction share of band b is (1-v)*p_b + v*(1-p_b)/(n-1); the
    probabilities below target shares (1/n - 0.05, 1/n, ..., 1/n + 0.05).
    Falls back to uniform when the violation rate is too extreme for the
    shaping to stay a probability vector.
    """
    targets = np.full(n_bands, 1.0 / n_bands)
    targets[0] -= 0.05
    targets[-1] += 0.05
    v = violation_rate
    denom = (1.0 - v) - v / (n_bands - 1)
    if denom <= 0:
        return np.full(n_bands, 1.0 / n_bands)
    probs = (targets - v / (n_bands - 1)) / denom
    if np.any(probs <= 0):
        return np.full(n_bands, 1.0 / n_bands)
    return probs / probs.sum()


def generate_synth(config: SynthConfig) -> Corpus:
    """Deterministic synthetic corpus (see generate_synth_with_plants)."""
    corpus, _ = generate_synth_with_plants(config)
    return corpus


def generate_synth_with_plants(
    config: SynthConfig,
) -> tuple[Corpus, dict[str, PlantedPreference]]:
    """Synthetic corpus plus each user's planted home attributes.

    Items carry brand, banded price and sales rank, and brand-typical
    categories, with titles embedding the category words so the keyword
    tagger can reconstruct tags. Every timeline draw comes from the user's
    home pool (matching brand, price band and rank band) or, with
    probability gt_violation_rate, from the complement pool matching none
    of the three.
    """
    rng = np.random.default_rng(config.seed)
    brands = [_brand_name(i) for i in range(config.n_brands)]
    categories = [
        CATEGORY_WORDS[i] if i < len(CATEGORY_WORDS) else f"cat{i:02d}"
        for i in range(config.n_categories)
    ]
    brand_cats = {
        b: sorted(
            categories[j]
            for j in rng.choice(
                config.n_categories, size=min(2, config.n_categories), replace=False
            )
        )
        for b in brands
    }

    n_bands = config.n_price_bands
    price_values = config.price_values
    rank_values = config.rank_values
    brand_of = rng.integers(config.n_brands, size=config.n_items)
    pband_of = rng.integers(n_bands, size=config.n_items)
    rband_of = rng.integers(n_bands, size=config.n_items)

    items: dict[str, Item] = {}
    for i in range(config.n_items):
        brand = brands[brand_of[i]]
        typical = brand_cats[brand]
        cats = list(typical[: 1 + int(rng.integers(len(typical)))])
        if rng.random() < 0.3:
            cats.append(categories[int(rng.integers(config.n_categories))])
        cats = sorted(set(cats))
        noun = NOUNS[int(rng.integers(len(NOUNS)))]
        item_id = f"i{i:05d}"
        items[item_id] = Item(
            item_id=item_id,
            title=f"{brand} {' '.join(cats)} {noun} {i:04d}",
            price=price_values[pband_of[i]],
            sales_rank=rank_values[rband_of[i]],
            brand=brand,
            categories=frozenset(cats),
        )

    item_ids = sorted(items)
    pools: dict[tuple[int, int, int], np.ndarray] = {}
    for b in range(config.n_brands):
        for pband in range(n_bands):
            for rband in range(n_bands):
                pools[(b, pband, rband)] = np.where(
                    (brand_of == b) & (pband_of == pband) & (rband_of == rband)
                )[0]

    band_probs = _home_band_probs(n_bands, config.gt_violation_rate)
    users: dict[str, list[Interaction]] = {}
    plants: dict[str, PlantedPreference] = {}
    for u in range(config.n_users):
        while True:
            home_b = int(rng.integers(config.n_brands))
            home_pband = int(rng.choice(n_bands, p=band_probs))
            home_rband = int(rng.choice(n_bands, p=band_probs))
            if len(pools[(home_b, home_pband, home_rband)]) > 1:
                break
        home_pool = pools[(home_b, home_pband, home_rband)]
        away_pool = np.where(
            (brand_of != home_b) & (pband_of != home_pband) & (rband_of != home_rband)
        )[0]
        user_id = f"u{u:04d}"
        plants[user_id] = PlantedPreference(
            brand=brands[home_b], price_band=home_pband, rank_band=home_rband
        )

        length = int(rng.integers(config.min_len, config.max_len + 1))
        timeline: list[Interaction] = []
        prev = -1
        for pos in range(length):
            pool = away_pool if rng.random() < config.gt_violation_rate else home_pool
            idx = int(pool[rng.integers(len(pool))])
            if idx == prev and len(pool) > 1:
                while idx == prev:
                    idx = int(pool[rng.integers(len(pool))])
            prev = idx
            rating = 5 if rng.random() < 0.92 else int(rng.integers(1, 4))
            timeline.append(
                Interaction(
                    user_id=user_id,
                    item_id=item_ids[idx],
                    rating=rating,
                    timestamp=1_600_000_000 + u * 100_000 + pos * 1_000,
                )
            )
        users[user_id] = timeline

    return Corpus(items=items, users=users), plants


def planted_tokens(
    plant: PlantedPreference,
    config: SynthConfig,
    bucketing: dict[str, AttributeBucketing],
    attributes: tuple[str, ...] = ("price", "rank", "brand"),
):
    """A user's home preferences as fixed control tokens in pipeline terms.

    Band indices map through the fitted bucketing of the band's discrete
    value, which coincides with the planted band by construction.
    """
    from .control import ControlToken
    from .corpus import assign_bucket

    tokens = []
    for attr in attributes:
        if attr == "price":
            label = assign_bucket(bucketing["price"], config.price_values[plant.price_band])
            tokens.append(ControlToken("price", label))
        elif attr == "rank":
            label = assign_bucket(bucketing["rank"], float(config.rank_values[plant.rank_band]))
            tokens.append(ControlToken("rank", label))
        elif attr == "brand":
            tokens.append(ControlToken("brand", plant.brand))
        else:
            raise ValueError(f"no planted preference for {attr}")
    return tokens


def write_synth_files(corpus: Corpus, out_dir: str | Path) -> dict[str, Path]:
    """Write items.jsonl, interactions.jsonl and a tags.json sidecar derived
    from titles by the keyword tagger. Byte-identical for identical corpora."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    items_path = out / "items.jsonl"
    inter_path = out / "interactions.jsonl"
    tags_path = out / "tags.json"

    with items_path.open("w", encoding="utf-8") as fh:
        for item_id in sorted(corpus.items):
            item = corpus.items[item_id]
            fh.write(
                json.dumps(
                    {
                        "item_id": item.item_id,
                        "title": item.title,
                        "price": item.price,
                        "rank": item.sales_rank,
                        "brand": item.brand,
                        "categories": sorted(item.categories),
                    },
                    sort_keys=True,
                )
                + "\n"
            )
    with inter_path.open("w", encoding="utf-8") as fh:
        for user_id in sorted(corpus.users):
            for inter in corpus.users[user_id]:
                fh.write(
                    json.dumps(
                        {
                            "user_id": inter.user_id,
                            "item_id": inter.item_id,
                            "rating": inter.rating,
                            "timestamp": inter.timestamp,
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )
    vocabulary = sorted({c for item in corpus.items.values() for c in item.categories})
    tags = {
        item_id: keyword_tags(corpus.items[item_id].title, vocabulary)
        for item_id in sorted(corpus.items)
    }
    tags_path.write_text(json.dumps(tags, indent=0, sort_keys=True), encoding="utf-8")
    return {"items": items_path, "interactions": inter_path, "tags": tags_path}
