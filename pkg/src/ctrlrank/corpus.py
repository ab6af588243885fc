"""Corpus ingestion, preprocessing, attribute bucketing and window extraction.

The pipeline starts from two line-delimited JSON files (item metadata and
user interactions) plus an optional category-tag sidecar. Preprocessing
keeps positive interactions on attribute-complete items, splits each user's
timeline chronologically into train/valid/test, and emits fixed-size
sliding windows whose final position is the prediction target. Numeric
attributes (price, sales rank) are discretized into labeled quantile
buckets fitted on training data only.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

log = logging.getLogger(__name__)

TRAIN, VALID, TEST = "train", "valid", "test"
SPLITS = (TRAIN, VALID, TEST)

#: Attributes that go through quantile bucketing before matching.
BUCKETED_ATTRIBUTES = ("price", "rank")
#: Attributes matched by exact (case-insensitive) value.
VALUE_ATTRIBUTES = ("brand", "category")
ALL_ATTRIBUTES = BUCKETED_ATTRIBUTES + VALUE_ATTRIBUTES


class CorpusError(Exception):
    """Fatal problem while loading or preprocessing a corpus."""


@dataclass(frozen=True)
class Item:
    """One catalogue item. Attribute fields may be missing before filtering."""

    item_id: str
    title: str = ""
    price: float | None = None
    sales_rank: int | None = None
    brand: str | None = None
    categories: frozenset[str] = frozenset()

    def attribute_value(self, attribute: str):
        """Raw value backing a control attribute, or None if absent."""
        if attribute == "price":
            return self.price
        if attribute == "rank":
            return self.sales_rank
        if attribute == "brand":
            return self.brand
        if attribute == "category":
            return self.categories or None
        raise ValueError(f"unknown attribute: {attribute}")

    def has_attribute(self, attribute: str) -> bool:
        value = self.attribute_value(attribute)
        if value is None:
            return False
        if isinstance(value, str):
            return bool(value.strip())
        return True


@dataclass(frozen=True)
class Interaction:
    user_id: str
    item_id: str
    rating: int
    timestamp: int


@dataclass(frozen=True)
class SplitMark:
    """Per-user boundaries: [0, train_end) train, [train_end, valid_end) valid,
    [valid_end, n) test."""

    train_end: int
    valid_end: int

    def split_of(self, index: int) -> str:
        if index < self.train_end:
            return TRAIN
        if index < self.valid_end:
            return VALID
        return TEST


@dataclass
class Corpus:
    """Immutable-after-construction container for items and user timelines."""

    items: dict[str, Item]
    users: dict[str, list[Interaction]]
    split_marks: dict[str, SplitMark] = field(default_factory=dict)
    skipped_lines: int = 0
    dropped_unknown_items: int = 0

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_items(self) -> int:
        return len(self.items)

    @property
    def n_interactions(self) -> int:
        return sum(len(v) for v in self.users.values())

    def interactions_in_split(self, split: str) -> list[Interaction]:
        out = []
        for user_id in sorted(self.users):
            mark = self.split_marks.get(user_id)
            if mark is None:
                continue
            for idx, inter in enumerate(self.users[user_id]):
                if mark.split_of(idx) == split:
                    out.append(inter)
        return out

    def train_attribute_values(self, attribute: str) -> list[float]:
        """One numeric value per train-split interaction, for bucket fitting."""
        values = []
        for inter in self.interactions_in_split(TRAIN):
            value = self.items[inter.item_id].attribute_value(attribute)
            if value is not None:
                values.append(float(value))
        return values

    def iter_windows(self, w: int = 6) -> list["SequenceWindow"]:
        windows = []
        for user_id in sorted(self.users):
            mark = self.split_marks.get(user_id)
            item_ids = [i.item_id for i in self.users[user_id]]
            splits = None
            if mark is not None:
                splits = [mark.split_of(i) for i in range(len(item_ids))]
            windows.extend(sliding_windows(user_id, item_ids, splits, w=w))
        return windows


@dataclass(frozen=True)
class SequenceWindow:
    """History positions plus the immediately following target item.

    The standard pipeline uses w=6: five history items and one target.
    The window carries the split label of its target interaction.
    """

    user_id: str
    history: tuple[str, ...]
    target: str
    split: str = TRAIN

    def __post_init__(self):
        if not self.history:
            raise ValueError("window history must be nonempty")
        if self.split not in SPLITS:
            raise ValueError(f"unknown split: {self.split}")


def sliding_windows(
    user_id: str,
    item_ids: list[str],
    splits: list[str] | None = None,
    w: int = 6,
) -> list[SequenceWindow]:
    """Emit max(0, len - w + 1) windows; window i covers positions i..i+w-1.

    The last position is the target; the window's split label is the split
    of the target position (train when no split labels are given).
    """
    if w < 2:
        raise ValueError("window size must be >= 2")
    n = len(item_ids)
    out = []
    for i in range(max(0, n - w + 1)):
        target_pos = i + w - 1
        split = splits[target_pos] if splits is not None else TRAIN
        out.append(
            SequenceWindow(
                user_id=user_id,
                history=tuple(item_ids[i : i + w - 1]),
                target=item_ids[target_pos],
                split=split,
            )
        )
    return out


# ---------------------------------------------------------------------------
# Loading


def _parse_item(record: dict) -> Item:
    item_id = record["item_id"]
    if not isinstance(item_id, str) or not item_id:
        raise ValueError("item_id must be a nonempty string")
    price = record.get("price")
    if price is not None:
        price = float(price)
        if math.isnan(price) or price < 0:
            raise ValueError("price must be a non-negative number")
    rank = record.get("rank")
    if rank is not None:
        rank = int(rank)
        if rank <= 0:
            raise ValueError("rank must be a positive integer")
    brand = record.get("brand")
    if brand is not None and not isinstance(brand, str):
        raise ValueError("brand must be a string")
    categories = record.get("categories") or []
    return Item(
        item_id=item_id,
        title=str(record.get("title", "")),
        price=price,
        sales_rank=rank,
        brand=brand,
        categories=frozenset(str(c) for c in categories),
    )


def _parse_interaction(record: dict) -> Interaction:
    rating = int(record["rating"])
    if not 1 <= rating <= 5:
        raise ValueError("rating must be in 1..5")
    return Interaction(
        user_id=str(record["user_id"]),
        item_id=str(record["item_id"]),
        rating=rating,
        timestamp=int(record["timestamp"]),
    )


def load_corpus(items_path: str | Path, interactions_path: str | Path) -> Corpus:
    """Load items and interactions from line-delimited JSON files.

    Malformed lines are skipped and counted; duplicate item ids and
    unreadable files are fatal. Interactions referencing unknown items are
    dropped and counted. Per-user interactions are sorted chronologically
    with timestamp ties broken by item_id.
    """
    items_path, interactions_path = Path(items_path), Path(interactions_path)
    for path in (items_path, interactions_path):
        if not path.is_file():
            raise CorpusError(f"cannot read {path}")

    items: dict[str, Item] = {}
    skipped = 0
    with items_path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                item = _parse_item(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                skipped += 1
                log.warning("skipping items line %d: %s", lineno, exc)
                continue
            if item.item_id in items:
                raise CorpusError(f"duplicate item_id {item.item_id!r} at line {lineno}")
            items[item.item_id] = item

    users: dict[str, list[Interaction]] = {}
    dropped_unknown = 0
    with interactions_path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                inter = _parse_interaction(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                skipped += 1
                log.warning("skipping interactions line %d: %s", lineno, exc)
                continue
            if inter.item_id not in items:
                dropped_unknown += 1
                continue
            users.setdefault(inter.user_id, []).append(inter)

    for user_id in users:
        users[user_id].sort(key=lambda r: (r.timestamp, r.item_id))
    if skipped:
        log.warning("skipped %d malformed lines", skipped)
    if dropped_unknown:
        log.warning("dropped %d interactions referencing unknown items", dropped_unknown)
    return Corpus(
        items=items,
        users=users,
        skipped_lines=skipped,
        dropped_unknown_items=dropped_unknown,
    )


def load_tags(path: str | Path) -> dict[str, list[str]]:
    """Read the category-tag sidecar: a JSON object item_id -> [tags]."""
    with Path(path).open(encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise CorpusError("tags sidecar must be a JSON object of item_id -> tags")
    return {str(k): [str(t) for t in v] for k, v in raw.items()}


def apply_tags(corpus: Corpus, tags: dict[str, list[str]]) -> Corpus:
    """Merge sidecar tags into item category sets (new Corpus, items replaced)."""
    items = dict(corpus.items)
    for item_id, item_tags in tags.items():
        item = items.get(item_id)
        if item is None:
            continue
        items[item_id] = replace(item, categories=item.categories | frozenset(item_tags))
    return Corpus(
        items=items,
        users=corpus.users,
        split_marks=corpus.split_marks,
        skipped_lines=corpus.skipped_lines,
        dropped_unknown_items=corpus.dropped_unknown_items,
    )


def keyword_tags(title: str, vocabulary: list[str]) -> list[str]:
    """Deterministic keyword tagger: vocabulary terms appearing in the title.

    Matching is case-insensitive on whitespace-delimited words. Used to
    produce category tags for synthetic corpora.
    """
    words = {w.strip(".,;:()").lower() for w in title.split()}
    return [term for term in sorted(vocabulary) if term.lower() in words]


# ---------------------------------------------------------------------------
# Preprocessing


def preprocess(
    corpus: Corpus,
    scheme_attributes: list[str] | tuple[str, ...] = (),
    min_interactions: int = 30,
    max_history: int = 50,
) -> Corpus:
    """Filter, truncate and chronologically split each user's timeline.

    Keeps interactions with rating > 3 whose item carries a non-blank value
    for every scheme attribute, drops users left with fewer than
    ``min_interactions``, truncates to the ``max_history`` most recent
    interactions, then marks an 80/10/10 chronological split per user (test
    and valid sizes rounded up).
    """
    if min_interactions < 1:
        raise ValueError("min_interactions must be >= 1")
    if max_history < min_interactions:
        raise ValueError("max_history must be >= min_interactions")
    for attr in scheme_attributes:
        if attr not in ALL_ATTRIBUTES:
            raise ValueError(f"unknown attribute: {attr}")

    complete_items = {
        item_id: item
        for item_id, item in corpus.items.items()
        if all(item.has_attribute(a) for a in scheme_attributes)
    }

    users: dict[str, list[Interaction]] = {}
    split_marks: dict[str, SplitMark] = {}
    for user_id, interactions in corpus.users.items():
        kept = [
            r for r in interactions if r.rating > 3 and r.item_id in complete_items
        ]
        if len(kept) < min_interactions:
            continue
        kept = kept[-max_history:]
        n = len(kept)
        n_test = math.ceil(0.1 * n)
        n_valid = min(math.ceil(0.1 * n), n - n_test)
        users[user_id] = kept
        split_marks[user_id] = SplitMark(
            train_end=n - n_test - n_valid, valid_end=n - n_test
        )

    if not users:
        raise CorpusError(
            "preprocessing removed every user "
            f"(items with complete attributes: {len(complete_items)}/{corpus.n_items}, "
            f"min_interactions={min_interactions})"
        )
    return Corpus(
        items=complete_items,
        users=users,
        split_marks=split_marks,
        skipped_lines=corpus.skipped_lines,
        dropped_unknown_items=corpus.dropped_unknown_items,
    )


# ---------------------------------------------------------------------------
# Attribute bucketing


@dataclass(frozen=True)
class AttributeBucketing:
    """Quantile partition of a numeric attribute into labeled buckets.

    ``edges`` are the B-1 interior cut points; bucket k covers
    [edge_{k-1}, edge_k) with the first and last buckets open-ended, so
    out-of-range values clamp to the outermost buckets.
    """

    attribute: str
    edges: tuple[float, ...]
    labels: tuple[str, ...]

    def __post_init__(self):
        if len(self.labels) != len(self.edges) + 1:
            raise ValueError("need exactly one more label than edges")
        if any(b <= a for a, b in zip(self.edges, self.edges[1:])):
            raise ValueError("edges must be strictly increasing")

    @property
    def n_buckets(self) -> int:
        return len(self.labels)

    def to_document(self) -> dict:
        return {
            "version": 1,
            "attribute": self.attribute,
            "edges": list(self.edges),
            "labels": list(self.labels),
        }

    @classmethod
    def from_document(cls, doc: dict) -> "AttributeBucketing":
        if doc.get("version") != 1:
            raise CorpusError(f"unsupported bucketing document version: {doc.get('version')}")
        return cls(
            attribute=doc["attribute"],
            edges=tuple(float(e) for e in doc["edges"]),
            labels=tuple(doc["labels"]),
        )


def _format_bound(value: float) -> str:
    if float(value).is_integer():
        return str(int(value))
    return f"{value:.2f}".rstrip("0").rstrip(".")


def _bucket_labels(edges: list[float], lo: float, hi: float, integral: bool) -> list[str]:
    bounds = [lo] + edges + [hi]
    labels = []
    for k in range(len(bounds) - 1):
        left, right = bounds[k], bounds[k + 1]
        # Integer-valued attributes read more naturally without repeating
        # the shared edge: "1-20", "21-40", ...
        if integral and k > 0:
            left = left + 1
        labels.append(f"{_format_bound(left)}-{_format_bound(right)}")
    return labels


def fit_buckets(train_values: list[float], n_buckets: int, attribute: str = "price") -> AttributeBucketing:
    """Fit quantile bucket edges from training-split values only.

    Edges sit at the i/B empirical quantiles (i = 1..B-1); duplicate
    quantile values are collapsed, reducing the bucket count with a warning.
    """
    if n_buckets < 2:
        raise ValueError("n_buckets must be >= 2")
    if not train_values:
        raise ValueError("no training values to fit buckets on")
    values = sorted(float(v) for v in train_values)
    if any(math.isnan(v) for v in values):
        raise ValueError("training values contain NaN")
    n = len(values)

    edges: list[float] = []
    for i in range(1, n_buckets):
        edge = values[math.ceil(i * n / n_buckets) - 1]
        if not edges or edge > edges[-1]:
            edges.append(edge)
    # An edge equal to the minimum would leave the first bucket empty.
    edges = [e for e in edges if e > values[0]]
    if len(edges) < n_buckets - 1:
        log.warning(
            "%s: collapsed duplicate quantiles, %d buckets instead of %d",
            attribute, len(edges) + 1, n_buckets,
        )

    integral = all(float(v).is_integer() for v in values)
    labels = _bucket_labels(edges, values[0], values[-1], integral)
    return AttributeBucketing(attribute=attribute, edges=tuple(edges), labels=tuple(labels))


def assign_bucket(bucketing: AttributeBucketing, value: float) -> str:
    """Label of the half-open bucket [lo, hi) containing value.

    Values beyond the fitted range clamp to the outermost buckets; a value
    equal to an interior edge belongs to the higher bucket.
    """
    value = float(value)
    if math.isnan(value):
        raise ValueError(f"{bucketing.attribute}: cannot bucket NaN")
    if value < 0:
        raise ValueError(f"{bucketing.attribute}: cannot bucket negative value {value}")
    index = 0
    for edge in bucketing.edges:
        if value >= edge:
            index += 1
        else:
            break
    return bucketing.labels[index]


def fit_all_buckets(corpus: Corpus, n_buckets: int = 5) -> dict[str, AttributeBucketing]:
    """Fit bucketings for every bucketed attribute from the train split."""
    out = {}
    for attr in BUCKETED_ATTRIBUTES:
        values = corpus.train_attribute_values(attr)
        if values:
            out[attr] = fit_buckets(values, n_buckets, attribute=attr)
    return out


# ---------------------------------------------------------------------------
# Serialization (processed-corpus artifact)


def corpus_to_document(corpus: Corpus) -> dict:
    return {
        "version": 1,
        "items": [
            {
                "item_id": item.item_id,
                "title": item.title,
                "price": item.price,
                "rank": item.sales_rank,
                "brand": item.brand,
                "categories": sorted(item.categories),
            }
            for _, item in sorted(corpus.items.items())
        ],
        "users": {
            user_id: [
                {"item_id": r.item_id, "rating": r.rating, "timestamp": r.timestamp}
                for r in corpus.users[user_id]
            ]
            for user_id in sorted(corpus.users)
        },
        "split_marks": {
            user_id: [mark.train_end, mark.valid_end]
            for user_id, mark in sorted(corpus.split_marks.items())
        },
    }


def corpus_from_document(doc: dict) -> Corpus:
    if doc.get("version") != 1:
        raise CorpusError(f"unsupported corpus document version: {doc.get('version')}")
    items = {}
    for rec in doc["items"]:
        items[rec["item_id"]] = Item(
            item_id=rec["item_id"],
            title=rec["title"],
            price=rec["price"],
            sales_rank=rec["rank"],
            brand=rec["brand"],
            categories=frozenset(rec["categories"]),
        )
    users = {
        user_id: [
            Interaction(
                user_id=user_id,
                item_id=r["item_id"],
                rating=r["rating"],
                timestamp=r["timestamp"],
            )
            for r in recs
        ]
        for user_id, recs in doc["users"].items()
    }
    split_marks = {
        user_id: SplitMark(train_end=m[0], valid_end=m[1])
        for user_id, m in doc["split_marks"].items()
    }
    return Corpus(items=items, users=users, split_marks=split_marks)
