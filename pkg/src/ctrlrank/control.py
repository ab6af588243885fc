"""Control schemes, token sampling, satisfaction and control scores.

A control scheme is an ordered set of attribute kinds the user places under
control; a control token pins one attribute to a concrete value (a bucket
label for price/rank, an exact string for brand/category). Each candidate
earns one point per satisfied token, and the ground-truth candidate earns
one extra point; the resulting integer vector is the graded relevance that
drives both the pairwise training loss and the controllability metrics.
"""

from __future__ import annotations

import string
from dataclasses import dataclass

import numpy as np

from .corpus import (
    ALL_ATTRIBUTES,
    BUCKETED_ATTRIBUTES,
    AttributeBucketing,
    Item,
    SequenceWindow,
    assign_bucket,
)

INDEX_LETTERS = string.ascii_uppercase


@dataclass(frozen=True)
class ControlScheme:
    """Ordered list of distinct controlled attribute kinds (length N_C >= 1)."""

    attributes: tuple[str, ...]

    def __post_init__(self):
        if not self.attributes:
            raise ValueError("a control scheme needs at least one attribute")
        if len(set(self.attributes)) != len(self.attributes):
            raise ValueError("duplicate attribute kinds in scheme")
        for attr in self.attributes:
            if attr not in ALL_ATTRIBUTES:
                raise ValueError(f"unknown attribute: {attr}")

    @property
    def n_tokens(self) -> int:
        return len(self.attributes)

    def name(self) -> str:
        return "+".join(self.attributes)


@dataclass(frozen=True)
class ControlToken:
    attribute: str
    value: str

    def __post_init__(self):
        if self.attribute not in ALL_ATTRIBUTES:
            raise ValueError(f"unknown attribute: {self.attribute}")
        if not self.value:
            raise ValueError("token value must be nonempty")

    def render(self) -> str:
        return f"<{self.attribute}>{self.value}"


@dataclass(frozen=True)
class SatisfactionMatrix:
    """Binary candidate-by-token satisfaction entries and their row sums m."""

    entries: tuple[tuple[int, ...], ...]

    @property
    def m(self) -> tuple[int, ...]:
        return tuple(sum(row) for row in self.entries)


@dataclass(frozen=True)
class ControlScoreVector:
    """Per-candidate control scores r_i = m_i plus 1 for the ground truth."""

    r: tuple[int, ...]
    gt_index: int | None = None


def item_token_value(
    item: Item, attribute: str, bucketing: dict[str, AttributeBucketing]
) -> str:
    """The token value this item would carry for an attribute.

    Bucketed attributes map through their fitted bucketing; brand returns
    the item's brand verbatim. Category has no single value (an item may
    carry several) and is rejected here.
    """
    if attribute in BUCKETED_ATTRIBUTES:
        if attribute not in bucketing:
            raise ValueError(f"no bucketing fitted for {attribute}")
        value = item.attribute_value(attribute)
        if value is None:
            raise ValueError(f"item {item.item_id} has no {attribute}")
        return assign_bucket(bucketing[attribute], float(value))
    if attribute == "brand":
        if not item.brand:
            raise ValueError(f"item {item.item_id} has no brand")
        return item.brand
    raise ValueError(f"{attribute} has no single token value per item")


def satisfies(
    item: Item, token: ControlToken, bucketing: dict[str, AttributeBucketing]
) -> bool:
    """Whether this item meets one control token.

    Bucketed kinds compare the item's bucket label with the token value
    (the token must name a fitted bucket label); brand compares strings
    case-insensitively; category tests case-insensitive set membership.
    """
    attr = token.attribute
    if attr in BUCKETED_ATTRIBUTES:
        if attr not in bucketing:
            raise ValueError(f"no bucketing fitted for {attr}")
        if token.value not in bucketing[attr].labels:
            raise ValueError(f"{token.value!r} is not a {attr} bucket label")
        return item_token_value(item, attr, bucketing) == token.value
    if attr == "brand":
        return (item.brand or "").lower() == token.value.lower()
    # category: membership in the item's category set
    return token.value.lower() in {c.lower() for c in item.categories}


def distinct_attribute_values(
    candidates: list[Item], attribute: str, bucketing: dict[str, AttributeBucketing]
) -> list[str]:
    """Sorted distinct token values for one attribute among the candidates."""
    values: set[str] = set()
    for item in candidates:
        if attribute == "category":
            values.update(item.categories)
        else:
            values.add(item_token_value(item, attribute, bucketing))
    return sorted(values)


def sample_tokens(
    candidates: list[Item],
    scheme: ControlScheme,
    bucketing: dict[str, AttributeBucketing],
    seed: int,
    ordinal: int = 0,
) -> list[ControlToken]:
    """Draw one token per scheme attribute, uniform over the distinct values
    present among the candidates.

    Deterministic given (seed, ordinal); the ordinal is the instance's
    position in its dataset so every instance gets an independent stream.
    """
    if not candidates:
        raise ValueError("cannot sample tokens from an empty candidate list")
    rng = np.random.default_rng((seed, ordinal))
    tokens = []
    for attr in scheme.attributes:
        values = distinct_attribute_values(candidates, attr, bucketing)
        if not values:
            raise ValueError(f"candidates carry no values for {attr}")
        tokens.append(ControlToken(attr, values[int(rng.integers(len(values)))]))
    return tokens


def control_scores(
    candidates: list[Item],
    tokens: list[ControlToken],
    gt_index: int | None,
    bucketing: dict[str, AttributeBucketing],
) -> tuple[SatisfactionMatrix, ControlScoreVector]:
    """Satisfaction entries and control scores r_i = m_i + 1[i = gt_index].

    With no ground truth present, r reduces to the satisfied-token counts.
    gt_index is a 0-based candidate position.
    """
    n = len(candidates)
    if gt_index is not None and not 0 <= gt_index < n:
        raise IndexError(f"gt_index {gt_index} out of bounds for {n} candidates")
    entries = tuple(
        tuple(int(satisfies(item, token, bucketing)) for token in tokens)
        for item in candidates
    )
    matrix = SatisfactionMatrix(entries)
    r = tuple(
        m + (1 if i == gt_index else 0) for i, m in enumerate(matrix.m)
    )
    return matrix, ControlScoreVector(r=r, gt_index=gt_index)


# ---------------------------------------------------------------------------
# Prompt rendering


def _render_item(
    item: Item,
    scheme_attributes: tuple[str, ...],
    bucketing: dict[str, AttributeBucketing],
) -> str:
    """One item line: scheme attributes as tokens, the rest verbatim."""
    parts = []
    for attr in ("price", "rank", "brand"):
        value = item.attribute_value(attr)
        if value is None:
            continue
        if attr in scheme_attributes:
            parts.append(ControlToken(attr, item_token_value(item, attr, bucketing)).render())
        elif attr == "price":
            parts.append(f"price: ${value:g}")
        else:
            parts.append(f"{attr}: {value}")
    if item.categories:
        cats = ", ".join(sorted(item.categories))
        if "category" in scheme_attributes:
            parts.append(" ".join(ControlToken("category", c).render() for c in sorted(item.categories)))
        else:
            parts.append(f"categories: {cats}")
    detail = "; ".join(parts)
    return f"{item.title} ({detail})" if detail else item.title


def render_prompt(
    window: SequenceWindow,
    history_items: list[Item],
    candidates: list[Item],
    tokens: list[ControlToken],
    bucketing: dict[str, AttributeBucketing],
) -> str:
    """Deterministic hybrid prompt: instruction, history, lettered candidates.

    Attribute values covered by the scheme are rendered as `<attr>value`
    tokens in both the history and candidate sections; uncontrolled
    metadata stays verbatim. Candidates are labeled A.. in order.
    """
    if len(candidates) > len(INDEX_LETTERS):
        raise ValueError(f"at most {len(INDEX_LETTERS)} candidates can be letter-indexed")
    scheme_attributes = tuple(t.attribute for t in tokens)

    lines = ["[Instruction]"]
    if tokens:
        rendered = " ".join(t.render() for t in tokens)
        lines.append(
            "Rank the candidate items for this user, honoring the control "
            f"tokens {rendered} while matching the interaction history. "
            "Answer with the candidate index letters in ranked order."
        )
    else:
        lines.append(
            "Rank the candidate items for this user by how well they match "
            "the interaction history. Answer with the candidate index "
            "letters in ranked order."
        )
    lines.append("")
    lines.append("[History]")
    for pos, item in enumerate(history_items, 1):
        lines.append(f"{pos}. {_render_item(item, scheme_attributes, bucketing)}")
    lines.append("")
    lines.append("[Candidates]")
    for pos, item in enumerate(candidates):
        letter = INDEX_LETTERS[pos]
        lines.append(f"{letter}. {_render_item(item, scheme_attributes, bucketing)}")
    return "\n".join(lines)
