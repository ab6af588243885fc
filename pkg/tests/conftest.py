import pytest

from ctrlrank.config import RunConfig
from ctrlrank.corpus import AttributeBucketing, Corpus, Interaction, Item
from ctrlrank.experiments import SynthConfig, generate_synth_with_plants
from ctrlrank.pipeline import run_end_to_end


def make_item(item_id, price=None, rank=None, brand=None, categories=(), title=None):
    return Item(
        item_id=item_id,
        title=title or f"title {item_id}",
        price=price,
        sales_rank=rank,
        brand=brand,
        categories=frozenset(categories),
    )


@pytest.fixture
def price_bucketing():
    """Hand-made price buckets matching the $0-$10 running example."""
    return AttributeBucketing(
        attribute="price",
        edges=(10.0, 25.0, 50.0),
        labels=("0-10", "10-25", "25-50", "50-120"),
    )


@pytest.fixture
def rank_bucketing():
    return AttributeBucketing(
        attribute="rank",
        edges=(100.0, 500.0),
        labels=("1-100", "101-500", "501-2000"),
    )


@pytest.fixture
def bucketing(price_bucketing, rank_bucketing):
    return {"price": price_bucketing, "rank": rank_bucketing}


def make_corpus(items, user_timelines):
    """Corpus from {user: [(item_id, rating, timestamp), ...]}."""
    users = {
        user_id: [
            Interaction(user_id=user_id, item_id=i, rating=r, timestamp=t)
            for i, r, t in timeline
        ]
        for user_id, timeline in user_timelines.items()
    }
    return Corpus(items={i.item_id: i for i in items}, users=users)


@pytest.fixture(scope="session")
def small_synth():
    """Small planted corpus shared by slower integration tests."""
    config = SynthConfig(n_users=80, n_items=400, seed=11)
    corpus, plants = generate_synth_with_plants(config)
    return config, corpus, plants


@pytest.fixture(scope="session")
def small_pipeline(small_synth):
    """End-to-end pipeline result on the small planted corpus."""
    _, corpus, _ = small_synth
    config = RunConfig(
        scheme_attributes=("price", "rank"),
        min_interactions=8,
        max_history=50,
        alpha=0.25,
        seed=11,
    )
    return config, run_end_to_end(corpus, config)
