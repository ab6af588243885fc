import dataclasses
import filecmp
import logging

import numpy as np
import pytest

from ctrlrank.config import RunConfig
from ctrlrank.control import ControlScheme, ControlToken
from ctrlrank.corpus import SequenceWindow, fit_buckets, sliding_windows
from ctrlrank.experiments import (
    SweepResult,
    SynthConfig,
    generate_synth,
    generate_synth_with_plants,
    hard_filter_order,
    hard_filter_rank,
    threshold_sweep,
    token_count_sweep,
    write_synth_files,
    zero_shot_order,
    zero_shot_rank,
)
from ctrlrank.metrics import control_depth, control_precision, evaluate_run
from ctrlrank.ranker import ScorerModel, ranked_list, rerank
from ctrlrank.retrieval import RankingInstance

from conftest import make_item


def instance_with_m(ms, tokens, items, bucketing, gt_index=None, scores=None):
    """Fixture instance whose candidates satisfy the given match counts."""
    candidates = []
    for k, m in enumerate(ms):
        candidates.append(f"m{m}_{k}")
        items[f"m{m}_{k}"] = make_item(
            f"m{m}_{k}",
            price=6.0 if m >= 1 else 40.0,
            rank=50 if m >= 2 else 900,
            brand="Acme",
        )
    window = SequenceWindow(
        "u", tuple(candidates[:5]), candidates[gt_index] if gt_index is not None else candidates[0]
    )
    return RankingInstance(
        window=window,
        candidates=tuple(candidates),
        retrieval_scores=tuple(scores or [float(len(ms) - i) for i in range(len(ms))]),
        tokens=tuple(tokens),
        gt_index=gt_index,
    )


@pytest.fixture
def filter_world(bucketing):
    items = {}
    tokens = [ControlToken("price", "0-10"), ControlToken("rank", "1-100")]
    return items, tokens, bucketing


class TestHardFilter:
    def test_partition_keeps_retrieval_order(self, filter_world):
        # partition-then-sort oracle: compliant (m=2) first, retrieval order
        items, tokens, bucketing = filter_world
        inst = instance_with_m([2, 0, 2, 1, 2, 0], tokens, items, bucketing)
        order, boundary = hard_filter_order(inst, items, bucketing)
        assert boundary == 3
        assert order == [0, 2, 4, 1, 3, 5]

    def test_all_compliant_is_noop(self, filter_world):
        items, tokens, bucketing = filter_world
        inst = instance_with_m([2, 2, 2, 2, 2, 2], tokens, items, bucketing)
        order, boundary = hard_filter_order(inst, items, bucketing)
        assert order == list(range(6))
        assert boundary == 6

    def test_none_compliant_keeps_retrieval_and_saturates_depth(self, filter_world):
        items, tokens, bucketing = filter_world
        inst = instance_with_m([1, 0, 1, 0, 1, 0], tokens, items, bucketing)
        order, boundary = hard_filter_order(inst, items, bucketing)
        assert order == list(range(6))
        assert boundary == 0
        ranked = hard_filter_rank(inst, items, bucketing)
        assert control_depth(ranked, 2) == 7

    def test_gt_position_tracked(self, filter_world):
        items, tokens, bucketing = filter_world
        inst = instance_with_m([0, 0, 2, 0, 0, 0], tokens, items, bucketing, gt_index=0)
        ranked = hard_filter_rank(inst, items, bucketing)
        assert ranked.gt_position == 2  # pushed below the single complier
        assert ranked.relevance[0] == 2

    def test_filter_maximality(self, filter_world):
        # filter CP at t=N_C is the maximum any ordering can reach whenever
        # compliant candidates exist (GT grades held fixed, no GT bonus)
        items, tokens, bucketing = filter_world
        rng = np.random.default_rng(0)
        for _ in range(50):
            ms = [int(x) for x in rng.integers(0, 3, size=6)]
            if not any(m == 2 for m in ms):
                continue
            inst = instance_with_m(ms, tokens, items, bucketing)
            ranked = hard_filter_rank(inst, items, bucketing)
            best = min(sum(1 for m in ms if m == 2), 3) / 3
            assert control_precision(ranked, 3, 2) == pytest.approx(best)


class TestZeroShot:
    def test_order_equals_retrieval(self, filter_world):
        items, tokens, bucketing = filter_world
        inst = instance_with_m([1, 2, 0, 1, 2, 0], tokens, items, bucketing)
        assert zero_shot_order(inst) == list(range(6))

    def test_equals_zero_parameter_rerank(self, filter_world):
        from ctrlrank.ranker import TrainStats

        items, tokens, bucketing = filter_world
        stats = TrainStats(popularity={}, log_pop_mean=0.0, log_pop_std=0.0)
        rng = np.random.default_rng(1)
        for trial in range(20):
            ms = [int(x) for x in rng.integers(0, 3, size=6)]
            gt = int(rng.integers(6)) if rng.random() < 0.5 else None
            inst = instance_with_m(ms, tokens, items, bucketing, gt_index=gt)
            zs = zero_shot_rank(inst, items, bucketing)
            entries = rerank(ScorerModel("linear"), inst, items, bucketing, stats)
            learned = ranked_list(entries, inst.gt_index)
            assert learned == zs

    def test_filter_dominates_zero_shot_on_compliant_instances(self, filter_world):
        items, tokens, bucketing = filter_world
        rng = np.random.default_rng(2)
        for _ in range(100):
            ms = [int(x) for x in rng.integers(0, 3, size=6)]
            if not any(m == 2 for m in ms):
                continue
            scores = sorted((float(x) for x in rng.uniform(0, 1, size=6)), reverse=True)
            inst = instance_with_m(ms, tokens, items, bucketing, scores=scores)
            hf = control_precision(hard_filter_rank(inst, items, bucketing), 3, 2)
            zs = control_precision(zero_shot_rank(inst, items, bucketing), 3, 2)
            assert hf >= zs


class TestThresholdSweep:
    def _lists(self, seed=0, n=40):
        rng = np.random.default_rng(seed)
        from ctrlrank.metrics import RankedList

        return [
            RankedList(
                relevance=tuple(int(x) for x in rng.integers(0, 4, size=6)),
                gt_position=int(rng.integers(1, 7)),
            )
            for _ in range(n)
        ]

    def test_monotone_in_threshold(self):
        sweep = threshold_sweep(self._lists(), ControlScheme(("price", "rank", "brand")))
        values = [p[0] for p in sweep.points]
        assert values == [3.0, 2.0, 1.0]
        cps = [p[1].cp_at_3 for p in sweep.points]
        cds = [p[1].cd for p in sweep.points]
        assert all(b >= a for a, b in zip(cps, cps[1:]))
        assert all(b <= a for a, b in zip(cds, cds[1:]))

    def test_top_point_matches_main_report(self):
        lists = self._lists(seed=5)
        scheme = ControlScheme(("price", "rank"))
        sweep = threshold_sweep(lists, scheme, seed=3, config_hash="h")
        main = evaluate_run(lists, scheme.name(), 2, seed=3, config_hash="h")
        assert sweep.points[0][1] == main

    def test_single_instance_hand_values(self):
        from ctrlrank.metrics import RankedList

        ranked = RankedList(relevance=(2, 0, 1, 0, 0, 0), gt_position=1)
        sweep = threshold_sweep([ranked], ControlScheme(("price", "rank")))
        by_t = {t: r for t, r in sweep.points}
        assert by_t[2.0].cp_at_3 == pytest.approx(1 / 3)
        assert by_t[2.0].cd == 1
        assert by_t[1.0].cp_at_3 == pytest.approx(2 / 3)
        assert by_t[1.0].cd == 1

    def test_single_token_scheme_rejected(self):
        with pytest.raises(ValueError):
            threshold_sweep(self._lists(), ControlScheme(("price",)))

    def test_axis_ordering_enforced(self):
        lists = self._lists()
        report = evaluate_run(lists, "s", 2)
        with pytest.raises(ValueError):
            SweepResult(axis="threshold", points=((1.0, report), (1.0, report)))


class TestTokenCountSweep:
    def test_nested_schemes_on_synth(self, small_synth):
        _, corpus, _ = small_synth
        config = RunConfig(
            scheme_attributes=("price", "rank", "brand"),
            min_interactions=8,
            max_history=50,
            alpha=0.25,
            seed=11,
        )
        schemes = [
            ControlScheme(("price",)),
            ControlScheme(("price", "rank")),
            ControlScheme(("price", "rank", "brand")),
        ]
        sweep = token_count_sweep(corpus, schemes, config)
        assert [p[0] for p in sweep.points] == [1.0, 2.0, 3.0]
        cps = [p[1].cp_at_3 for p in sweep.points]
        assert all(b <= a for a, b in zip(cps, cps[1:]))  # stricter schemes
        for _, report in sweep.points:
            assert 0.0 <= report.ndcg_at_5 <= 1.0
            assert report.threshold == report.scheme.count("+") + 1

    def test_non_nested_warns(self, small_synth, caplog):
        _, corpus, _ = small_synth
        config = RunConfig(min_interactions=8, max_history=50, seed=11)
        schemes = [ControlScheme(("brand",)), ControlScheme(("price", "rank"))]
        with caplog.at_level(logging.WARNING, logger="ctrlrank.experiments"):
            token_count_sweep(corpus, schemes, config)
        assert any("nested" in r.message for r in caplog.records)


class TestGenerateSynth:
    def test_deterministic_files(self, tmp_path):
        config = SynthConfig(n_users=25, n_items=150, seed=5)
        a_dir, b_dir = tmp_path / "a", tmp_path / "b"
        write_synth_files(generate_synth(config), a_dir)
        write_synth_files(generate_synth(config), b_dir)
        for name in ("items.jsonl", "interactions.jsonl", "tags.json"):
            assert filecmp.cmp(a_dir / name, b_dir / name, shallow=False)

    def test_violation_rate_monte_carlo(self):
        # the generator's own law: the window target violates at least one
        # planted home token at the configured rate
        config = SynthConfig(n_users=220, n_items=800, gt_violation_rate=0.3, seed=19)
        corpus, plants = generate_synth_with_plants(config)
        violations = 0
        total = 0
        for user_id in sorted(corpus.users):
            plant = plants[user_id]
            home_price = config.price_values[plant.price_band]
            home_rank = config.rank_values[plant.rank_band]
            item_ids = [r.item_id for r in corpus.users[user_id]]
            for window in sliding_windows(user_id, item_ids, w=6):
                target = corpus.items[window.target]
                compliant = (
                    target.brand == plant.brand
                    and target.price == home_price
                    and target.sales_rank == home_rank
                )
                violations += 0 if compliant else 1
                total += 1
                if total == 2000:
                    break
            if total == 2000:
                break
        assert total == 2000
        assert abs(violations / total - 0.30) <= 0.03

    def test_too_few_items_rejected(self):
        with pytest.raises(ValueError):
            SynthConfig(n_items=4)

    def test_rate_bounds_enforced(self):
        with pytest.raises(ValueError):
            SynthConfig(gt_violation_rate=1.5)

    def test_planted_bands_match_pipeline_buckets(self, small_synth):
        # the discrete band values land in one fitted bucket apiece
        config, raw, _ = small_synth
        from ctrlrank.corpus import assign_bucket, preprocess

        corpus = preprocess(raw, ("price", "rank"), min_interactions=8, max_history=50)
        price_b = fit_buckets(corpus.train_attribute_values("price"), 5, "price")
        labels = [assign_bucket(price_b, v) for v in config.price_values]
        assert len(set(labels)) == len(labels)
