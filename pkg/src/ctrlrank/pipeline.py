"""In-memory end-to-end pipeline shared by the CLI, sweeps and tests.

Stages: preprocess the corpus for a scheme, fit buckets on the train
split, fit the transition retriever on train windows, build instances per
split, train the scorer with validation-based checkpoint selection, and
evaluate the test split.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .config import RunConfig
from .control import ControlScheme
from .corpus import (
    AttributeBucketing,
    Corpus,
    SequenceWindow,
    TEST,
    TRAIN,
    VALID,
    fit_all_buckets,
    preprocess,
)
from .metrics import EvalReport, RankedList, evaluate_run
from .ranker import (
    ScorerModel,
    TrainResult,
    TrainStats,
    ranked_list,
    rerank,
    train,
)
from .retrieval import (
    RankingInstance,
    TransitionModel,
    build_instances,
    fit_retriever,
)

WINDOW_SIZE = 6
#: Per-split offsets keep token-sampling streams disjoint across splits.
SPLIT_SEED_OFFSET = {TRAIN: 0, VALID: 1, TEST: 2}


def split_windows(windows: list[SequenceWindow]) -> dict[str, list[SequenceWindow]]:
    out: dict[str, list[SequenceWindow]] = {TRAIN: [], VALID: [], TEST: []}
    for window in windows:
        out[window.split].append(window)
    return out


def instance_seed(seed: int, split: str) -> int:
    return seed * 8 + SPLIT_SEED_OFFSET[split]


@dataclass
class PipelineResult:
    corpus: Corpus
    bucketing: dict[str, AttributeBucketing]
    retriever: TransitionModel
    train_stats: TrainStats
    instances: dict[str, list[RankingInstance]]
    model: ScorerModel
    train_result: TrainResult
    ranked_lists: list[RankedList]
    report: EvalReport
    scheme: ControlScheme = field(repr=False, default=None)


def build_split_instances(
    corpus: Corpus,
    retriever: TransitionModel,
    scheme: ControlScheme,
    bucketing: dict[str, AttributeBucketing],
    config: RunConfig,
    windows_by_split: dict[str, list[SequenceWindow]],
) -> dict[str, list[RankingInstance]]:
    fixed = None
    if config.fixed_tokens:
        from .control import ControlToken

        fixed = [ControlToken(attr, config.fixed_tokens[attr]) for attr in scheme.attributes]
    instances = {}
    for split, windows in windows_by_split.items():
        policy = config.gt_policy_train if split == TRAIN else config.gt_policy_eval
        instances[split] = build_instances(
            windows,
            retriever,
            scheme,
            corpus.items,
            bucketing,
            k=config.k,
            gt_policy=policy,
            seed=instance_seed(config.seed, split),
            workers=config.workers,
            fixed_tokens=fixed,
        )
    return instances


def rank_instances(
    model: ScorerModel,
    instances: list[RankingInstance],
    corpus: Corpus,
    bucketing: dict[str, AttributeBucketing],
    train_stats: TrainStats,
    workers: int = 1,
) -> list[RankedList]:
    """Learned ranking per instance, in input order (worker-count neutral)."""

    def one(inst: RankingInstance) -> RankedList:
        entries = rerank(model, inst, corpus.items, bucketing, train_stats)
        return ranked_list(entries, inst.gt_index)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, instances))
    return [one(inst) for inst in instances]


def run_end_to_end(raw_corpus: Corpus, config: RunConfig) -> PipelineResult:
    """Full pipeline on an already-loaded corpus: preprocess through test
    evaluation. Deterministic given the config (worker count excluded)."""
    scheme = config.scheme()
    corpus = preprocess(
        raw_corpus,
        scheme.attributes,
        min_interactions=config.min_interactions,
        max_history=config.max_history,
    )
    bucketing = fit_all_buckets(corpus, config.n_buckets)
    windows_by_split = split_windows(corpus.iter_windows(WINDOW_SIZE))
    retriever = fit_retriever(windows_by_split[TRAIN], alpha=config.alpha, gamma=config.gamma)
    train_stats = TrainStats.from_model(retriever)
    instances = build_split_instances(
        corpus, retriever, scheme, bucketing, config, windows_by_split
    )
    model = ScorerModel(
        architecture=config.architecture, hidden=config.hidden, init_seed=config.seed
    )
    result = train(
        model,
        instances[TRAIN],
        config.train_config(),
        corpus.items,
        bucketing,
        train_stats,
        val_instances=instances[VALID] or None,
    )
    lists = rank_instances(
        result.model, instances[TEST], corpus, bucketing, train_stats, config.workers
    )
    report = evaluate_run(
        lists,
        scheme.name(),
        scheme.n_tokens,
        threshold=config.threshold,
        gain=config.gain,
        seed=config.seed,
        config_hash=config.config_hash,
    )
    return PipelineResult(
        corpus=corpus,
        bucketing=bucketing,
        retriever=retriever,
        train_stats=train_stats,
        instances=instances,
        model=result.model,
        train_result=result,
        ranked_lists=lists,
        report=report,
        scheme=scheme,
    )
