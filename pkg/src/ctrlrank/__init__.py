"""Attribute-controlled sequential re-ranking toolkit."""

from .corpus import (
    AttributeBucketing,
    Corpus,
    Interaction,
    Item,
    SequenceWindow,
    assign_bucket,
    fit_buckets,
    load_corpus,
    preprocess,
    sliding_windows,
)
from .control import (
    ControlScheme,
    ControlToken,
    control_scores,
    render_prompt,
    sample_tokens,
    satisfies,
)
from .retrieval import (
    RankingInstance,
    TransitionModel,
    build_instances,
    fit_retriever,
    retrieve_candidates,
    score_next,
)
from .ranker import (
    ScorerModel,
    TrainConfig,
    build_pairs,
    extract_features,
    ranknet_loss_and_grad,
    rerank,
    score,
    train,
)
from .metrics import (
    EvalReport,
    RankedList,
    control_depth,
    control_precision,
    evaluate_run,
    hit_rate_at_k,
    ndcg_at_k,
)
from .experiments import (
    SweepResult,
    SynthConfig,
    generate_synth,
    hard_filter_rank,
    threshold_sweep,
    token_count_sweep,
    zero_shot_rank,
)
from .config import RunConfig

__version__ = "0.1.0"
