"""Interactive re-ranking service.

Loads the artifacts produced by the CLI pipeline and exposes stateless
endpoints: catalogue schema (attributes, bucket labels, vocabularies),
title search, user histories, and POST /rerank, which retrieves candidates
for a supplied history, applies fixed control tokens (no sampling) and
ranks them with the requested method.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, HTTPException, Query
from pydantic import BaseModel, Field

from .config import ConfigError, RunConfig
from .control import ControlToken, control_scores
from .corpus import (
    ALL_ATTRIBUTES,
    AttributeBucketing,
    BUCKETED_ATTRIBUTES,
    Corpus,
    SequenceWindow,
    corpus_from_document,
)
from .experiments import hard_filter_order, zero_shot_order
from .metrics import control_depth, control_precision, RankedList
from .ranker import ScorerModel, TrainStats, extract_features, rerank_order, score
from .retrieval import RankingInstance, TransitionModel, retrieve_candidates

MAX_SEARCH_RESULTS = 50
METHODS = ("learned", "hard_filter", "zero_shot")


class RerankRequest(BaseModel):
    history: list[str] = Field(min_length=1, max_length=5)
    scheme: list[str] = Field(default_factory=list)
    tokens: dict[str, str] = Field(default_factory=dict)
    method: str = "learned"
    k: int = 6


class RerankEntry(BaseModel):
    item_id: str
    title: str
    score: float
    r: int
    satisfied: list[int]
    retrieval_score: float


class RerankResponse(BaseModel):
    method: str
    tokens: list[dict[str, str]]
    entries: list[RerankEntry]
    cp_at_k: float
    cd: int
    threshold: float
    boundary: int | None = None


class ServiceState:
    """Immutable shared state: corpus, retriever, bucketing, checkpoint."""

    def __init__(
        self,
        corpus: Corpus,
        retriever: TransitionModel,
        bucketing: dict[str, AttributeBucketing],
        model: ScorerModel,
        train_stats: TrainStats,
    ):
        self.corpus = corpus
        self.retriever = retriever
        self.bucketing = bucketing
        self.model = model
        self.train_stats = train_stats
        self.brands = sorted(
            {i.brand for i in corpus.items.values() if i.brand}, key=str.lower
        )
        self.categories = sorted(
            {c for i in corpus.items.values() for c in i.categories}, key=str.lower
        )

    @classmethod
    def from_artifacts(cls, config: RunConfig) -> "ServiceState":
        import json

        out = Path(config.out_dir)
        required = {
            "corpus.json": "prepare",
            "buckets.json": "prepare",
            "retriever.json": "train-retriever",
            "checkpoint.json": "train-ranker",
        }
        docs = {}
        for name, stage in required.items():
            path = out / name
            if not path.is_file():
                raise ConfigError(f"missing artifact {path}; run `{stage}` first")
            docs[name] = json.loads(path.read_text(encoding="utf-8"))
        bucketing = {
            attr: AttributeBucketing.from_document(doc)
            for attr, doc in docs["buckets.json"].items()
            if attr not in ("config_hash", "seed")
        }
        return cls(
            corpus=corpus_from_document(docs["corpus.json"]),
            retriever=TransitionModel.from_document(docs["retriever.json"]),
            bucketing=bucketing,
            model=ScorerModel.from_document(docs["checkpoint.json"]["model"]),
            train_stats=TrainStats.from_document(docs["checkpoint.json"]["train_stats"]),
        )


def _validate_tokens(state: ServiceState, scheme: list[str], tokens: dict[str, str]):
    out = []
    for attr in scheme:
        if attr not in ALL_ATTRIBUTES:
            raise HTTPException(400, f"unknown attribute: {attr}")
        value = tokens.get(attr)
        if not value:
            raise HTTPException(400, f"no token value supplied for {attr}")
        if attr in BUCKETED_ATTRIBUTES:
            labels = state.bucketing.get(attr)
            if labels is None or value not in labels.labels:
                raise HTTPException(400, f"unknown {attr} bucket label: {value}")
        out.append(ControlToken(attr, value))
    return out


def create_app(
    config_or_state: RunConfig | ServiceState, ui_dir: str | Path | None = "frontend"
) -> FastAPI:
    state = (
        config_or_state
        if isinstance(config_or_state, ServiceState)
        else ServiceState.from_artifacts(config_or_state)
    )
    app = FastAPI(title="ctrlrank", version="0.1.0")

    # serve the built steering console when it exists next to the cwd
    if ui_dir is not None and Path(ui_dir, "index.html").is_file():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    @app.get("/health")
    def health():
        return {"status": "ok", "items": state.corpus.n_items, "users": state.corpus.n_users}

    @app.get("/schema")
    def schema():
        return {
            "attributes": list(ALL_ATTRIBUTES),
            "bucket_labels": {
                attr: list(b.labels) for attr, b in sorted(state.bucketing.items())
            },
            "brands": state.brands,
            "categories": state.categories,
            "methods": list(METHODS),
        }

    @app.get("/items")
    def search_items(query: str = Query(default="")):
        needle = query.lower()
        matches = []
        for item_id in sorted(state.corpus.items):
            item = state.corpus.items[item_id]
            if item.title.lower().startswith(needle):
                matches.append(
                    {
                        "item_id": item.item_id,
                        "title": item.title,
                        "brand": item.brand,
                        "price": item.price,
                        "rank": item.sales_rank,
                    }
                )
                if len(matches) >= MAX_SEARCH_RESULTS:
                    break
        return {"items": matches}

    @app.get("/users/{user_id}/history")
    def user_history(user_id: str):
        interactions = state.corpus.users.get(user_id)
        if interactions is None:
            raise HTTPException(404, f"unknown user: {user_id}")
        return {
            "user_id": user_id,
            "items": [
                {
                    "item_id": r.item_id,
                    "title": state.corpus.items[r.item_id].title,
                    "timestamp": r.timestamp,
                }
                for r in interactions
            ],
        }

    @app.post("/rerank", response_model=RerankResponse)
    def handle_rerank(request: RerankRequest):
        if request.method not in METHODS:
            raise HTTPException(400, f"method must be one of {METHODS}")
        if not 2 <= request.k <= 26:
            raise HTTPException(400, "k must be between 2 and 26 (letter indexing)")
        for item_id in request.history:
            if item_id not in state.corpus.items:
                raise HTTPException(404, f"unknown item: {item_id}")
        tokens = _validate_tokens(state, request.scheme, request.tokens)

        window = SequenceWindow(
            user_id="service", history=tuple(request.history), target=request.history[-1]
        )
        try:
            candidates, scores = retrieve_candidates(state.retriever, window, k=request.k)
        except ValueError as exc:
            raise HTTPException(400, str(exc))
        instance = RankingInstance(
            window=window,
            candidates=tuple(candidates),
            retrieval_scores=tuple(scores),
            tokens=tuple(tokens),
            gt_index=None,
        )

        boundary = None
        if request.method == "learned":
            features = extract_features(
                instance, state.corpus.items, state.bucketing, state.train_stats
            )
            model_scores = score(state.model, features)
            order = rerank_order(state.model, features, instance.retrieval_scores)
            shown_scores = [float(model_scores[i]) for i in order]
        elif request.method == "hard_filter":
            order, boundary = hard_filter_order(
                instance, state.corpus.items, state.bucketing
            )
            shown_scores = [instance.retrieval_scores[i] for i in order]
        else:
            order = zero_shot_order(instance)
            shown_scores = [instance.retrieval_scores[i] for i in order]

        matrix, vector = control_scores(
            [state.corpus.items[c] for c in instance.candidates],
            list(instance.tokens),
            None,
            state.bucketing,
        )
        entries = [
            RerankEntry(
                item_id=instance.candidates[i],
                title=state.corpus.items[instance.candidates[i]].title,
                score=shown_scores[pos],
                r=vector.r[i],
                satisfied=list(matrix.entries[i]),
                retrieval_score=instance.retrieval_scores[i],
            )
            for pos, i in enumerate(order)
        ]
        ranked = RankedList(relevance=tuple(e.r for e in entries))
        t = float(len(tokens))
        return RerankResponse(
            method=request.method,
            tokens=[{"attribute": tok.attribute, "value": tok.value} for tok in tokens],
            entries=entries,
            cp_at_k=control_precision(ranked, ranked.length, t),
            cd=control_depth(ranked, t),
            threshold=t,
            boundary=boundary,
        )

    return app
