"""Run configuration: one document drives every pipeline stage.

Configs are TOML files with optional sections; every field has a default.
The behavioral fingerprint (config hash) covers everything that changes
results — paths, the output directory and the worker count are excluded,
so re-running elsewhere or with more threads keeps the same hash.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .control import ControlScheme
from .corpus import ALL_ATTRIBUTES
from .metrics import GAINS
from .ranker import ARCHITECTURES, TrainConfig
from .retrieval import AS_RETRIEVED, GT_POLICIES, INJECT_GT


class ConfigError(Exception):
    """Invalid or unreadable run configuration."""


@dataclass
class RunConfig:
    items_path: str = ""
    interactions_path: str = ""
    tags_path: str | None = None
    out_dir: str = "runs/out"

    scheme_attributes: tuple[str, ...] = ("price", "rank")
    fixed_tokens: dict[str, str] = field(default_factory=dict)

    min_interactions: int = 30
    max_history: int = 50
    n_buckets: int = 5

    k: int = 6
    alpha: float = 0.1
    gamma: float = 0.8
    gt_policy_train: str = AS_RETRIEVED
    gt_policy_eval: str = INJECT_GT

    architecture: str = "linear"
    hidden: int = 16
    learning_rate: float = 1e-4
    epochs: int = 3
    batch_size: int = 32
    weight_decay: float = 0.0

    gain: str = "exponential"
    threshold: float | None = None

    seed: int = 0
    workers: int = 1
    synth: dict | None = None

    def __post_init__(self):
        if not 2 <= self.k <= 26:
            raise ConfigError("k must be between 2 and 26 (letter indexing)")
        for attr in self.scheme_attributes:
            if attr not in ALL_ATTRIBUTES:
                raise ConfigError(f"unknown scheme attribute: {attr}")
        if self.gt_policy_train not in GT_POLICIES or self.gt_policy_eval not in GT_POLICIES:
            raise ConfigError(f"gt policies must be one of {GT_POLICIES}")
        if self.fixed_tokens and set(self.fixed_tokens) != set(self.scheme_attributes):
            raise ConfigError(
                "fixed tokens must cover exactly the scheme attributes "
                f"({sorted(self.fixed_tokens)} vs {sorted(self.scheme_attributes)})"
            )
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(f"architecture must be one of {ARCHITECTURES}")
        if self.gain not in GAINS:
            raise ConfigError(f"gain must be one of {GAINS}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @classmethod
    def from_toml(cls, path: str | Path, **overrides) -> "RunConfig":
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
        return cls.from_document(raw, **overrides)

    @classmethod
    def from_document(cls, raw: dict, **overrides) -> "RunConfig":
        paths = raw.get("paths", {})
        scheme = raw.get("scheme", {})
        corpus = raw.get("corpus", {})
        retrieval = raw.get("retrieval", {})
        ranker = raw.get("ranker", {})
        train = raw.get("train", {})
        metrics = raw.get("metrics", {})
        run = raw.get("run", {})
        kwargs = dict(
            items_path=paths.get("items", ""),
            interactions_path=paths.get("interactions", ""),
            tags_path=paths.get("tags"),
            out_dir=paths.get("out", "runs/out"),
            scheme_attributes=tuple(scheme.get("attributes", ("price", "rank"))),
            fixed_tokens=dict(scheme.get("tokens", {})),
            min_interactions=int(corpus.get("min_interactions", 30)),
            max_history=int(corpus.get("max_history", 50)),
            n_buckets=int(corpus.get("n_buckets", 5)),
            k=int(retrieval.get("k", 6)),
            alpha=float(retrieval.get("alpha", 0.1)),
            gamma=float(retrieval.get("gamma", 0.8)),
            gt_policy_train=retrieval.get("gt_policy_train", AS_RETRIEVED),
            gt_policy_eval=retrieval.get("gt_policy_eval", INJECT_GT),
            architecture=ranker.get("architecture", "linear"),
            hidden=int(ranker.get("hidden", 16)),
            learning_rate=float(train.get("learning_rate", 1e-4)),
            epochs=int(train.get("epochs", 3)),
            batch_size=int(train.get("batch_size", 32)),
            weight_decay=float(train.get("weight_decay", 0.0)),
            gain=metrics.get("gain", "exponential"),
            threshold=metrics.get("threshold"),
            seed=int(run.get("seed", 0)),
            workers=int(run.get("workers", 1)),
            synth=raw.get("synth"),
        )
        kwargs.update(overrides)
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def behavioral_document(self) -> dict:
        """Everything that affects computed results (no paths, no workers)."""
        return {
            "scheme_attributes": list(self.scheme_attributes),
            "fixed_tokens": dict(sorted(self.fixed_tokens.items())),
            "min_interactions": self.min_interactions,
            "max_history": self.max_history,
            "n_buckets": self.n_buckets,
            "k": self.k,
            "alpha": self.alpha,
            "gamma": self.gamma,
            "gt_policy_train": self.gt_policy_train,
            "gt_policy_eval": self.gt_policy_eval,
            "architecture": self.architecture,
            "hidden": self.hidden,
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "weight_decay": self.weight_decay,
            "gain": self.gain,
            "threshold": self.threshold,
            "seed": self.seed,
            "synth": self.synth,
        }

    @property
    def config_hash(self) -> str:
        canonical = json.dumps(self.behavioral_document(), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]

    def scheme(self) -> ControlScheme:
        return ControlScheme(tuple(self.scheme_attributes))

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            weight_decay=self.weight_decay,
            seed=self.seed,
        )
