"""Objective evaluation: configuration -> (error rate, FLOPs).

Contains the forward-pass FLOPs estimator, instant synthetic objectives for
exercising the annealer, the early-termination rule for poor trainings, a
persistent evaluation cache, and the real text-CNN evaluator.
"""

from __future__ import annotations

import enum
import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from . import textcnn
from .corpus import PreparedCorpus
from .pareto import ObjectiveVector
from .search_space import Configuration, SearchSpace, numeric

#: fixed network-shape constants for the synthetic objectives
SYNTHETIC_SENTENCE_LENGTH = 10
SYNTHETIC_EMBEDDING_DIM = 50
SYNTHETIC_CLASS_COUNT = 6

SYNTHETIC_NAMES = ("sphere_proxy", "deceptive_trap")


@dataclass(frozen=True)
class EvaluationRequest:
    config: Configuration
    data_split: str
    seed: int


@dataclass(frozen=True)
class FlopsBreakdown:
    conv_flops: tuple[int, ...]  # one entry per window, ascending window size
    fc_flops: int

    @property
    def total(self) -> int:
        return sum(self.conv_flops) + self.fc_flops


def estimate_flops(
    config: Configuration,
    sentence_length: int,
    embedding_dim: int,
    class_count: int,
) -> FlopsBreakdown:
    """Forward-pass FLOPs, counting each multiply-accumulate as 2 operations.

    Convolution of f filters of height w over n positions costs
    f * (n - w + 1) * 2*w*k; the two fully connected stages cost
    2 * sum(f) * units + 2 * units * classes. Pooling, dropout, and
    activations are excluded from the count.
    """
    n, k = sentence_length, embedding_dim
    conv = []
    total_filters = 0
    for w in textcnn.WINDOWS:
        if w > n:
            raise ValueError(f"window {w} exceeds sentence length {n}")
        f = int(config[f"kernel_count_w{w}"])
        conv.append(f * (n - w + 1) * 2 * w * k)
        total_filters += f
    units = int(config["fc_units"])
    fc = 2 * total_filters * units + 2 * units * class_count
    return FlopsBreakdown(conv_flops=tuple(conv), fc_flops=fc)


def flops_ceiling(
    space: SearchSpace,
    sentence_length: int = SYNTHETIC_SENTENCE_LENGTH,
    embedding_dim: int = SYNTHETIC_EMBEDDING_DIM,
    class_count: int = SYNTHETIC_CLASS_COUNT,
) -> int:
    """Largest FLOPs total the space can produce.

    Valid because the estimate is monotone in every filter count and in the
    fully connected width: the all-maximum configuration attains the bound.
    """
    assignments = {}
    for d in space.domains:
        if d.name in ("kernel_count_w3", "kernel_count_w4", "kernel_count_w5", "fc_units"):
            assignments[d.name] = max(int(v) for v in d.values)
        else:
            assignments[d.name] = d.values[0]
    config = space.configuration(assignments)
    return estimate_flops(config, sentence_length, embedding_dim, class_count).total


class ObjectiveEvaluator(Protocol):
    """What the annealer needs from an objective."""

    space: SearchSpace
    flops_max: int

    def evaluate(self, config: Configuration) -> ObjectiveVector: ...


def _index_fractions(space: SearchSpace, config: Configuration) -> list[float]:
    fractions = []
    for d in space.domains:
        if len(d.values) < 2:
            continue  # pinned domains carry no signal
        fractions.append(d.index_of(config[d.name]) / (len(d.values) - 1))
    return fractions


def evaluate_synthetic(
    name: str, config: Configuration, space: SearchSpace
) -> ObjectiveVector:
    """Deterministic, instantaneous objectives for testing the search loop.

    sphere_proxy: error = mean squared index fraction over the mutable
    domains (0 at all-first-index, 1 at all-last-index).

    deceptive_trap: with t the mean index fraction, error = 0.05 exactly at
    t = 1 (narrow global optimum) and 0.25 + 0.5*t elsewhere, a wide basin
    whose slope points away from the global optimum.

    Both report flops from the estimator under the fixed synthetic
    network-shape constants.
    """
    flops = estimate_flops(
        config,
        SYNTHETIC_SENTENCE_LENGTH,
        SYNTHETIC_EMBEDDING_DIM,
        SYNTHETIC_CLASS_COUNT,
    ).total
    fractions = _index_fractions(space, config)
    if name == "sphere_proxy":
        error = sum(f * f for f in fractions) / len(fractions) if fractions else 0.0
    elif name == "deceptive_trap":
        t = sum(fractions) / len(fractions) if fractions else 0.0
        error = 0.05 if t >= 1.0 else 0.25 + 0.5 * t
    else:
        raise ValueError(f"unknown synthetic objective {name!r}")
    return ObjectiveVector(error_rate=error, flops=flops)


@dataclass
class SyntheticEvaluator:
    """ObjectiveEvaluator adapter around evaluate_synthetic."""

    space: SearchSpace
    name: str
    flops_max: int = field(init=False)

    def __post_init__(self) -> None:
        if self.name not in SYNTHETIC_NAMES:
            raise ValueError(f"unknown synthetic objective {self.name!r}")
        self.flops_max = flops_ceiling(self.space)

    def evaluate(self, config: Configuration) -> ObjectiveVector:
        return evaluate_synthetic(self.name, config, self.space)


class TerminationDecision(enum.Enum):
    CONTINUE = "continue"
    STOP = "stop"


def early_termination_check(
    validation_history: list[float],
    class_count: int,
    chance_margin: float = 0.02,
    patience: int = 3,
) -> TerminationDecision:
    """Stop hopeless trainings early.

    Stops when the first epoch lands below chance + chance_margin, or when
    the best accuracy has not strictly improved for `patience` consecutive
    epochs.
    """
    if not validation_history:
        raise ValueError("validation history is empty")
    if validation_history[0] < 1.0 / class_count + chance_margin:
        return TerminationDecision.STOP
    best = validation_history[0]
    streak = 0
    for acc in validation_history[1:]:
        if acc > best:
            best = acc
            streak = 0
        else:
            streak += 1
    if streak >= patience:
        return TerminationDecision.STOP
    return TerminationDecision.CONTINUE


def _config_digest(config: Configuration, seed: int) -> str:
    payload = json.dumps(
        {"config": [[k, v] for k, v in config.items], "seed": seed},
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()


class EvaluationCache:
    """(config, seed) -> ObjectiveVector; optionally persisted as JSON lines.

    An interrupted run restarted against the same cache file skips every
    training it already finished.
    """

    def __init__(self, path: str | None = None):
        self.path = path
        self._memory: dict[str, ObjectiveVector] = {}
        if path is not None and os.path.exists(path):
            with open(path, "r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    record = json.loads(line)
                    self._memory[record["key"]] = ObjectiveVector(
                        record["error_rate"], record["flops"]
                    )

    def get(self, config: Configuration, seed: int) -> ObjectiveVector | None:
        return self._memory.get(_config_digest(config, seed))

    def put(self, config: Configuration, seed: int, value: ObjectiveVector) -> None:
        key = _config_digest(config, seed)
        self._memory[key] = value
        if self.path is not None:
            record = {
                "key": key,
                "error_rate": value.error_rate,
                "flops": value.flops,
                "config": dict(config.items),
                "seed": seed,
            }
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record) + "\n")


@dataclass
class TextCnnEvaluator:
    """Trains a fresh text CNN per configuration and scores it on the
    validation split. Results are cached by (configuration, seed)."""

    space: SearchSpace
    corpus: PreparedCorpus
    seed: int
    max_epochs: int = 20
    embedding_dim: int = 50
    early_stop_margin: float = 0.02
    early_stop_patience: int = 3
    cache: EvaluationCache = field(default_factory=EvaluationCache)
    flops_max: int = field(init=False)
    trainings: int = field(default=0, init=False)

    def __post_init__(self) -> None:
        self.flops_max = flops_ceiling(
            self.space,
            sentence_length=self.corpus.sentence_length,
            embedding_dim=self.embedding_dim,
            class_count=self.corpus.class_count,
        )

    def evaluate(self, config: Configuration) -> ObjectiveVector:
        return self.evaluate_request(
            EvaluationRequest(config=config, data_split="validation", seed=self.seed)
        )

    def evaluate_request(self, request: EvaluationRequest) -> ObjectiveVector:
        cached = self.cache.get(request.config, request.seed)
        if cached is not None:
            return cached
        result = self._train_and_score(request)
        self.cache.put(request.config, request.seed, result)
        return result

    def _train_and_score(self, request: EvaluationRequest) -> ObjectiveVector:
        corpus = self.corpus
        # per-(config, seed) stream so re-evaluations replay identically
        model_seed = int(_config_digest(request.config, request.seed)[:16], 16)
        rng = np.random.default_rng(model_seed)
        model = textcnn.init_model(
            request.config,
            vocab_size=corpus.vocab_size,
            embedding_dim=self.embedding_dim,
            class_count=corpus.class_count,
            rng=rng,
        )
        settings = textcnn.TrainingSettings.from_configuration(
            request.config, max_epochs=self.max_epochs, seed=model_seed
        )

        def stop(history: list[float]) -> bool:
            decision = early_termination_check(
                history,
                corpus.class_count,
                chance_margin=self.early_stop_margin,
                patience=self.early_stop_patience,
            )
            return decision is TerminationDecision.STOP

        eval_x, eval_y = corpus.split(request.data_split)
        try:
            _, history = textcnn.train(
                model,
                corpus.train_ids,
                corpus.train_labels,
                corpus.validation_ids,
                corpus.validation_labels,
                settings,
                early_stop=stop,
            )
        except textcnn.DivergenceError as exc:
            raise textcnn.DivergenceError(
                f"{exc} (config {dict(request.config.items)})"
            ) from exc
        self.trainings += 1
        if request.data_split == "validation":
            best_acc = max(stats.validation_accuracy for stats in history)
        else:
            best_acc = textcnn.accuracy(model, eval_x, eval_y)
        flops = estimate_flops(
            request.config,
            corpus.sentence_length,
            self.embedding_dim,
            corpus.class_count,
        ).total
        return ObjectiveVector(error_rate=1.0 - best_acc, flops=flops)
