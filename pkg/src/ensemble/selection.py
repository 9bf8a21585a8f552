from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from logger import logger
from src.core.errors import ShapeError, TrainError
from src.decoders.accuracy import episodic_accuracy
from src.ensemble.features import EnsembleFeatures
from src.ensemble.models import EnsembleModel, GaussianNB, MajorityVote, MultinomialLinear

LabeledFeatures = tuple[EnsembleFeatures, np.ndarray]


@dataclass(frozen=True)
class LinearHyper:
    iterations: int = 500
    learning_rate: float = 0.1
    l2: float = 1e-3


@dataclass
class EnsembleSelection:
    best: EnsembleModel
    accuracies: dict[str, float] = field(default_factory=dict)
    episodes_evaluated: int = 0

    @property
    def best_accuracy(self) -> float:
        return self.accuracies[self.best.variant.value]


def _stack(episodes: Sequence[LabeledFeatures]) -> tuple[np.ndarray, np.ndarray, int, int]:
    if not episodes:
        raise TrainError("Need at least one training episode")
    shapes = {(features.num_learners, features.way) for features, _ in episodes}
    if len(shapes) != 1:
        raise ShapeError(f"Training episodes disagree in learners x way: {sorted(shapes)}")
    num_learners, way = shapes.pop()

    matrix = np.vstack([features.matrix for features, _ in episodes])
    labels = np.concatenate([np.asarray(y, dtype=np.int64) for _, y in episodes])
    if len(labels) != len(matrix):
        raise ShapeError(f"{len(labels)} labels for {len(matrix)} feature rows")
    if len(labels) and (labels.min() < 0 or labels.max() >= way):
        raise TrainError(f"Labels must lie in [0, {way})")
    present = set(np.unique(labels).tolist())
    for j in range(way):
        if j not in present:
            raise TrainError(f"Class {j} is absent from all training episodes")
    return matrix, labels, num_learners, way


def train_candidates(episodes: Sequence[LabeledFeatures], linear: LinearHyper = LinearHyper()) -> list[EnsembleModel]:
    """Fit every candidate on the pooled training queries; order is vote, linear, gaussian NB"""
    matrix, labels, num_learners, way = _stack(episodes)
    candidates = [
        MajorityVote(num_learners, way),
        MultinomialLinear(num_learners, way, iterations=linear.iterations,
                          learning_rate=linear.learning_rate, l2=linear.l2),
        GaussianNB(num_learners, way),
    ]
    for candidate in candidates:
        candidate.fit(matrix, labels)
    logger.debug(f"Trained {len(candidates)} ensemble candidates on {len(labels)} queries")
    return candidates


def select_best(candidates: Sequence[EnsembleModel], test_episodes: Sequence[LabeledFeatures]) -> EnsembleSelection:
    if not candidates:
        raise TrainError("No ensemble candidates to select from")
    if not test_episodes:
        raise ShapeError("Need at least one test episode")

    labels = [np.asarray(y) for _, y in test_episodes]
    accuracies = {}
    best = None
    for candidate in candidates:
        score = episodic_accuracy([candidate.predict(features) for features, _ in test_episodes], labels).mean
        accuracies[candidate.variant.value] = score
        if best is None or score > accuracies[best.variant.value]:
            best = candidate

    logger.info(f"Selected ensemble '{best.variant.value}' "
                f"({', '.join(f'{k}={v:.4f}' for k, v in accuracies.items())})")
    return EnsembleSelection(best, accuracies, len(test_episodes))
