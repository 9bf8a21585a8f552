from dataclasses import dataclass
from typing import Sequence

import numpy as np

from src.core.errors import ShapeError
from src.decoders.protonet import predict_labels


@dataclass(frozen=True)
class EpisodicAccuracy:
    mean: float
    per_episode: list[float]


def episode_accuracy(distributions: np.ndarray, labels: np.ndarray) -> float:
    distributions = np.asarray(distributions)
    labels = np.asarray(labels)
    if distributions.ndim != 2 or distributions.shape[0] != len(labels):
        raise ShapeError(f"{distributions.shape[0] if distributions.ndim else 0} distributions "
                         f"for {len(labels)} queries")
    if len(labels) == 0:
        raise ShapeError("Episode has no queries")
    return float(np.mean(predict_labels(distributions) == labels))


def episodic_accuracy(distributions: Sequence[np.ndarray], labels: Sequence[np.ndarray]) -> EpisodicAccuracy:
    """Per-episode query accuracy and its unweighted mean over episodes"""
    if len(distributions) != len(labels):
        raise ShapeError(f"{len(distributions)} prediction sets for {len(labels)} episodes")
    if not labels:
        raise ShapeError("No episodes to score")
    per_episode = [episode_accuracy(d, y) for d, y in zip(distributions, labels)]
    return EpisodicAccuracy(float(np.mean(per_episode)), per_episode)
