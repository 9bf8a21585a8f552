from dataclasses import dataclass
from typing import Sequence

import numpy as np

from src.core.errors import ShapeError


@dataclass(frozen=True, eq=False)
class EnsembleFeatures:
    """Per-query concatenation of M learners' K-class distributions, learner-major"""

    matrix: np.ndarray  # (n, M * K)
    num_learners: int
    way: int

    def __post_init__(self):
        if self.matrix.ndim != 2 or self.matrix.shape[1] != self.num_learners * self.way:
            raise ShapeError(f"Feature matrix {self.matrix.shape} does not hold "
                             f"{self.num_learners} x {self.way} probabilities per row")

    def __len__(self) -> int:
        return self.matrix.shape[0]

    def blocks(self) -> np.ndarray:
        """(n, M, K) view of the per-learner distributions"""
        return self.matrix.reshape(len(self), self.num_learners, self.way)


def build_features(distributions: Sequence[np.ndarray]) -> EnsembleFeatures:
    """Row i = concat(learner_1[i], ..., learner_M[i])"""
    if not distributions:
        raise ShapeError("Need at least one learner's distributions")
    arrays = [np.asarray(d, dtype=np.float64) for d in distributions]
    shapes = {a.shape for a in arrays}
    if len(shapes) != 1 or arrays[0].ndim != 2:
        raise ShapeError(f"Learner distributions disagree in shape: {sorted(shapes)}")
    n, way = arrays[0].shape
    return EnsembleFeatures(np.hstack(arrays) if n else np.zeros((0, way * len(arrays))), len(arrays), way)
