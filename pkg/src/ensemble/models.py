from abc import ABC, abstractmethod
from enum import Enum

import numpy as np

from src.core.errors import ShapeError
from src.core.numeric import one_hot, softmax
from src.ensemble.features import EnsembleFeatures

VARIANCE_FLOOR = 1e-6


class EnsembleVariant(str, Enum):
    VOTE = "vote"
    LINEAR = "linear"
    GAUSSIAN_NB = "gaussian_nb"


class EnsembleModel(ABC):
    """Late-fusion model over concatenated learner distributions"""

    variant: EnsembleVariant

    def __init__(self, num_learners: int, way: int):
        self.num_learners = num_learners
        self.way = way

    @property
    def feature_dim(self) -> int:
        return self.num_learners * self.way

    def check(self, features: EnsembleFeatures):
        if features.num_learners != self.num_learners or features.way != self.way:
            raise ShapeError(f"{self.variant.value} expects {self.num_learners} learners x {self.way} classes, "
                             f"got {features.num_learners} x {features.way}")

    def fit(self, matrix: np.ndarray, labels: np.ndarray) -> "EnsembleModel":
        return self

    @abstractmethod
    def predict(self, features: EnsembleFeatures) -> np.ndarray:
        """(n, K) class distributions"""


class MajorityVote(EnsembleModel):
    """Each learner votes its argmax; ties go to the highest summed probability, then the lowest index"""

    variant = EnsembleVariant.VOTE

    def predict(self, features: EnsembleFeatures) -> np.ndarray:
        self.check(features)
        blocks = features.blocks()
        votes = np.argmax(blocks, axis=2)
        counts = one_hot(votes.ravel(), self.way).reshape(len(features), self.num_learners, self.way).sum(axis=1)
        summed = blocks.sum(axis=1)
        contenders = counts == counts.max(axis=1, keepdims=True)
        winners = np.argmax(np.where(contenders, summed, -np.inf), axis=1)
        return one_hot(winners, self.way)


class MultinomialLinear(EnsembleModel):
    """softmax(W [x; 1]) fitted by full-batch gradient descent on L2-regularised cross-entropy"""

    variant = EnsembleVariant.LINEAR

    def __init__(self, num_learners: int, way: int, weights: np.ndarray = None,
                 iterations: int = 500, learning_rate: float = 0.1, l2: float = 1e-3):
        super().__init__(num_learners, way)
        self.weights = np.zeros((way, self.feature_dim + 1)) if weights is None else np.asarray(weights, np.float64)
        if self.weights.shape != (way, self.feature_dim + 1):
            raise ShapeError(f"Linear weights must be {way} x {self.feature_dim + 1}, got {self.weights.shape}")
        self.iterations = iterations
        self.learning_rate = learning_rate
        self.l2 = l2

    @staticmethod
    def _with_bias(matrix: np.ndarray) -> np.ndarray:
        return np.hstack([matrix, np.ones((matrix.shape[0], 1))])

    def fit(self, matrix: np.ndarray, labels: np.ndarray) -> "MultinomialLinear":
        x = self._with_bias(matrix)
        targets = one_hot(labels, self.way)
        penalty_mask = np.ones_like(self.weights)
        penalty_mask[:, -1] = 0.0
        weights = np.zeros_like(self.weights)
        for _ in range(self.iterations):
            probs = softmax(x @ weights.T)
            grad = (probs - targets).T @ x / len(x) + self.l2 * weights * penalty_mask
            weights -= self.learning_rate * grad
        self.weights = weights
        return self

    def predict(self, features: EnsembleFeatures) -> np.ndarray:
        self.check(features)
        return softmax(self._with_bias(features.matrix) @ self.weights.T)


class GaussianNB(EnsembleModel):
    """Per-class independent Gaussians over the M*K features with count-based priors"""

    variant = EnsembleVariant.GAUSSIAN_NB

    def __init__(self, num_learners: int, way: int, means: np.ndarray = None, variances: np.ndarray = None,
                 priors: np.ndarray = None):
        super().__init__(num_learners, way)
        shape = (way, self.feature_dim)
        self.means = np.zeros(shape) if means is None else np.asarray(means, np.float64)
        self.variances = np.ones(shape) if variances is None else np.asarray(variances, np.float64)
        self.priors = np.full(way, 1.0 / way) if priors is None else np.asarray(priors, np.float64)
        if self.means.shape != shape or self.variances.shape != shape or self.priors.shape != (way,):
            raise ShapeError(f"Gaussian NB parameters must be {shape} means/variances and {way} priors")
        self.variances = np.maximum(self.variances, VARIANCE_FLOOR)

    def fit(self, matrix: np.ndarray, labels: np.ndarray) -> "GaussianNB":
        for j in range(self.way):
            rows = matrix[labels == j]
            self.means[j] = rows.mean(axis=0)
            self.variances[j] = np.maximum(rows.var(axis=0), VARIANCE_FLOOR)
        self.priors = np.bincount(labels, minlength=self.way) / len(labels)
        return self

    def predict(self, features: EnsembleFeatures) -> np.ndarray:
        self.check(features)
        x = features.matrix[:, None, :]
        log_likelihood = -0.5 * (np.log(2.0 * np.pi * self.variances)[None]
                                 + (x - self.means[None]) ** 2 / self.variances[None]).sum(axis=2)
        with np.errstate(divide="ignore"):
            log_prior = np.log(self.priors)
        return softmax(log_likelihood + log_prior[None])


def ensemble_predict(model: EnsembleModel, features: EnsembleFeatures) -> np.ndarray:
    return model.predict(features)
