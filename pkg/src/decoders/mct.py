"""Transductive soft k-means decoder.

Starting from the support means, each step scores every query against the
current prototypes and rebuilds each prototype as the mean of its support
set plus all queries weighted by their confidence for that class.
"""
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from src.core.errors import ArgumentError, ShapeError
from src.decoders.prototypes import DistanceMode, PrototypeSet, compute_prototypes
from src.decoders.protonet import protonet_predict

MAX_ITERATIONS = 1000


@dataclass(frozen=True)
class MctConfig:
    iterations: int = 10
    convergence_eps: float = 1e-6
    distance_mode: DistanceMode = DistanceMode.SQUARED_EUCLIDEAN

    def __post_init__(self):
        if not 0 <= self.iterations <= MAX_ITERATIONS:
            raise ArgumentError(f"iterations must lie in [0, {MAX_ITERATIONS}], got {self.iterations}")
        if self.convergence_eps < 0:
            raise ArgumentError(f"convergence_eps must be >= 0, got {self.convergence_eps}")
        object.__setattr__(self, "distance_mode", DistanceMode.parse(self.distance_mode))


def mct_confidence(prototypes: PrototypeSet, query_emb: np.ndarray,
                   mode: DistanceMode = DistanceMode.SQUARED_EUCLIDEAN) -> np.ndarray:
    """q_j(x) for a single query; same form as the ProtoNet distribution"""
    return protonet_predict(prototypes, np.atleast_2d(query_emb), mode)[0]


def mct_update(support_by_class: Sequence[np.ndarray], query_embs: np.ndarray,
               confidences: np.ndarray) -> PrototypeSet:
    """c_j = (sum S_j + sum_x q_j(x) x) / (|S_j| + sum_x q_j(x))"""
    query_embs = np.asarray(query_embs, dtype=np.float64)
    confidences = np.asarray(confidences, dtype=np.float64)
    way = len(support_by_class)
    if query_embs.shape[0] == 0:
        return compute_prototypes(support_by_class)
    if confidences.shape != (query_embs.shape[0], way):
        raise ShapeError(f"Confidences {confidences.shape} do not match {query_embs.shape[0]} queries x {way} classes")

    support_sums = np.vstack([np.asarray(block, dtype=np.float64).sum(axis=0) for block in support_by_class])
    support_counts = np.array([len(block) for block in support_by_class], dtype=np.float64)
    if support_sums.shape[1] != query_embs.shape[1]:
        raise ShapeError(f"Support dim {support_sums.shape[1]} does not match query dim {query_embs.shape[1]}")

    numerator = support_sums + confidences.T @ query_embs
    denominator = support_counts + confidences.sum(axis=0)
    return PrototypeSet(numerator / denominator[:, None])


def mct_predict(support_by_class: Sequence[np.ndarray], query_embs: np.ndarray,
                cfg: MctConfig = MctConfig()) -> np.ndarray:
    """Refine prototypes for up to T steps, then return q^(T) for every query"""
    prototypes = compute_prototypes(support_by_class)
    for _ in range(cfg.iterations):
        confidences = protonet_predict(prototypes, query_embs, cfg.distance_mode)
        updated = mct_update(support_by_class, query_embs, confidences)
        displacement = np.sqrt(((updated.prototypes - prototypes.prototypes) ** 2).sum(axis=1)).max()
        prototypes = updated
        if displacement < cfg.convergence_eps:
            break
    return protonet_predict(prototypes, query_embs, cfg.distance_mode)
