from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from src.core.errors import DecodeError, ShapeError


class DistanceMode(str, Enum):
    SQUARED_EUCLIDEAN = "squared_euclidean"
    EUCLIDEAN = "euclidean"

    @classmethod
    def parse(cls, value) -> "DistanceMode":
        """Accepts the enum values plus the CLI short form 'squared'"""
        if isinstance(value, cls):
            return value
        if value == "squared":
            return cls.SQUARED_EUCLIDEAN
        return cls(value)


@dataclass(frozen=True, eq=False)
class PrototypeSet:
    prototypes: np.ndarray  # (K, d), row j is c_j

    def __post_init__(self):
        protos = np.asarray(self.prototypes, dtype=np.float64)
        if protos.ndim != 2:
            raise ShapeError(f"Prototypes must form a K x d matrix, got shape {protos.shape}")
        if protos.shape[0] < 2:
            raise DecodeError(f"Need at least 2 classes to decode, got {protos.shape[0]}")
        if not np.all(np.isfinite(protos)):
            raise DecodeError("Prototypes hold non-finite values")
        object.__setattr__(self, "prototypes", protos)

    @property
    def way(self) -> int:
        return self.prototypes.shape[0]

    @property
    def dim(self) -> int:
        return self.prototypes.shape[1]


def group_by_class(embeddings: np.ndarray, labels: np.ndarray, way: int) -> list[np.ndarray]:
    """Split (n, d) support embeddings into one (n_j, d) block per local class"""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    if len(embeddings) != len(labels):
        raise ShapeError(f"{len(embeddings)} embeddings but {len(labels)} labels")
    return [embeddings[labels == j] for j in range(way)]


def compute_prototypes(support_by_class: Sequence[np.ndarray]) -> PrototypeSet:
    """c_j = mean of class j's support embeddings"""
    dims = set()
    prototypes = []
    for j, block in enumerate(support_by_class):
        block = np.asarray(block, dtype=np.float64)
        if block.ndim != 2 or block.shape[0] == 0:
            raise DecodeError(f"Class {j} has no support embeddings")
        dims.add(block.shape[1])
        prototypes.append(block.mean(axis=0))
    if len(dims) > 1:
        raise ShapeError(f"Support embeddings have mixed dims: {sorted(dims)}")
    return PrototypeSet(np.vstack(prototypes))


def distance(a: np.ndarray, b: np.ndarray, mode: DistanceMode = DistanceMode.SQUARED_EUCLIDEAN) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"Vectors differ in shape: {a.shape} vs {b.shape}")
    squared = float(((a - b) ** 2).sum())
    return squared if DistanceMode.parse(mode) == DistanceMode.SQUARED_EUCLIDEAN else float(np.sqrt(squared))


def pairwise_distances(queries: np.ndarray, prototypes: np.ndarray,
                       mode: DistanceMode = DistanceMode.SQUARED_EUCLIDEAN) -> np.ndarray:
    """(n, K) matrix of d(query_i, c_j)"""
    queries = np.asarray(queries, dtype=np.float64)
    if queries.ndim != 2 or queries.shape[1] != prototypes.shape[1]:
        raise ShapeError(f"Query embeddings {queries.shape} do not match prototype dim {prototypes.shape[1]}")
    squared = ((queries[:, None, :] - prototypes[None, :, :]) ** 2).sum(axis=-1)
    if DistanceMode.parse(mode) == DistanceMode.SQUARED_EUCLIDEAN:
        return squared
    return np.sqrt(squared)
