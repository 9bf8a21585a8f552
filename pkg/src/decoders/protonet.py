import numpy as np

from src.core.numeric import softmax
from src.decoders.prototypes import DistanceMode, PrototypeSet, pairwise_distances


def protonet_predict(prototypes: PrototypeSet, query_embs: np.ndarray,
                     mode: DistanceMode = DistanceMode.SQUARED_EUCLIDEAN) -> np.ndarray:
    """Softmax over negative distances to the prototypes; one row per query"""
    return softmax(-pairwise_distances(query_embs, prototypes.prototypes, mode))


def predict_labels(distributions: np.ndarray) -> np.ndarray:
    """Argmax per row; ties resolve to the lowest class index"""
    return np.argmax(distributions, axis=-1)
