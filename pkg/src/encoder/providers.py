from typing import Protocol, Sequence, Union

import numpy as np

from src.core.errors import ShapeError
from src.data.dataset import Payload, Raster, payload_matrix
from src.encoder.mlp import embed
from src.encoder.params import EncoderParams


class EmbeddingProvider(Protocol):
    """Anything that maps a list of payloads to an (n, d) embedding matrix"""

    def embed(self, payloads: Sequence[Payload]) -> np.ndarray:
        ...


class IdentityProvider:
    """Passes precomputed embeddings through unchanged"""

    def embed(self, payloads: Union[np.ndarray, Sequence[Payload]]) -> np.ndarray:
        if isinstance(payloads, np.ndarray):
            return np.asarray(payloads, dtype=np.float64)
        if any(isinstance(p, Raster) for p in payloads):
            raise ShapeError("Identity provider only accepts embedding payloads")
        return payload_matrix(payloads)


class MlpProvider:
    """Frozen snapshot of the reference MLP encoder"""

    def __init__(self, params: EncoderParams):
        self.params = params

    def embed(self, payloads: Union[np.ndarray, Sequence[Payload]]) -> np.ndarray:
        return embed(self.params, payloads).astype(np.float64)
