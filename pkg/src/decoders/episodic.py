from enum import Enum
from typing import Sequence

import numpy as np

from src.data.episodes import Episode
from src.decoders.accuracy import EpisodicAccuracy, episodic_accuracy
from src.decoders.mct import MctConfig, mct_predict
from src.decoders.prototypes import compute_prototypes, group_by_class
from src.decoders.protonet import protonet_predict
from src.encoder.providers import EmbeddingProvider


class DecoderKind(str, Enum):
    PROTONET = "protonet"
    MCT = "mct"


def decode_episode(provider: EmbeddingProvider, episode: Episode, kind: DecoderKind = DecoderKind.PROTONET,
                   cfg: MctConfig = MctConfig()) -> np.ndarray:
    """Embed support and query with `provider` and return one class distribution per query"""
    support = provider.embed([i.payload for i in episode.support])
    queries = provider.embed([i.payload for i in episode.query])
    support_by_class = group_by_class(support, episode.support_labels, episode.way)
    if DecoderKind(kind) == DecoderKind.MCT:
        return mct_predict(support_by_class, queries, cfg)
    return protonet_predict(compute_prototypes(support_by_class), queries, cfg.distance_mode)


def evaluate_provider(provider: EmbeddingProvider, episodes: Sequence[Episode],
                      kind: DecoderKind = DecoderKind.PROTONET, cfg: MctConfig = MctConfig()) -> EpisodicAccuracy:
    return episodic_accuracy([decode_episode(provider, e, kind, cfg) for e in episodes],
                             [e.query_labels for e in episodes])
