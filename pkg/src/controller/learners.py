"""Meta-learners driven by the controller's workers.

A learner owns its parameters. Workers hand it preprocessed batches one
epoch at a time and ask it to score the shared validation episodes; the
learner decides how (and on which thread) that work runs.
"""
import asyncio
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

from logger import logger
from src.controller.estimator import EpochCostEstimator
from src.data.dataset import LabeledDataset
from src.data.episodes import Batch, Episode
from src.data.splits import ClassSplit
from src.decoders.episodic import DecoderKind, evaluate_provider
from src.decoders.mct import MctConfig
from src.encoder.params import EncoderParams
from src.encoder.providers import EmbeddingProvider, IdentityProvider, MlpProvider
from src.encoder.training import (
    ClassIndex, PreparedBatch, TrainHyper, TrainingDiverged, prepare_batch, train_on_batches, uses_rotation,
)


class MetaLearner(ABC):
    kind: str = "learner"
    epochs_per_round: int = 1
    batches_per_epoch: int = 0
    batch_way: int = 1
    batch_shot: int = 1

    @property
    def trainable(self) -> bool:
        return True

    def preprocess(self, batch: Batch) -> Any:
        return batch

    async def train_epoch(self, batches: Sequence[Any]) -> bool:
        """One epoch over the given preprocessed batches; False ends the round early"""
        return True

    @abstractmethod
    async def validate(self, episodes: Sequence[Episode]) -> float:
        """Mean episodic accuracy of the current parameters"""

    @abstractmethod
    def snapshot(self) -> Any:
        """Immutable copy of the current parameters"""

    @abstractmethod
    def provider(self, snapshot: Any) -> EmbeddingProvider:
        ...


class EncoderLearner(MetaLearner):
    """Trains the reference MLP encoder; numeric work runs on a worker thread"""

    kind = "mlp"

    def __init__(self, params: EncoderParams, dataset: LabeledDataset, split: ClassSplit, hyper: TrainHyper,
                 decoder: DecoderKind = DecoderKind.PROTONET, mct: MctConfig = MctConfig()):
        self.params = params
        self.hyper = hyper
        self.decoder = DecoderKind(decoder)
        self.mct = mct
        self.class_index = ClassIndex(split.meta_train)
        self.rotation = uses_rotation(dataset)
        self.epochs_per_round = hyper.epochs_per_round
        self.batches_per_epoch = hyper.batches_per_epoch
        self.batch_way = hyper.way
        self.batch_shot = hyper.shot

    def preprocess(self, batch: Batch) -> PreparedBatch:
        return prepare_batch(batch, self.class_index, self.rotation)

    async def train_epoch(self, batches: Sequence[PreparedBatch]) -> bool:
        try:
            self.params = await asyncio.to_thread(train_on_batches, self.params, batches, self.hyper)
        except TrainingDiverged as e:
            self.params = e.params
            logger.warning(f"Ending round with the last finite parameters: {e}")
            return False
        return True

    async def validate(self, episodes: Sequence[Episode]) -> float:
        result = await asyncio.to_thread(evaluate_provider, MlpProvider(self.params), episodes, self.decoder, self.mct)
        return result.mean

    def snapshot(self) -> EncoderParams:
        return self.params.copy()

    def provider(self, snapshot: EncoderParams) -> EmbeddingProvider:
        return MlpProvider(snapshot)


class IdentityLearner(MetaLearner):
    """Decodes the raw embeddings; nothing to train"""

    kind = "identity"
    epochs_per_round = 0

    def __init__(self, decoder: DecoderKind = DecoderKind.PROTONET, mct: MctConfig = MctConfig()):
        self.decoder = DecoderKind(decoder)
        self.mct = mct

    @property
    def trainable(self) -> bool:
        return False

    async def validate(self, episodes: Sequence[Episode]) -> float:
        result = await asyncio.to_thread(evaluate_provider, IdentityProvider(), episodes, self.decoder, self.mct)
        return result.mean

    def snapshot(self) -> None:
        return None

    def provider(self, snapshot: None) -> EmbeddingProvider:
        return IdentityProvider()


@dataclass
class WorkerState:
    worker_id: int
    rounds_completed: int = 0
    best_valid_accuracy: float = 0.0
    best_checkpoint: Any = None
    stop_requested: asyncio.Event = field(default_factory=asyncio.Event)
    valid_history: list[float] = field(default_factory=list)
    estimator: EpochCostEstimator = field(default_factory=EpochCostEstimator)
    stop_reason: Optional[str] = None
    error: Optional[str] = None

    def improves(self, accuracy: float) -> bool:
        return not self.valid_history or accuracy > self.best_valid_accuracy

    def record_validation(self, accuracy: float, snapshot: Any) -> bool:
        """Keeps the earliest checkpoint reaching the best accuracy; returns True if this one became best"""
        improved = self.improves(accuracy)
        self.valid_history.append(accuracy)
        if improved:
            self.best_valid_accuracy = accuracy
            self.best_checkpoint = snapshot
        return improved

    def request_stop(self, reason: str):
        if not self.stop_requested.is_set():
            self.stop_reason = reason
            self.stop_requested.set()


@dataclass
class LearnerResult:
    worker_id: int
    kind: str
    checkpoint: Any
    best_valid_accuracy: float
    rounds_completed: int
    valid_history: list[float]
    provider: EmbeddingProvider
    stop_reason: Optional[str] = None
    error: Optional[str] = None

    @property
    def validated(self) -> bool:
        return bool(self.valid_history)
