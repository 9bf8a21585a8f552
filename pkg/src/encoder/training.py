from dataclasses import dataclass
from typing import Iterable, Optional, Protocol, Sequence

import numpy as np

from logger import logger
from src.core.errors import ArgumentError, NumericalError
from src.data.dataset import LabeledDataset, PayloadKind, payload_matrix
from src.data.episodes import Batch, sample_batch
from src.data.splits import ClassSplit
from src.encoder.mlp import forward_loss, sgd_step
from src.encoder.params import EncoderParams
from src.encoder.rotation import augment_with_rotations


class StopFlag(Protocol):
    def is_set(self) -> bool:
        ...


@dataclass(frozen=True)
class TrainHyper:
    learning_rate: float = 0.05
    alpha: float = 0.5
    epochs_per_round: int = 1
    batches_per_epoch: int = 10
    way: int = 10  # L
    shot: int = 4  # Z

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ArgumentError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.alpha < 0:
            raise ArgumentError(f"alpha must be >= 0, got {self.alpha}")
        if self.epochs_per_round < 0 or self.batches_per_epoch < 1 or self.way < 1 or self.shot < 1:
            raise ArgumentError("epochs_per_round must be >= 0; batches_per_epoch, way and shot positive")

    @property
    def batch_size(self) -> int:
        return self.way * self.shot


class ClassIndex:
    """Maps global meta-train class ids onto class-head rows 0..C-1 (sorted order)"""

    def __init__(self, class_ids: Iterable[int]):
        self.class_ids = sorted(int(c) for c in class_ids)
        self._index = {c: i for i, c in enumerate(self.class_ids)}

    def __len__(self) -> int:
        return len(self.class_ids)

    def __call__(self, class_ids: Sequence[int]) -> np.ndarray:
        return np.array([self._index[int(c)] for c in class_ids], dtype=np.int64)


@dataclass(frozen=True)
class PreparedBatch:
    """Batch after per-learner preprocessing, ready for forward_loss"""

    inputs: np.ndarray
    class_labels: np.ndarray
    rot_labels: Optional[np.ndarray]


def prepare_batch(batch: Batch, class_index: ClassIndex, use_rotation: bool) -> PreparedBatch:
    if use_rotation:
        images, class_ids, rot_labels = augment_with_rotations(batch)
        return PreparedBatch(payload_matrix(images), class_index(class_ids), rot_labels)
    return PreparedBatch(payload_matrix(i.payload for i in batch.items), class_index(batch.class_ids), None)


def uses_rotation(dataset: LabeledDataset) -> bool:
    """Rotation augmentation applies to square raster corpora only"""
    shape = dataset.payload_shape
    return dataset.payload_kind == PayloadKind.RASTER and len(shape) == 2 and shape[0] == shape[1]


class TrainingDiverged(NumericalError):
    """A step went non-finite; ``params`` are the last finite parameters of the epoch"""

    def __init__(self, message: str, params: EncoderParams):
        super().__init__(message)
        self.params = params


def train_on_batches(params: EncoderParams, batches: Iterable[PreparedBatch], hyper: TrainHyper) -> EncoderParams:
    """One SGD step per batch; raises TrainingDiverged on a non-finite loss or update"""
    for batch in batches:
        try:
            result = forward_loss(params, batch.inputs, batch.class_labels, batch.rot_labels, hyper.alpha)
        except NumericalError as e:
            raise TrainingDiverged(str(e), params) from e
        updated = sgd_step(params, result.grads, hyper.learning_rate)
        if not updated.is_finite():
            raise TrainingDiverged("SGD update produced non-finite weights", params)
        params = updated
    return params


def train_epochs(params: EncoderParams, dataset: LabeledDataset, split: ClassSplit, hyper: TrainHyper,
                 stop_flag: StopFlag, rng: np.random.Generator) -> EncoderParams:
    """Non-episodic training: epochs_per_round x batches_per_epoch balanced batches.

    The stop flag is read at epoch boundaries. A numerical failure ends the
    round and returns the last finite parameters.
    """
    class_index = ClassIndex(split.meta_train)
    rotation = uses_rotation(dataset)
    for epoch in range(hyper.epochs_per_round):
        if stop_flag.is_set():
            logger.debug(f"Stop requested before epoch {epoch}")
            break
        for _ in range(hyper.batches_per_epoch):
            batch = sample_batch(dataset, split.meta_train, hyper.way, hyper.shot, rng)
            try:
                params = train_on_batches(params, [prepare_batch(batch, class_index, rotation)], hyper)
            except NumericalError as e:
                logger.warning(f"Aborting round at epoch {epoch}: {e}")
                return params
    return params
