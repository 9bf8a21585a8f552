from dataclasses import dataclass
from typing import Iterable

import numpy as np

from src.core.errors import SamplingError
from src.data.dataset import LabeledDataset, Payload


@dataclass(frozen=True)
class EpisodeItem:
    item_id: int
    payload: Payload
    label: int


@dataclass(frozen=True)
class Episode:
    """K-way N-shot task; labels are local indices 0..K-1 in class draw order"""

    way: int
    shot: int
    query_per_class: int
    class_ids: tuple[int, ...]
    support: tuple[EpisodeItem, ...]
    query: tuple[EpisodeItem, ...]

    @property
    def support_labels(self) -> np.ndarray:
        return np.array([i.label for i in self.support], dtype=np.int64)

    @property
    def query_labels(self) -> np.ndarray:
        return np.array([i.label for i in self.query], dtype=np.int64)

    def item_ids(self) -> set[int]:
        return {i.item_id for i in self.support} | {i.item_id for i in self.query}


@dataclass(frozen=True)
class BatchItem:
    item_id: int
    payload: Payload
    class_id: int


@dataclass(frozen=True)
class Batch:
    """Class-balanced L-way Z-shot training batch with global class ids"""

    way: int
    shot: int
    items: tuple[BatchItem, ...]

    @property
    def size(self) -> int:
        return len(self.items)

    @property
    def class_ids(self) -> np.ndarray:
        return np.array([i.class_id for i in self.items], dtype=np.int64)


def _draw_classes(classes: Iterable[int], way: int, rng: np.random.Generator) -> list[int]:
    pool = sorted(set(int(c) for c in classes))
    if way < 1:
        raise SamplingError(f"Need at least one class per draw, got way={way}")
    if len(pool) < way:
        raise SamplingError(f"Need {way} classes, only {len(pool)} available "
                            f"(short by {way - len(pool)})")
    picks = rng.choice(len(pool), size=way, replace=False)
    return [pool[i] for i in picks]


def _draw_items(dataset: LabeledDataset, class_id: int, count: int, rng: np.random.Generator):
    members = dataset.items_of(class_id)
    if len(members) < count:
        raise SamplingError(f"Class {class_id} has {len(members)} items, {count} needed "
                            f"(short by {count - len(members)})")
    picks = rng.choice(len(members), size=count, replace=False)
    return [members[i] for i in picks]


def sample_episode(dataset: LabeledDataset, classes: Iterable[int], way: int, shot: int, query: int,
                   rng: np.random.Generator) -> Episode:
    """Draw K classes, then N support and Q query items per class, all without replacement"""
    if shot < 1 or query < 0:
        raise SamplingError(f"Invalid episode shape shot={shot} query={query}")

    class_ids = _draw_classes(classes, way, rng)
    support, queries = [], []
    for label, class_id in enumerate(class_ids):
        drawn = _draw_items(dataset, class_id, shot + query, rng)
        support.extend(EpisodeItem(i.item_id, i.payload, label) for i in drawn[:shot])
        queries.extend(EpisodeItem(i.item_id, i.payload, label) for i in drawn[shot:])

    return Episode(way, shot, query, tuple(class_ids), tuple(support), tuple(queries))


def sample_episodes(dataset: LabeledDataset, classes: Iterable[int], count: int, way: int, shot: int,
                    query: int, rng: np.random.Generator) -> list[Episode]:
    classes = sorted(classes)
    return [sample_episode(dataset, classes, way, shot, query, rng) for _ in range(count)]


def sample_batch(dataset: LabeledDataset, classes: Iterable[int], way: int, shot: int,
                 rng: np.random.Generator) -> Batch:
    """Draw L classes and Z items of each; B = L * Z"""
    if shot < 1:
        raise SamplingError(f"Need at least one item per class, got shot={shot}")

    items = []
    for class_id in _draw_classes(classes, way, rng):
        items.extend(BatchItem(i.item_id, i.payload, class_id)
                     for i in _draw_items(dataset, class_id, shot, rng))
    return Batch(way, shot, tuple(items))
