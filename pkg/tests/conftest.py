import numpy as np
import pytest

from src.data.dataset import Item, LabeledDataset, PayloadKind, Raster
from src.data.splits import ClassSplit
from src.data.synthetic import make_blob_embeddings, make_blob_rasters


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def blob_dataset():
    """8 well-separated 2-D blobs, 40 items each"""
    return make_blob_embeddings(num_classes=8, items_per_class=40, seed=3)


@pytest.fixture
def blob_split():
    return ClassSplit([0, 1, 2], [3, 4, 5], [6, 7])


@pytest.fixture
def raster_dataset():
    return make_blob_rasters(num_classes=6, items_per_class=12, seed=5, size=6)


@pytest.fixture
def tiny_embeddings():
    """3 classes x 4 items of 3-d embeddings with predictable values"""
    items = []
    for class_id in range(3):
        for k in range(4):
            items.append(Item(len(items), np.array([class_id * 10.0, k, 1.0]), class_id))
    return LabeledDataset(items, ["a", "b", "c"], PayloadKind.EMBEDDING)


@pytest.fixture
def tiny_rasters():
    items = [Item(i, Raster(np.full((2, 2), (i % 4) / 4.0)), i // 4) for i in range(8)]
    return LabeledDataset(items, ["x", "y"], PayloadKind.RASTER)
