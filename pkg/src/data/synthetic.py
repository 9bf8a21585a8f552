"""Synthetic corpora for smoke runs and tests."""
import numpy as np

from src.core.errors import ArgumentError
from src.data.dataset import Item, LabeledDataset, PayloadKind, Raster


def blob_centers(num_classes: int, dim: int = 2, radius: float = 2.0) -> np.ndarray:
    """Class centers evenly spaced on a circle in the first two coordinates"""
    if dim < 2:
        raise ArgumentError(f"Blob datasets need dim >= 2, got {dim}")
    angles = 2.0 * np.pi * np.arange(num_classes) / num_classes
    centers = np.zeros((num_classes, dim))
    centers[:, 0] = radius * np.cos(angles)
    centers[:, 1] = radius * np.sin(angles)
    return centers


def min_center_distance(centers: np.ndarray) -> float:
    diffs = centers[:, None, :] - centers[None, :, :]
    dist = np.sqrt((diffs ** 2).sum(-1))
    return float(dist[~np.eye(len(centers), dtype=bool)].min())


def make_blob_embeddings(num_classes: int, items_per_class: int, seed: int, dim: int = 2,
                         sigma: float = 0.1, radius: float = 2.0) -> LabeledDataset:
    """Isotropic Gaussian blobs, one per class, as an embedding dataset"""
    rng = np.random.default_rng(seed)
    centers = blob_centers(num_classes, dim, radius)
    items = []
    for class_id, center in enumerate(centers):
        points = center + sigma * rng.standard_normal((items_per_class, dim))
        items.extend(Item(len(items) + k, points[k], class_id) for k in range(items_per_class))
    return LabeledDataset(items, [f"blob{c}" for c in range(num_classes)], PayloadKind.EMBEDDING)


def make_blob_rasters(num_classes: int, items_per_class: int, seed: int, size: int = 8,
                      width: float = 1.0, noise: float = 0.05) -> LabeledDataset:
    """Square rasters each holding one bright Gaussian spot at a class-specific position"""
    if num_classes > size * size:
        raise ArgumentError(f"{num_classes} classes do not fit on a {size}x{size} raster")
    rng = np.random.default_rng(seed)
    cells = rng.choice(size * size, size=num_classes, replace=False)
    rows, cols = np.mgrid[0:size, 0:size]
    items = []
    for class_id, cell in enumerate(cells):
        cy, cx = divmod(int(cell), size)
        spot = np.exp(-((rows - cy) ** 2 + (cols - cx) ** 2) / (2.0 * width ** 2))
        for _ in range(items_per_class):
            pixels = np.clip(spot + noise * rng.standard_normal(spot.shape), 0.0, 1.0)
            items.append(Item(len(items), Raster(pixels), class_id))
    return LabeledDataset(items, [f"spot{c}" for c in range(num_classes)], PayloadKind.RASTER)
