from enum import IntEnum

import numpy as np

from src.core.errors import ShapeError
from src.data.dataset import Raster
from src.data.episodes import Batch


class RotationLabel(IntEnum):
    """Clockwise quarter turns"""

    DEG_0 = 0
    DEG_90 = 1
    DEG_180 = 2
    DEG_270 = 3


def rotate(image: Raster, turns: int) -> Raster:
    """Rotate clockwise by 90 * turns degrees.

    One clockwise quarter turn maps output (r, c) to input (H - 1 - c, r).
    """
    turns = RotationLabel(turns)
    if image.height != image.width:
        raise ShapeError(f"Only square rasters can be rotated, got {image.height}x{image.width}")
    return Raster(np.rot90(image.pixels, k=-int(turns)).copy())


def augment_with_rotations(batch: Batch) -> tuple[list[Raster], np.ndarray, np.ndarray]:
    """Emit every item four times (item-major, rotation-minor) with class and rotation labels"""
    images, class_labels, rot_labels = [], [], []
    for item in batch.items:
        if not isinstance(item.payload, Raster):
            raise ShapeError(f"Item {item.item_id} is not a raster; rotations need image payloads")
        for turns in RotationLabel:
            images.append(rotate(item.payload, turns))
            class_labels.append(item.class_id)
            rot_labels.append(int(turns))
    return images, np.array(class_labels, dtype=np.int64), np.array(rot_labels, dtype=np.int64)
