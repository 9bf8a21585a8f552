from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence, Union

import numpy as np

from src.core.errors import ShapeError


class PayloadKind(str, Enum):
    RASTER = "raster"
    EMBEDDING = "embedding"


@dataclass(frozen=True, eq=False)
class Raster:
    """Single-channel image, intensities in [0, 1], stored as an (H, W) array"""

    pixels: np.ndarray

    channels = 1

    def __post_init__(self):
        pixels = np.asarray(self.pixels, dtype=np.float64)
        if pixels.ndim != 2:
            raise ShapeError(f"Raster pixels must be 2-D, got shape {pixels.shape}")
        if pixels.size and (pixels.min() < 0.0 or pixels.max() > 1.0):
            raise ShapeError("Raster intensities must lie in [0, 1]")
        object.__setattr__(self, "pixels", pixels)

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]]) -> "Raster":
        return cls(np.array(rows, dtype=np.float64))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape

    def __eq__(self, other):
        if not isinstance(other, Raster):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)

    def __hash__(self):
        return hash((self.shape, self.pixels.tobytes()))


Payload = Union[Raster, np.ndarray]


@dataclass(frozen=True)
class Item:
    item_id: int
    payload: Payload
    class_id: int


def payload_shape(payload: Payload) -> tuple[int, ...]:
    if isinstance(payload, Raster):
        return payload.shape
    return np.shape(payload)


def payload_matrix(payloads: Iterable[Payload]) -> np.ndarray:
    """Stack payloads into an (n, features) matrix; rasters are flattened row-major"""
    rows = [p.pixels.ravel() if isinstance(p, Raster) else np.asarray(p, dtype=np.float64).ravel()
            for p in payloads]
    if not rows:
        return np.zeros((0, 0))
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ShapeError(f"Payloads have mixed sizes: {sorted(widths)}")
    return np.vstack(rows)


class LabeledDataset:
    """Immutable pool of labelled items, all of one payload kind and shape"""

    def __init__(self, items: Sequence[Item], class_names: Sequence[str], payload_kind: PayloadKind):
        self.items: tuple[Item, ...] = tuple(items)
        self.class_names: tuple[str, ...] = tuple(class_names)
        self.payload_kind = PayloadKind(payload_kind)

        shapes = set()
        by_class: dict[int, list[Item]] = {}
        for item in self.items:
            if not 0 <= item.class_id < len(self.class_names):
                raise ShapeError(f"Item {item.item_id} has class id {item.class_id} "
                                 f"outside [0, {len(self.class_names)})")
            is_raster = isinstance(item.payload, Raster)
            if is_raster != (self.payload_kind == PayloadKind.RASTER):
                raise ShapeError(f"Item {item.item_id} payload does not match kind {self.payload_kind.value}")
            shapes.add(payload_shape(item.payload))
            by_class.setdefault(item.class_id, []).append(item)

        if len(shapes) > 1:
            raise ShapeError(f"Payloads have mixed shapes: {sorted(shapes)}")

        self.payload_shape: tuple[int, ...] = shapes.pop() if shapes else ()
        self._by_class = {class_id: tuple(sorted(members, key=lambda i: i.item_id))
                          for class_id, members in by_class.items()}
        self._by_id = {item.item_id: item for item in self.items}

    def __len__(self) -> int:
        return len(self.items)

    @property
    def class_ids(self) -> list[int]:
        """Ids of the classes that hold at least one item"""
        return sorted(self._by_class)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def input_dim(self) -> int:
        return int(np.prod(self.payload_shape)) if self.payload_shape else 0

    def items_of(self, class_id: int) -> tuple[Item, ...]:
        return self._by_class.get(class_id, ())

    def item(self, item_id: int) -> Item:
        return self._by_id[item_id]

    def empty_classes(self) -> list[int]:
        return [c for c in range(self.num_classes) if c not in self._by_class]

    def subset(self, item_ids: Iterable[int]) -> "LabeledDataset":
        """View restricted to `item_ids`; class ids and names are preserved"""
        keep = set(item_ids)
        return LabeledDataset([i for i in self.items if i.item_id in keep], self.class_names, self.payload_kind)
