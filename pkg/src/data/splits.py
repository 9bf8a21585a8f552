import math
from fractions import Fraction
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from src.core.errors import SplitError
from src.data.dataset import LabeledDataset

DEFAULT_RATIOS = (5, 1, 4)


@dataclass(frozen=True)
class ClassSplit:
    """Disjoint meta-train / meta-valid / meta-test class sets"""

    meta_train: frozenset
    meta_valid: frozenset
    meta_test: frozenset

    def __post_init__(self):
        for name in ("meta_train", "meta_valid", "meta_test"):
            object.__setattr__(self, name, frozenset(int(c) for c in getattr(self, name)))
            if not getattr(self, name):
                raise SplitError(f"{name} is empty")
        if (self.meta_train & self.meta_valid or self.meta_train & self.meta_test
                or self.meta_valid & self.meta_test):
            raise SplitError("Class sets overlap")

    @property
    def sizes(self) -> tuple[int, int, int]:
        return len(self.meta_train), len(self.meta_valid), len(self.meta_test)

    def to_dict(self) -> dict:
        return {
            "meta_train": sorted(self.meta_train),
            "meta_valid": sorted(self.meta_valid),
            "meta_test": sorted(self.meta_test),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ClassSplit":
        try:
            return cls(data["meta_train"], data["meta_valid"], data["meta_test"])
        except (KeyError, TypeError) as e:
            raise SplitError(f"Malformed split: {e}") from e


def parse_ratios(value) -> tuple[int, int, int]:
    """Parse '5:1:4' (or a 3-sequence) into positive integer ratios"""
    parts = value.split(":") if isinstance(value, str) else list(value)
    if len(parts) != 3:
        raise SplitError(f"Ratios must have three parts a:b:c, got '{value}'")
    ratios = []
    for part in parts:
        try:
            ratio = int(str(part).strip())
        except ValueError:
            raise SplitError(f"Invalid ratio '{part}' in '{value}': not an integer")
        if ratio <= 0:
            raise SplitError(f"Invalid ratio '{part}' in '{value}': must be positive")
        ratios.append(ratio)
    return tuple(ratios)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_classes(dataset: LabeledDataset, ratios: Sequence[int], seed: int) -> ClassSplit:
    """Shuffle the classes with `seed` and cut them by `ratios`; remainders go to meta-train"""
    a, b, c = parse_ratios(ratios)
    classes = dataset.class_ids
    total_classes = len(classes)
    if total_classes < 3:
        raise SplitError(f"Need at least 3 classes to split, dataset has {total_classes}")

    total = a + b + c
    n_valid = max(1, _round_half_up(total_classes * b / total))
    n_test = max(1, _round_half_up(total_classes * c / total))
    # rounding up can leave meta-train empty; shrink the larger of valid and test
    while n_valid + n_test > total_classes - 1:
        if n_valid >= n_test and n_valid > 1:
            n_valid -= 1
        else:
            n_test -= 1
    n_train = total_classes - n_valid - n_test

    order = np.random.default_rng(seed).permutation(classes)
    train = order[:n_train]
    valid = order[n_train:n_train + n_valid]
    test = order[n_train + n_valid:]
    return ClassSplit(train.tolist(), valid.tolist(), test.tolist())


def split_for_ensemble(dataset: LabeledDataset, valid_classes: Iterable[int], fraction: float,
                       rng: np.random.Generator) -> tuple[frozenset, frozenset]:
    """Stratified item split of the meta-valid classes into (D_val_tr, D_val_te) item ids.

    Each class keeps items on both sides; the training side gets ceil(n * fraction),
    capped so the test side is never empty.
    """
    if not 0.0 < fraction < 1.0:
        raise SplitError(f"Ensemble split fraction must lie in (0, 1), got {fraction}")
    share = Fraction(str(fraction))

    train_ids, test_ids = set(), set()
    for class_id in sorted(valid_classes):
        members = [item.item_id for item in dataset.items_of(class_id)]
        if len(members) < 2:
            raise SplitError(f"Class {class_id} has {len(members)} item(s); at least 2 are needed "
                             f"to split it for the ensemble")
        n_train = min(len(members) - 1, max(1, math.ceil(share * len(members))))
        order = rng.permutation(members)
        train_ids.update(int(i) for i in order[:n_train])
        test_ids.update(int(i) for i in order[n_train:])
    return frozenset(train_ids), frozenset(test_ids)
