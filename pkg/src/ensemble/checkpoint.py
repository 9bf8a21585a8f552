"""ENS1 ensemble checkpoints.

Layout, little-endian::

    b"ENS1"
    u8  variant        0 vote, 1 linear, 2 gaussian NB
    u32 learners M
    u32 way K
    linear:       f32[K * (M*K + 1)] weights
    gaussian NB:  f32[K * M*K] means, f32[K * M*K] variances, f32[K] priors
"""
import struct
from pathlib import Path
from typing import Union

import numpy as np

from src.core.errors import FormatError
from src.ensemble.models import EnsembleModel, EnsembleVariant, GaussianNB, MajorityVote, MultinomialLinear

ENS1_MAGIC = b"ENS1"
_HEADER = struct.Struct("<4sBII")

VARIANT_TAGS = {
    EnsembleVariant.VOTE: 0,
    EnsembleVariant.LINEAR: 1,
    EnsembleVariant.GAUSSIAN_NB: 2,
}
_TAG_VARIANTS = {tag: variant for variant, tag in VARIANT_TAGS.items()}


def _f32(array: np.ndarray) -> bytes:
    return np.ascontiguousarray(array, dtype="<f4").tobytes()


def encode_ensemble(model: EnsembleModel) -> bytes:
    parts = [_HEADER.pack(ENS1_MAGIC, VARIANT_TAGS[model.variant], model.num_learners, model.way)]
    if isinstance(model, MultinomialLinear):
        parts.append(_f32(model.weights))
    elif isinstance(model, GaussianNB):
        parts.extend([_f32(model.means), _f32(model.variances), _f32(model.priors)])
    return b"".join(parts)


def decode_ensemble(data: bytes, source: str = "<bytes>") -> EnsembleModel:
    if len(data) < _HEADER.size:
        raise FormatError(f"{source}: truncated header")
    magic, tag, num_learners, way = _HEADER.unpack_from(data)
    if magic != ENS1_MAGIC:
        raise FormatError(f"{source}: bad magic {magic!r}, expected {ENS1_MAGIC!r}")
    if tag not in _TAG_VARIANTS:
        raise FormatError(f"{source}: unknown ensemble variant tag {tag}")
    if num_learners == 0 or way < 2:
        raise FormatError(f"{source}: invalid shape {num_learners} learners x {way} classes")

    variant = _TAG_VARIANTS[tag]
    dim = num_learners * way
    sizes = {
        EnsembleVariant.VOTE: [],
        EnsembleVariant.LINEAR: [(way, dim + 1)],
        EnsembleVariant.GAUSSIAN_NB: [(way, dim), (way, dim), (way,)],
    }[variant]
    expected = _HEADER.size + 4 * sum(int(np.prod(shape)) for shape in sizes)
    if len(data) != expected:
        raise FormatError(f"{source}: expected {expected} bytes for {variant.value}, got {len(data)}")

    tensors, offset = [], _HEADER.size
    for shape in sizes:
        count = int(np.prod(shape))
        tensors.append(np.frombuffer(data, dtype="<f4", count=count, offset=offset).astype(np.float64).reshape(shape))
        offset += 4 * count
    if not all(np.all(np.isfinite(t)) for t in tensors):
        raise FormatError(f"{source}: non-finite ensemble parameters")

    if variant == EnsembleVariant.LINEAR:
        return MultinomialLinear(num_learners, way, weights=tensors[0])
    if variant == EnsembleVariant.GAUSSIAN_NB:
        return GaussianNB(num_learners, way, means=tensors[0], variances=tensors[1], priors=tensors[2])
    return MajorityVote(num_learners, way)


def save_ensemble(model: EnsembleModel, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_ensemble(model))
    return path


def load_ensemble(path: Union[str, Path]) -> EnsembleModel:
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"{path}: ensemble checkpoint not found")
    return decode_ensemble(path.read_bytes(), str(path))
