from dataclasses import dataclass
from typing import Sequence

import numpy as np

from src.core.errors import ShapeError

ROTATION_CLASSES = 4


@dataclass
class DenseLayer:
    weight: np.ndarray  # (fan_in, fan_out)
    bias: np.ndarray  # (fan_out,)

    @property
    def fan_in(self) -> int:
        return self.weight.shape[0]

    @property
    def fan_out(self) -> int:
        return self.weight.shape[1]


@dataclass
class EncoderParams:
    """Weights of the reference MLP encoder: trunk layers plus class and rotation heads.

    The last trunk layer produces the embedding and has no activation; every
    earlier trunk layer is followed by ReLU.
    """

    trunk: list[DenseLayer]
    class_head: DenseLayer
    rotation_head: DenseLayer

    def __post_init__(self):
        if not self.trunk:
            raise ShapeError("Encoder needs at least one trunk layer")
        for layer in self.layers():
            if layer.weight.ndim != 2 or layer.bias.shape != (layer.fan_out,):
                raise ShapeError(f"Layer weight {layer.weight.shape} and bias {layer.bias.shape} disagree")
        for prev, nxt in zip(self.trunk, self.trunk[1:]):
            if prev.fan_out != nxt.fan_in:
                raise ShapeError(f"Trunk shape chain broken: {prev.fan_out} -> {nxt.fan_in}")
        d = self.embedding_dim
        if self.class_head.fan_in != d or self.rotation_head.fan_in != d:
            raise ShapeError(f"Heads must read the {d}-dim embedding")
        if self.rotation_head.fan_out != ROTATION_CLASSES:
            raise ShapeError(f"Rotation head must have {ROTATION_CLASSES} outputs")

    def layers(self) -> list[DenseLayer]:
        return [*self.trunk, self.class_head, self.rotation_head]

    def tensors(self) -> list[np.ndarray]:
        return [t for layer in self.layers() for t in (layer.weight, layer.bias)]

    def with_tensors(self, tensors: Sequence[np.ndarray]) -> "EncoderParams":
        """Same architecture, new tensors given in `tensors()` order"""
        if len(tensors) != 2 * len(self.layers()):
            raise ShapeError(f"Expected {2 * len(self.layers())} tensors, got {len(tensors)}")
        for old, new in zip(self.tensors(), tensors):
            if old.shape != np.shape(new):
                raise ShapeError(f"Tensor shape {np.shape(new)} does not match {old.shape}")
        layers = [DenseLayer(np.asarray(w), np.asarray(b)) for w, b in zip(tensors[0::2], tensors[1::2])]
        return EncoderParams(layers[:-2], layers[-2], layers[-1])

    @property
    def input_dim(self) -> int:
        return self.trunk[0].fan_in

    @property
    def embedding_dim(self) -> int:
        return self.trunk[-1].fan_out

    @property
    def hidden_dims(self) -> list[int]:
        return [layer.fan_out for layer in self.trunk[:-1]]

    @property
    def num_classes(self) -> int:
        return self.class_head.fan_out

    @property
    def dtype(self):
        return self.trunk[0].weight.dtype

    @property
    def num_parameters(self) -> int:
        return sum(t.size for t in self.tensors())

    def astype(self, dtype) -> "EncoderParams":
        return self.with_tensors([t.astype(dtype) for t in self.tensors()])

    def copy(self) -> "EncoderParams":
        return self.with_tensors([t.copy() for t in self.tensors()])

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(t)) for t in self.tensors())


def init_encoder_params(input_dim: int, hidden_dims: Sequence[int], embedding_dim: int, num_classes: int,
                        rng: np.random.Generator, dtype=np.float32) -> EncoderParams:
    """He-normal trunk, small-normal heads, zero biases"""

    def dense(fan_in, fan_out, scale):
        return DenseLayer(rng.normal(0.0, scale, (fan_in, fan_out)).astype(dtype), np.zeros(fan_out, dtype=dtype))

    dims = [input_dim, *hidden_dims, embedding_dim]
    trunk = [dense(i, o, np.sqrt(2.0 / i)) for i, o in zip(dims, dims[1:])]
    head_scale = 1.0 / np.sqrt(embedding_dim)
    return EncoderParams(trunk, dense(embedding_dim, num_classes, head_scale),
                         dense(embedding_dim, ROTATION_CLASSES, head_scale))
