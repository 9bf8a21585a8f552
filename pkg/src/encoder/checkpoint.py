"""ENC1 encoder checkpoints.

Layout, little-endian throughout::

    b"ENC1"
    u32 trunk_layers
    (trunk_layers + 2) x (u32 fan_in, u32 fan_out)     trunk..., class head, rotation head
    for each layer in the same order:
        f32[fan_in * fan_out] weight (row-major), f32[fan_out] bias
"""
import struct
from pathlib import Path
from typing import Union

import numpy as np

from src.core.errors import FormatError, ShapeError
from src.encoder.params import DenseLayer, EncoderParams

ENC1_MAGIC = b"ENC1"
_U32 = struct.Struct("<I")
_SHAPE = struct.Struct("<II")


def encode_params(params: EncoderParams) -> bytes:
    layers = params.layers()
    parts = [ENC1_MAGIC, _U32.pack(len(params.trunk))]
    parts.extend(_SHAPE.pack(layer.fan_in, layer.fan_out) for layer in layers)
    for layer in layers:
        parts.append(layer.weight.astype("<f4").tobytes(order="C"))
        parts.append(layer.bias.astype("<f4").tobytes())
    return b"".join(parts)


def decode_params(data: bytes, source: str = "<bytes>") -> EncoderParams:
    if data[:4] != ENC1_MAGIC:
        raise FormatError(f"{source}: bad magic {data[:4]!r}, expected {ENC1_MAGIC!r}")
    try:
        (trunk_layers,) = _U32.unpack_from(data, 4)
        offset = 8
        shapes = []
        for _ in range(trunk_layers + 2):
            shapes.append(_SHAPE.unpack_from(data, offset))
            offset += _SHAPE.size
    except struct.error as e:
        raise FormatError(f"{source}: truncated header ({e})") from e

    layers = []
    for fan_in, fan_out in shapes:
        count = fan_in * fan_out + fan_out
        if offset + 4 * count > len(data):
            raise FormatError(f"{source}: truncated tensor data")
        weight = np.frombuffer(data, dtype="<f4", count=fan_in * fan_out, offset=offset).reshape(fan_in, fan_out)
        offset += 4 * fan_in * fan_out
        bias = np.frombuffer(data, dtype="<f4", count=fan_out, offset=offset)
        offset += 4 * fan_out
        layers.append(DenseLayer(weight.astype(np.float32), bias.astype(np.float32)))
    if offset != len(data):
        raise FormatError(f"{source}: {len(data) - offset} trailing bytes")

    try:
        return EncoderParams(layers[:-2], layers[-2], layers[-1])
    except ShapeError as e:
        raise FormatError(f"{source}: inconsistent layer shapes ({e})") from e


def save_params(params: EncoderParams, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_params(params))
    return path


def load_params(path: Union[str, Path]) -> EncoderParams:
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"{path}: checkpoint not found")
    return decode_params(path.read_bytes(), str(path))
