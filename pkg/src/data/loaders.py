"""Readers and writers for the two on-disk corpus formats.

Image corpus: a directory holding ``labels.csv`` (header ``file,class``) and
binary PGM (P5, maxval 255) files of identical size. Class strings map to ids
in first-seen order.

EMB1 embedding file, all integers and floats little-endian::

    b"EMB1" | u32 count | u32 dim | count x u32 class id | count*dim x f32 (row-major)
"""
import csv
import struct
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image

from logger import logger
from src.core.errors import EmptyClassError, FormatError
from src.data.dataset import Item, LabeledDataset, PayloadKind, Raster

LABELS_FILE = "labels.csv"
EMB1_MAGIC = b"EMB1"
EMB1_HEADER = struct.Struct("<4sII")
PGM_MAXVAL = 255


def _require_nonempty_classes(dataset: LabeledDataset, source: Path):
    empty = dataset.empty_classes()
    if empty:
        names = [dataset.class_names[c] for c in empty]
        raise EmptyClassError(f"{source}: classes without items: {names}")


def _read_pgm(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            img.load()
            if img.format != "PPM" or img.mode != "L":
                raise FormatError(f"{path.name}: expected a binary 8-bit PGM (P5), "
                                  f"got format={img.format} mode={img.mode}")
            return np.asarray(img, dtype=np.float64) / PGM_MAXVAL
    except FormatError:
        raise
    except (OSError, SyntaxError, ValueError) as e:
        raise FormatError(f"{path.name}: unreadable PGM file ({e})") from e


def load_image_dataset(root_path: Union[str, Path]) -> LabeledDataset:
    """Load a PGM image corpus described by root/labels.csv"""
    root = Path(root_path)
    labels_path = root / LABELS_FILE
    if not labels_path.is_file():
        raise FormatError(f"{labels_path}: missing labels file")

    with open(labels_path, "r", encoding="utf8", newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or [h.strip() for h in reader.fieldnames[:2]] != ["file", "class"]:
            raise FormatError(f"{labels_path}: header must be 'file,class'")
        rows = [(row["file"].strip(), row["class"].strip()) for row in reader]

    if not rows:
        raise FormatError(f"{labels_path}: no items listed")

    class_ids: dict[str, int] = {}
    items = []
    expected_shape = None
    for item_id, (file_name, class_name) in enumerate(rows):
        image_path = root / file_name
        if not image_path.is_file():
            raise FormatError(f"{file_name}: listed in {LABELS_FILE} but not found")
        pixels = _read_pgm(image_path)
        if expected_shape is None:
            expected_shape = pixels.shape
        elif pixels.shape != expected_shape:
            raise FormatError(f"{file_name}: size {pixels.shape[1]}x{pixels.shape[0]} differs from "
                              f"{expected_shape[1]}x{expected_shape[0]}")
        class_id = class_ids.setdefault(class_name, len(class_ids))
        items.append(Item(item_id, Raster(pixels), class_id))

    dataset = LabeledDataset(items, list(class_ids), PayloadKind.RASTER)
    _require_nonempty_classes(dataset, labels_path)
    logger.info(f"Loaded {len(dataset)} images in {dataset.num_classes} classes from {root}")
    return dataset


def write_image_dataset(dataset: LabeledDataset, root_path: Union[str, Path]) -> Path:
    """Write a raster dataset as labels.csv plus one P5 PGM per item"""
    root = Path(root_path)
    root.mkdir(parents=True, exist_ok=True)
    with open(root / LABELS_FILE, "w", encoding="utf8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["file", "class"])
        for item in dataset.items:
            file_name = f"{item.item_id:06d}.pgm"
            data = np.rint(item.payload.pixels * PGM_MAXVAL).astype(np.uint8)
            Image.fromarray(data).save(root / file_name, format="PPM")
            writer.writerow([file_name, dataset.class_names[item.class_id]])
    return root


def load_embedding_dataset(path: Union[str, Path]) -> LabeledDataset:
    """Load an EMB1 file of precomputed embeddings"""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise FormatError(f"{path}: cannot read embedding file ({e})") from e

    if len(data) < EMB1_HEADER.size:
        raise FormatError(f"{path.name}: truncated header")
    magic, count, dim = EMB1_HEADER.unpack_from(data)
    if magic != EMB1_MAGIC:
        raise FormatError(f"{path.name}: bad magic {magic!r}, expected {EMB1_MAGIC!r}")
    if count == 0 or dim == 0:
        raise FormatError(f"{path.name}: degenerate header count={count} dim={dim}")

    labels_offset = EMB1_HEADER.size
    matrix_offset = labels_offset + 4 * count
    expected = matrix_offset + 4 * count * dim
    if len(data) != expected:
        raise FormatError(f"{path.name}: payload is {len(data)} bytes, header implies {expected} "
                          f"({count} labels and a {count}x{dim} matrix)")

    labels = np.frombuffer(data, dtype="<u4", count=count, offset=labels_offset)
    matrix = np.frombuffer(data, dtype="<f4", count=count * dim, offset=matrix_offset).reshape(count, dim)
    if not np.all(np.isfinite(matrix)):
        raise FormatError(f"{path.name}: matrix holds non-finite values")

    num_classes = int(labels.max()) + 1
    items = [Item(i, matrix[i].astype(np.float64), int(labels[i])) for i in range(count)]
    dataset = LabeledDataset(items, [str(c) for c in range(num_classes)], PayloadKind.EMBEDDING)
    _require_nonempty_classes(dataset, path)
    logger.info(f"Loaded {count} embeddings of dim {dim} in {num_classes} classes from {path}")
    return dataset


def write_embedding_dataset(dataset: LabeledDataset, path: Union[str, Path]) -> Path:
    """Write an embedding dataset in EMB1 layout, items in dataset order"""
    path = Path(path)
    count = len(dataset)
    dim = dataset.input_dim
    labels = np.array([item.class_id for item in dataset.items], dtype="<u4")
    matrix = np.vstack([item.payload for item in dataset.items]).astype("<f4")
    with open(path, "wb") as f:
        f.write(EMB1_HEADER.pack(EMB1_MAGIC, count, dim))
        f.write(labels.tobytes())
        f.write(matrix.tobytes(order="C"))
    return path


def load_dataset(path: Union[str, Path], kind: str) -> LabeledDataset:
    """Load either corpus kind: 'image' (PGM directory) or 'embedding' (EMB1 file)"""
    if kind == "image":
        return load_image_dataset(path)
    if kind == "embedding":
        return load_embedding_dataset(path)
    raise FormatError(f"Unknown dataset kind '{kind}', expected 'image' or 'embedding'")
