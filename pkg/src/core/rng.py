import hashlib

import numpy as np

SEED_MASK = (1 << 64) - 1

# Stream tags; every random draw in a run hangs off one of these.
SPLIT = "split"
DISPATCH = "dispatch"
VALID = "valid"
ENSEMBLE_SPLIT = "ensemble/split"
ENSEMBLE_TRAIN = "ensemble/train"
ENSEMBLE_TEST = "ensemble/test"
EVAL = "eval"


def init_tag(worker_id: int) -> str:
    return f"init/{worker_id}"


def tag_hash(tag: str) -> int:
    """First 8 bytes of blake2b(tag), little-endian"""
    digest = hashlib.blake2b(tag.encode("utf8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_seed(seed: int, tag: str) -> int:
    """Seed of the stream named `tag` under master `seed`: seed XOR hash(tag)"""
    return (int(seed) ^ tag_hash(tag)) & SEED_MASK


def derive_rng(seed: int, tag: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, tag))


def dispatch_tag(way: int, shot: int) -> str:
    """Batch stream for one (way, shot) shape, so shapes draw independently"""
    return f"{DISPATCH}/{way}x{shot}"
