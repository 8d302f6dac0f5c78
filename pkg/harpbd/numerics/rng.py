import hashlib

import numpy as np


def _label_key(label: str | int) -> int:
    digest = hashlib.sha256(str(label).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derive_rng(seed: int, *labels: str | int) -> np.random.Generator:
    """Independent PCG64 stream for ``seed`` keyed by a stable label path."""
    sequence = np.random.SeedSequence(seed, spawn_key=tuple(_label_key(label) for label in labels))
    return np.random.Generator(np.random.PCG64(sequence))
