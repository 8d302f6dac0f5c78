"""Parameter checkpoint container.

A checkpoint is a numpy ``.npz`` archive holding one float64 array per
parameter name plus a ``__format_version__`` entry. Arrays keep their shape
and are stored bit-exactly; pickling is disabled on load.
"""

from collections.abc import Mapping
from pathlib import Path
from typing import BinaryIO

import numpy as np

from harpbd.errors import ContractViolation

FORMAT_VERSION = 1
_VERSION_KEY = "__format_version__"


def save_checkpoint(target: str | Path | BinaryIO, params: Mapping[str, np.ndarray]) -> None:
    if _VERSION_KEY in params:
        raise ContractViolation(f"{_VERSION_KEY} is reserved")
    arrays = {name: np.asarray(value, dtype=np.float64) for name, value in params.items()}
    arrays[_VERSION_KEY] = np.array(FORMAT_VERSION, dtype=np.int64)
    if isinstance(target, (str, Path)):
        # np.savez would append ".npz" to a bare path
        with open(target, "wb") as f:
            np.savez(f, **arrays)
    else:
        np.savez(target, **arrays)


def load_checkpoint(source: str | Path | BinaryIO) -> dict[str, np.ndarray]:
    with np.load(source, allow_pickle=False) as archive:
        if _VERSION_KEY not in archive.files:
            raise ContractViolation("checkpoint has no format version header")
        version = int(archive[_VERSION_KEY])
        if version != FORMAT_VERSION:
            raise ContractViolation(f"unsupported checkpoint format version {version}")
        return {name: archive[name] for name in archive.files if name != _VERSION_KEY}
