import io
import json
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
import structlog

from harpbd.errors import MissingFoldError
from harpbd.numerics import load_checkpoint, save_checkpoint

logger = structlog.get_logger()


class RunStore:
    """Keyed file access under one run directory.

    Keys are ``/``-separated paths relative to the run root, e.g.
    ``PretrainedFrozen/C01/har.ckpt``.
    """

    def __init__(self, root: str | Path):
        self.local_path = Path(root)
        self.local_path.mkdir(parents=True, exist_ok=True)
        logger.debug(f"Using run directory at {self.local_path}")

    def path(self, key: str) -> Path:
        return self.local_path / key

    def exists(self, key: str) -> bool:
        return self.path(key).exists()

    def write_bytes(self, data: bytes, key: str) -> Path:
        file_path = self.path(key)
        file_path.parent.mkdir(parents=True, exist_ok=True)
        with open(file_path, "wb") as f:
            f.write(data)
        logger.debug("Saved file", path=str(file_path), bytes=len(data))
        return file_path

    def read_bytes(self, key: str) -> bytes | None:
        file_path = self.path(key)
        if not file_path.exists():
            logger.error(f"File not found: {file_path}")
            return None
        with open(file_path, "rb") as f:
            return f.read()

    def write_text(self, text: str, key: str) -> Path:
        return self.write_bytes(text.encode("utf-8"), key)

    def write_json(self, payload: Any, key: str) -> Path:
        return self.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", key)

    def read_json(self, key: str) -> Any:
        data = self.read_bytes(key)
        return None if data is None else json.loads(data)

    def write_csv(self, frame: pd.DataFrame, key: str) -> Path:
        return self.write_text(frame.to_csv(index=False, lineterminator="\n"), key)

    def read_csv(self, key: str, **kwargs: Any) -> pd.DataFrame | None:
        data = self.read_bytes(key)
        return None if data is None else pd.read_csv(io.BytesIO(data), **kwargs)

    def write_checkpoint(self, params: dict[str, np.ndarray], key: str) -> Path:
        buffer = io.BytesIO()
        save_checkpoint(buffer, params)
        return self.write_bytes(buffer.getvalue(), key)

    def read_checkpoint(self, key: str) -> dict[str, np.ndarray] | None:
        data = self.read_bytes(key)
        return None if data is None else load_checkpoint(io.BytesIO(data))


def fold_key(strategy: str, fold: str, name: str) -> str:
    return f"{strategy}/{fold}/{name}"


FOLD_ARTIFACTS = ("har.ckpt", "pbd.ckpt", "har_log.csv", "pbd_log.csv", "predictions.csv")


def check_complete(store: RunStore, strategy: str, folds: list[str]) -> None:
    """Raise for the first fold whose artifacts are not all on disk."""
    for fold in sorted(folds):
        missing = [name for name in FOLD_ARTIFACTS if not store.exists(fold_key(strategy, fold, name))]
        if missing:
            raise MissingFoldError(fold, ", ".join(missing))
