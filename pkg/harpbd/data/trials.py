"""Trial records and their CSV / manifest storage."""

from __future__ import annotations

import io
import re
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
import pandas as pd
import structlog

from harpbd.errors import ContractViolation, TrialParseError

logger = structlog.get_logger()

ACTIVITY_NAMES = (
    "transition",
    "one-leg-stand",
    "reach-forward",
    "sit-to-stand",
    "stand-to-sit",
    "bend-down",
)
N_ACTIVITIES = len(ACTIVITY_NAMES)
N_JOINTS = 22
N_RATERS = 4
SAMPLE_RATE = 60
TRIAL_KINDS = ("normal", "difficult")

META_HEADER = "subject_id,trial_kind,sample_rate"
COORD_COLUMNS = [f"{axis}{j}" for j in range(1, N_JOINTS + 1) for axis in "xyz"]
RATER_COLUMNS = [f"r{r}" for r in range(1, N_RATERS + 1)]
COLUMNS = ["t", *COORD_COLUMNS, "activity", *RATER_COLUMNS]

TrialKind = Literal["normal", "difficult"]


@dataclass(frozen=True, eq=False)
class Trial:
    subject_id: str
    trial_kind: TrialKind
    frames: np.ndarray
    activity: np.ndarray
    rater_flags: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self) -> None:
        if self.trial_kind not in TRIAL_KINDS:
            raise ContractViolation(f"unknown trial kind {self.trial_kind!r}")
        length = self.frames.shape[0]
        if self.frames.shape[1:] != (N_JOINTS, 3):
            raise ContractViolation(f"frames must be (L, {N_JOINTS}, 3), got {self.frames.shape}")
        if self.activity.shape != (length,) or self.rater_flags.shape != (length, N_RATERS):
            raise ContractViolation(
                f"per-timestep sequences disagree: frames {length}, activity "
                f"{self.activity.shape}, rater flags {self.rater_flags.shape}"
            )
        if not np.all(np.isfinite(self.frames)):
            raise ContractViolation(f"trial {self.trial_id} has non-finite coordinates")
        if length and (self.activity.min() < 0 or self.activity.max() >= N_ACTIVITIES):
            raise ContractViolation(f"trial {self.trial_id} has activity ids outside 0..5")

    @property
    def trial_id(self) -> str:
        return f"{self.subject_id}_{self.trial_kind}"

    @property
    def length(self) -> int:
        return int(self.frames.shape[0])

    def to_frame(self) -> pd.DataFrame:
        data: dict[str, np.ndarray] = {"t": np.arange(self.length, dtype=np.int64)}
        coords = self.frames.reshape(self.length, N_JOINTS * 3)
        for i, column in enumerate(COORD_COLUMNS):
            data[column] = coords[:, i]
        data["activity"] = self.activity.astype(np.int64)
        for r, column in enumerate(RATER_COLUMNS):
            data[column] = self.rater_flags[:, r].astype(np.int64)
        return pd.DataFrame(data, columns=COLUMNS)


def save_trial(trial: Trial, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        f.write(f"{META_HEADER}\n{trial.subject_id},{trial.trial_kind},{trial.sample_rate}\n")
        trial.to_frame().to_csv(f, index=False, lineterminator="\n")


def _parse_meta(path: str, header: str, values: str) -> tuple[str, TrialKind, int]:
    if header != META_HEADER:
        raise TrialParseError(path, 1, f"expected header {META_HEADER!r}")
    parts = values.split(",")
    if len(parts) != 3:
        raise TrialParseError(path, 2, f"expected 3 metadata fields, got {len(parts)}")
    subject_id, kind, rate = parts
    if not subject_id:
        raise TrialParseError(path, 2, "empty subject id")
    if kind not in TRIAL_KINDS:
        raise TrialParseError(path, 2, f"unknown trial kind {kind!r}")
    try:
        sample_rate = int(rate)
    except ValueError:
        raise TrialParseError(path, 2, f"sample rate {rate!r} is not an integer") from None
    if sample_rate != SAMPLE_RATE:
        raise TrialParseError(path, 2, f"sample rate must be {SAMPLE_RATE} Hz, got {sample_rate}")
    return subject_id, kind, sample_rate  # type: ignore[return-value]


def load_trial(path: str | Path) -> Trial:
    source = str(path)
    text = Path(path).read_text()
    head = text.split("\n", 2)
    if len(head) < 3:
        raise TrialParseError(source, len(head), "file ends before the column header")
    subject_id, kind, sample_rate = _parse_meta(source, head[0].rstrip("\r"), head[1].rstrip("\r"))

    body = head[2]
    columns = body.split("\n", 1)[0].rstrip("\r").split(",")
    if columns != COLUMNS:
        raise TrialParseError(
            source, 3, f"expected {len(COLUMNS)} columns t,x1..z{N_JOINTS},activity,r1..r{N_RATERS}; got {len(columns)}"
        )

    # a widened first row would otherwise become an implicit index
    for number, line in enumerate(body.split("\n")[1:], start=4):
        fields = line.rstrip("\r").count(",") + 1
        if line.strip() and fields != len(COLUMNS):
            raise TrialParseError(source, number, f"malformed row: expected {len(COLUMNS)} fields, saw {fields}")

    try:
        raw = pd.read_csv(io.StringIO(body), dtype=str, keep_default_na=False, na_filter=False)
    except pd.errors.ParserError as e:
        # pandas counts lines from the column header, which is file line 3
        raise TrialParseError(source, 2 + _parser_line(e), f"malformed row: {e}") from e

    numeric = raw.apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna().any(axis=1).to_numpy() | ~np.isfinite(numeric.to_numpy(dtype=float)).all(axis=1)
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise TrialParseError(source, row + 4, "missing, non-numeric or non-finite value")

    # exact float parsing for bit-identical coordinates
    coords = raw[COORD_COLUMNS].to_numpy(dtype=str).astype(np.float64)
    activity = numeric["activity"].to_numpy()
    flags = numeric[RATER_COLUMNS].to_numpy()
    for name, values, allowed in (("activity", activity, range(N_ACTIVITIES)), ("rater flag", flags, (0, 1))):
        invalid = ~np.isin(values, list(allowed))
        if invalid.any():
            row = int(np.flatnonzero(invalid.reshape(len(raw), -1).any(axis=1))[0])
            raise TrialParseError(source, row + 4, f"{name} outside {list(allowed)}")

    trial = Trial(
        subject_id=subject_id,
        trial_kind=kind,
        frames=coords.reshape(len(raw), N_JOINTS, 3),
        activity=activity.astype(np.int64),
        rater_flags=flags.astype(bool),
        sample_rate=sample_rate,
    )
    logger.debug("Loaded trial", path=source, trial=trial.trial_id, frames=trial.length)
    return trial


def _parser_line(error: Exception) -> int:
    match = re.search(r"line (\d+)", str(error))
    return int(match.group(1)) if match else 1


MANIFEST_NAME = "manifest.txt"


def write_manifest(directory: str | Path, trial_files: Iterable[str]) -> Path:
    directory = Path(directory)
    manifest = directory / MANIFEST_NAME
    manifest.write_text("".join(f"{name}\n" for name in trial_files))
    return manifest


def read_manifest(manifest: str | Path) -> list[Path]:
    manifest = Path(manifest)
    if manifest.is_dir():
        manifest = manifest / MANIFEST_NAME
    if not manifest.exists():
        raise ContractViolation(f"corpus manifest not found: {manifest}")
    entries = [line.strip() for line in manifest.read_text().splitlines()]
    return [manifest.parent / entry for entry in entries if entry and not entry.startswith("#")]


def save_corpus(trials: Sequence[Trial], directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = []
    for trial in trials:
        name = f"{trial.trial_id}.csv"
        save_trial(trial, directory / name)
        names.append(name)
    return write_manifest(directory, names)


def load_corpus(manifest: str | Path) -> list[Trial]:
    trials = [load_trial(path) for path in read_manifest(manifest)]
    logger.info("Loaded corpus", manifest=str(manifest), trials=len(trials))
    return trials
