from __future__ import annotations

from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor, as_completed
from typing import Any

import structlog

from harpbd.config import RunConfig
from harpbd.tasks.fold_worker import train_fold

logger = structlog.get_logger()


def run_folds(config: RunConfig, folds: Sequence[str], parallel: int = 1) -> list[dict[str, Any]]:
    """Train every fold, ``parallel`` at a time; results come back sorted by fold id."""
    payload = config.model_dump_json()
    results: list[dict[str, Any]] = []
    if parallel <= 1 or len(folds) <= 1:
        for fold in folds:
            results.append(train_fold(payload, fold))
    else:
        workers = min(parallel, len(folds))
        logger.info("Starting fold pool", workers=workers, folds=len(folds))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(train_fold, payload, fold): fold for fold in folds}
            for future in as_completed(futures):
                result = future.result()
                logger.info("Fold finished", fold=futures[future], timing=result["timing"])
                results.append(result)
    return sorted(results, key=lambda r: r["fold"])
