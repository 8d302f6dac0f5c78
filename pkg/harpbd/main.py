from __future__ import annotations

import argparse
import json
import logging
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import pandas as pd
import structlog
from pydantic import ValidationError

import harpbd.models.strategies  # noqa: F401
from harpbd.config import RunConfig, settings
from harpbd.data import corpus_statistics, load_corpus, save_corpus, subject_ids, synth_generate
from harpbd.errors import ConfigurationError, HarPbdError, UsageError
from harpbd.evaluation.report import (
    MetricsReport,
    build_report,
    comparison_table,
    format_table,
)
from harpbd.evaluation.study import (
    ABLATION_CLAIMS,
    Claim,
    focal_selection_text,
    sensor_claims,
    study_text,
    summarize,
)
from harpbd.evaluation.traces import trace
from harpbd.models.base import STRATEGY_NAMES, FoldPredictions
from harpbd.models.registry import StrategyRegistry
from harpbd.models.search import SearchResult, grid_search
from harpbd.services.storage import RunStore, check_complete, fold_key
from harpbd.tasks.pool import run_folds

logger = structlog.get_logger()

ABLATION_VARIANTS = {
    "pbd": {"hierarchical": False, "pbd_cfcc": False},
    "pbd_cfcc": {"hierarchical": False, "pbd_cfcc": True},
    "hierarchical": {"hierarchical": True, "pbd_cfcc": False},
    "hierarchical_cfcc": {"hierarchical": True, "pbd_cfcc": True},
}


def configure_logging() -> None:
    logging.basicConfig(format="%(message)s", stream=sys.stderr, level=settings.log_level.upper())
    renderer = (
        structlog.processors.JSONRenderer()
        if settings.log_json
        else structlog.dev.ConsoleRenderer(colors=False)
    )
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.UnicodeDecoder(),
            renderer,
        ],
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        cache_logger_on_first_use=True,
    )


def sensor_fields(value: str) -> dict[str, Any]:
    """A preset name, or comma-separated node ids to remove from the full skeleton."""
    parts = [part.strip() for part in value.split(",")]
    if all(part.isdigit() for part in parts):
        return {"custom_removal": [int(part) for part in parts]}
    if len(parts) > 1:
        raise ConfigurationError(
            f"sensor set must be a preset name or comma-separated node ids, got {value!r}"
        )
    return {"sensor_set": value, "custom_removal": None}


def sensor_label(config: RunConfig) -> str:
    if config.custom_removal is None:
        return config.sensor_set
    return "custom_" + "-".join(str(node) for node in sorted(set(config.custom_removal)))


def with_fields(config: RunConfig, **fields: Any) -> RunConfig:
    return RunConfig.model_validate({**config.model_dump(), **fields})


def with_seed(config: RunConfig, seed: int, name: str) -> RunConfig:
    return with_fields(config, seed=seed, name=name)


def parse_seeds(text: str) -> list[int]:
    try:
        seeds = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got {text!r}") from None
    if not seeds:
        raise argparse.ArgumentTypeError("at least one seed is required")
    return list(dict.fromkeys(seeds))


def build_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig.load(
        args.config,
        seed=args.seed,
        strategy=getattr(args, "strategy", None),
        out=getattr(args, "out", None),
        parallel_folds=getattr(args, "parallel_folds", None),
        corpus=getattr(args, "corpus", None),
        name=getattr(args, "name", None),
    )
    sensor_set = getattr(args, "sensor_set", None)
    if sensor_set is not None:
        config = with_fields(config, **sensor_fields(sensor_set))
    search_result = getattr(args, "search_result", None)
    if search_result:
        result = SearchResult.model_validate_json(Path(search_result).read_text(encoding="utf-8"))
        config = config.model_copy(
            update={
                "train": result.apply(config.train),
                "exclude_subjects": sorted(set(config.exclude_subjects) | set(result.holdout_subjects)),
            }
        )
        logger.info("Applied search result", path=search_result, holdout=result.holdout_subjects)
    return config


def require_corpus(config: RunConfig) -> str:
    if config.corpus is None:
        raise ConfigurationError("no corpus manifest given; set 'corpus' in the config or pass --corpus")
    return config.corpus


def loso_subjects(config: RunConfig) -> list[str]:
    excluded = set(config.exclude_subjects)
    return [s for s in subject_ids(load_corpus(require_corpus(config))) if s not in excluded]


def train_run(config: RunConfig) -> MetricsReport:
    config = config.model_copy(update={"corpus": str(Path(require_corpus(config)).resolve())})
    subjects = loso_subjects(config)
    config.graph()
    store = RunStore(config.run_dir)
    store.write_text(config.to_json() + "\n", "config.json")
    logger.info(
        "Starting LOSO run",
        run=config.name,
        strategy=config.train.strategy,
        sensor_set=config.sensors().name,
        folds=len(subjects),
        parallel_folds=config.parallel_folds,
    )
    run_folds(config, subjects, config.parallel_folds)
    return evaluate_run(config.run_dir)


def evaluate_run(run_dir: str | Path) -> MetricsReport:
    store = RunStore(run_dir)
    raw = store.read_json("config.json")
    if raw is None:
        raise ConfigurationError(f"{run_dir} is not a run directory (no config.json)")
    config = RunConfig.model_validate(raw)
    strategy_name = config.train.strategy
    trials = load_corpus(require_corpus(config))
    excluded = set(config.exclude_subjects)
    folds = [s for s in subject_ids(trials) if s not in excluded]
    check_complete(store, strategy_name, folds)

    graph = config.graph()
    strategy = StrategyRegistry.create(config.train, config.har_spec(), config.pbd_spec(), graph)
    predictions: dict[str, FoldPredictions] = {}
    selected: dict[str, int | None] = {}
    for fold in folds:
        frame = store.read_csv(
            fold_key(strategy_name, fold, "predictions.csv"),
            dtype={"subject_id": str, "trial_kind": str},
            keep_default_na=False,
            float_precision="round_trip",
        )
        predictions[fold] = FoldPredictions.from_frame(frame)
        summary = store.read_json(fold_key(strategy_name, fold, "fold.json")) or {}
        selected[fold] = summary.get("selected_har_epoch")

        har, pbd = strategy.restore(
            store.read_checkpoint(fold_key(strategy_name, fold, "har.ckpt")),
            store.read_checkpoint(fold_key(strategy_name, fold, "pbd.ckpt")),
        )
        for trial in trials:
            if trial.subject_id == fold:
                timeline = trace(trial, strategy, har, pbd, config.window, fold)
                store.write_csv(timeline, f"traces/{trial.trial_id}.csv")

    report, curve = build_report(
        config.name, strategy_name, config.sensors().name, predictions, selected, graph.node_count
    )
    store.write_text(report.model_dump_json(indent=2) + "\n", "metrics.json")
    store.write_text(report.to_text(), "metrics.txt")
    store.write_csv(curve.to_frame(), "pr_curve.csv")
    logger.info("Run evaluated", run=str(run_dir), folds=len(folds), pr_auc=report.pr_auc)
    return report


def load_report(run_dir: str | Path) -> MetricsReport:
    path = Path(run_dir) / "metrics.json"
    if not path.exists():
        raise ConfigurationError(f"{run_dir} has no metrics.json; evaluate the run first")
    return MetricsReport.model_validate_json(path.read_text(encoding="utf-8"))


def write_comparison(reports: Sequence[MetricsReport], directory: str | Path, stem: str) -> str:
    store = RunStore(directory)
    table = comparison_table(reports)
    text = format_table(table)
    store.write_csv(table, f"{stem}.csv")
    store.write_text(text, f"{stem}.txt")
    return text


def cmd_synth(args: argparse.Namespace) -> int:
    config = RunConfig.load(args.config, seed=args.seed)
    target = Path(args.out or config.corpus or "corpus")
    if target.suffix == ".txt":
        target = target.parent
    trials = synth_generate(config.synth, config.seed)
    manifest = save_corpus(trials, target)
    RunStore(target).write_json(
        {
            "seed": config.seed,
            "synth": config.synth.model_dump(),
            "trials": corpus_statistics(trials),
        },
        "generation.json",
    )
    logger.info("Synthetic corpus written", manifest=str(manifest), trials=len(trials))
    print(manifest)
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    report = train_run(build_config(args))
    print(report.to_text(), end="")
    return 0


def write_study(
    runs: Sequence[tuple[str, int, MetricsReport]],
    group: str,
    claims: Sequence[Claim],
    directory: str | Path,
    stem: str,
) -> str:
    """Per-run table, medians and ordering checks of a seed study; returns the median text."""
    store = RunStore(directory)
    table, medians, summary = summarize(runs, group, claims)
    store.write_csv(table, f"{stem}.csv")
    store.write_text(format_table(table), f"{stem}.txt")
    store.write_csv(medians, f"{stem}_median.csv")
    store.write_text(summary.model_dump_json(indent=2) + "\n", f"{stem}_summary.json")
    text = study_text(medians, summary)
    store.write_text(text, f"{stem}_median.txt")
    return text


def cmd_reduce(args: argparse.Namespace) -> int:
    base = build_config(args)
    choices = [with_fields(base, **sensor_fields(value)) for value in args.sensor_sets or []] or [base]
    seeds = args.seeds or [base.seed]
    sweep = len(choices) > 1 or args.seeds is not None

    runs = []
    for choice in choices:
        label = sensor_label(choice)
        for seed in seeds:
            name = base.name if args.name is not None and not sweep else f"{base.name}_{label}"
            if args.seeds is not None:
                name = f"{name}_s{seed}"
            report = train_run(with_seed(choice, seed, name))
            runs.append((label, seed, report))
            if not sweep:
                print(report.to_text(), end="")

    if sweep:
        claims = sensor_claims(label for label, _, _ in runs)
        print(write_study(runs, "sensors", claims, base.run_dir, "reduction"), end="")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    report = evaluate_run(args.run_dir)
    print(report.to_text(), end="")
    return 0


def cmd_search(args: argparse.Namespace) -> int:
    config = build_config(args)
    trials = load_corpus(require_corpus(config))
    graph = config.graph()
    store = RunStore(config.run_dir)
    store.write_text(config.to_json() + "\n", "config.json")

    selections = []
    for seed in args.seeds or [config.seed]:
        seeded = with_seed(config, seed, config.name)
        result = grid_search(
            trials,
            seeded.search,
            seeded.train,
            graph,
            seeded.har_spec(),
            seeded.pbd_spec(),
            seeded.window,
            seeded.augment,
        )
        key = "search.json" if args.seeds is None else f"search_s{seed}.json"
        path = store.write_text(result.model_dump_json(indent=2) + "\n", key)
        for module, search in result.modules.items():
            best = search.best
            print(f"{module}: gamma={best.gamma} beta={best.beta} lr={best.lr} {search.metric}={best.score:.4f}")
            selections.append(
                {
                    "seed": seed,
                    "module": module,
                    "gamma": best.gamma,
                    "beta": best.beta,
                    "lr": best.lr,
                    "score": best.score,
                }
            )
        print(path)

    if args.seeds is not None:
        table = pd.DataFrame(selections)
        store.write_csv(table, "search_seeds.csv")
        text = focal_selection_text(table)
        store.write_text(format_table(table) + "\n" + text, "search_seeds.txt")
        print(text, end="")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    reports = [load_report(run_dir) for run_dir in args.run_dirs]
    print(write_comparison(reports, args.out or ".", "comparison"), end="")
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    base = build_config(args)
    runs = []
    for seed in args.seeds or [base.seed]:
        for variant, flags in ABLATION_VARIANTS.items():
            name = f"{base.name}_{variant}" if args.seeds is None else f"{base.name}_{variant}_s{seed}"
            train = base.train.model_copy(update={"strategy": "PretrainedFrozen", **flags})
            config = with_seed(base.model_copy(update={"train": train}), seed, name)
            logger.info("Running ablation variant", variant=variant, seed=seed, **flags)
            runs.append((variant, seed, train_run(config)))
    print(write_study(runs, "variant", ABLATION_CLAIMS, base.run_dir, "ablation"), end="")
    return 0


class CliParser(argparse.ArgumentParser):
    """Usage errors leave through the same JSON error line as every other failure."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


SENSOR_SET_HELP = (
    "preset name (full22, one_side14, one_side7, symmetric7) or comma-separated node ids to remove"
)


def build_parser() -> argparse.ArgumentParser:
    parser = CliParser(prog="harpbd", description="Hierarchical HAR-PBD training and evaluation")
    commands = parser.add_subparsers(dest="command", required=True)

    def common(sub: argparse.ArgumentParser) -> None:
        sub.add_argument("--config", help="JSON run configuration")
        sub.add_argument("--seed", type=int)

    def run_flags(sub: argparse.ArgumentParser, sensor_sets: bool = False) -> None:
        common(sub)
        sub.add_argument("--corpus", help="corpus manifest or directory")
        sub.add_argument("--name", help="run name (directory under --out)")
        sub.add_argument("--out", help="parent directory of run directories")
        if sensor_sets:
            sub.add_argument(
                "--sensor-set",
                dest="sensor_sets",
                action="append",
                help=SENSOR_SET_HELP + "; repeat to compare",
            )
        else:
            sub.add_argument("--sensor-set", help=SENSOR_SET_HELP)
        sub.add_argument("--parallel-folds", type=int)
        sub.add_argument("--search-result", help="search.json whose selection and hold-out to apply")

    def seed_flag(sub: argparse.ArgumentParser) -> None:
        sub.add_argument(
            "--seeds", type=parse_seeds, help="comma-separated seeds; one run per seed, summarized by median"
        )

    synth = commands.add_parser("synth", help="generate a synthetic corpus")
    common(synth)
    synth.add_argument("--out", help="corpus directory")
    synth.set_defaults(handler=cmd_synth)

    train = commands.add_parser("train", help="LOSO training with one strategy")
    run_flags(train)
    train.add_argument("--strategy", choices=STRATEGY_NAMES)
    train.set_defaults(handler=cmd_train)

    reduce = commands.add_parser("reduce", help="LOSO training on reduced sensor sets")
    run_flags(reduce, sensor_sets=True)
    reduce.add_argument("--strategy", choices=STRATEGY_NAMES)
    seed_flag(reduce)
    reduce.set_defaults(handler=cmd_reduce)

    evaluate = commands.add_parser("eval", help="evaluate a completed run directory")
    evaluate.add_argument("run_dir")
    evaluate.set_defaults(handler=cmd_eval)

    search = commands.add_parser("search", help="grid search over gamma, beta and learning rate")
    run_flags(search)
    seed_flag(search)
    search.set_defaults(handler=cmd_search)

    report = commands.add_parser("report", help="compare the metrics of several runs")
    report.add_argument("run_dirs", nargs="+")
    report.add_argument("--out", help="directory for comparison.csv and comparison.txt")
    report.set_defaults(handler=cmd_report)

    ablate = commands.add_parser("ablate", help="PBD component study with the frozen strategy")
    run_flags(ablate)
    seed_flag(ablate)
    ablate.set_defaults(handler=cmd_ablate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    configure_logging()
    command = None
    try:
        args = build_parser().parse_args(argv)
        command = args.command
        logger.debug("Registered strategies", strategies=StrategyRegistry.list_strategies())
        return args.handler(args)
    except (HarPbdError, ValidationError) as e:
        print(json.dumps({"error": type(e).__name__, "message": str(e)}), file=sys.stderr)
        return 2
    except Exception as e:
        logger.exception("Command failed", command=command)
        print(json.dumps({"error": type(e).__name__, "message": str(e)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
