import json

import pandas as pd
import pytest

from harpbd.evaluation.metrics import confusion_matrix
from harpbd.evaluation.traces import TRACE_COLUMNS
from harpbd.main import main

TINY_CONFIG = {
    "sensor_set": "symmetric7",
    "synth": {
        "subjects": 4,
        "healthy_subjects": 1,
        "sequence_seconds": 2,
        "bout_seconds": 0.5,
        "rater_noise": 0.0,
    },
    "window": {"length": 20, "stride": 10},
    "augment": {"enabled": False},
    "train": {"epochs": 1, "batch_size": 16},
    "har_model": {"gc_kernels": 4, "lstm_layers": 1, "lstm_hidden": 4, "dropout": 0.0},
    "pbd_model": {
        "gc_layers": 1,
        "gc_kernels": 4,
        "lstm_layers": 1,
        "lstm_hidden": 4,
        "dropout": 0.0,
    },
    "search": {
        "holdout_subjects": 1,
        "gammas": [0.0],
        "betas": [0.9999],
        "lrs": [0.001],
        "epochs": 1,
    },
}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    config = root / "tiny.json"
    config.write_text(json.dumps(TINY_CONFIG))
    assert main(["synth", "--config", str(config), "--out", str(root / "corpus")]) == 0
    return root, config


@pytest.fixture(scope="module")
def trained_run(workspace):
    root, config = workspace
    argv = [
        "train",
        "--config", str(config),
        "--corpus", str(root / "corpus"),
        "--out", str(root / "runs"),
        "--name", "frozen",
    ]
    assert main(argv) == 0
    return root / "runs" / "frozen"


def run_args(workspace, command, name, *extra):
    root, config = workspace
    return [
        command,
        "--config", str(config),
        "--corpus", str(root / "corpus"),
        "--out", str(root / "runs"),
        "--name", name,
        *extra,
    ]


def test_synth_is_byte_identical(workspace, tmp_path):
    root, config = workspace
    assert main(["synth", "--config", str(config), "--out", str(tmp_path / "again")]) == 0
    first = sorted(p.name for p in (root / "corpus").iterdir())
    assert first == sorted(p.name for p in (tmp_path / "again").iterdir())
    for name in first:
        assert (root / "corpus" / name).read_bytes() == (tmp_path / "again" / name).read_bytes()


def test_train_writes_fold_artifacts(trained_run):
    checkpoints = sorted(trained_run.glob("PretrainedFrozen/*/*.ckpt"))
    assert len(checkpoints) == 8
    assert sorted({p.parent.name for p in checkpoints}) == ["C01", "C02", "C03", "H01"]
    for name in ("config.json", "metrics.json", "metrics.txt", "pr_curve.csv"):
        assert (trained_run / name).exists()
    fold = json.loads((trained_run / "PretrainedFrozen" / "C01" / "fold.json").read_text())
    assert fold["selected_har_epoch"] == 1
    log = pd.read_csv(trained_run / "PretrainedFrozen" / "C01" / "pbd_log.csv")
    assert list(log.columns) == ["epoch", "loss", "acc", "macro_f1"]


def test_traces_cover_every_trial(trained_run, workspace):
    root, _ = workspace
    manifest = (root / "corpus" / "manifest.txt").read_text().split()
    traces = sorted(p.stem for p in (trained_run / "traces").glob("*.csv"))
    assert traces == sorted(name.removesuffix(".csv") for name in manifest)


def test_traces_reproduce_fold_predictions(trained_run):
    frames = []
    for fold in sorted((trained_run / "PretrainedFrozen").iterdir()):
        predictions = pd.read_csv(
            fold / "predictions.csv", dtype={"subject_id": str, "trial_kind": str}, keep_default_na=False
        )
        for kind, rows in predictions.groupby("trial_kind", sort=False):
            timeline = pd.read_csv(trained_run / "traces" / f"{fold.name}_{kind}.csv")
            pd.testing.assert_frame_equal(timeline, rows[TRACE_COLUMNS].reset_index(drop=True))
            frames.append(timeline)

    traces = pd.concat(frames, ignore_index=True)
    report = json.loads((trained_run / "metrics.json").read_text())
    assert len(traces) == report["windows"]
    har = confusion_matrix(traces["true_act"], traces["pred_act"], 6)
    pbd = confusion_matrix(traces["true_prot"], traces["pred_prot"], 2)
    assert har.tolist() == report["har"]["confusion_matrix"]
    assert pbd.tolist() == report["pbd"]["confusion_matrix"]


def test_full22_reduction_matches_plain_training(workspace, tmp_path):
    root, _ = workspace
    plain = {key: value for key, value in TINY_CONFIG.items() if key != "sensor_set"}
    config = tmp_path / "plain.json"
    config.write_text(json.dumps(plain))
    common = ["--config", str(config), "--corpus", str(root / "corpus"), "--out", str(tmp_path)]
    assert main(["train", *common, "--name", "plain"]) == 0
    assert main(["reduce", *common, "--name", "reduced", "--sensor-set", "full22"]) == 0

    for path in sorted((tmp_path / "plain" / "PretrainedFrozen").rglob("*")):
        if path.suffix in {".ckpt", ".csv"}:
            twin = tmp_path / "reduced" / path.relative_to(tmp_path / "plain")
            assert twin.read_bytes() == path.read_bytes()
    first = json.loads((tmp_path / "plain" / "metrics.json").read_text())
    second = json.loads((tmp_path / "reduced" / "metrics.json").read_text())
    assert first["node_count"] == second["node_count"] == 22
    for key in ("windows", "har", "pbd", "pr_auc", "folds"):
        assert first[key] == second[key]


def test_eval_is_reproducible(trained_run, capsys):
    before = (trained_run / "metrics.json").read_bytes()
    assert main(["eval", str(trained_run)]) == 0
    first = capsys.readouterr().out
    assert main(["eval", str(trained_run)]) == 0
    assert capsys.readouterr().out == first
    assert (trained_run / "metrics.json").read_bytes() == before


def test_eval_reports_missing_fold(trained_run, tmp_path, capsys):
    broken = tmp_path / "broken"
    for path in trained_run.rglob("*"):
        if path.is_file():
            target = broken / path.relative_to(trained_run)
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(path.read_bytes())
    (broken / "PretrainedFrozen" / "C02" / "pbd.ckpt").unlink()

    assert main(["eval", str(broken)]) == 2
    error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert error["error"] == "MissingFoldError"
    assert "C02" in error["message"]


def test_unknown_config_key_exits_with_two(workspace, tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({**TINY_CONFIG, "learning_rate": 0.1}))
    assert main(["train", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error"] == "ValidationError"


def last_error(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_invalid_strategy_is_a_usage_error(workspace, capsys):
    assert main(run_args(workspace, "train", "nope", "--strategy", "Frozen")) == 2
    captured = capsys.readouterr().err
    assert captured.startswith("usage: harpbd train")
    error = json.loads(captured.strip().splitlines()[-1])
    assert error["error"] == "UsageError"
    assert "invalid choice" in error["message"]


def test_malformed_seed_list_is_a_usage_error(workspace, capsys):
    assert main(run_args(workspace, "ablate", "nope", "--seeds", "1,two")) == 2
    assert last_error(capsys)["error"] == "UsageError"


def test_missing_command_is_a_usage_error(capsys):
    assert main([]) == 2
    assert last_error(capsys)["error"] == "UsageError"


def test_sensor_set_mixing_names_and_ids_is_rejected(workspace, capsys):
    assert main(run_args(workspace, "train", "nope", "--sensor-set", "full22,3")) == 2
    assert last_error(capsys)["error"] == "ConfigurationError"


def test_missing_corpus_exits_with_two(workspace, tmp_path):
    _, config = workspace
    assert main(["train", "--config", str(config), "--out", str(tmp_path)]) == 2


def test_parallel_folds_match_sequential(workspace, trained_run):
    assert main(run_args(workspace, "train", "parallel", "--parallel-folds", "2")) == 0
    parallel = json.loads((trained_run.parent / "parallel" / "metrics.json").read_text())
    sequential = json.loads((trained_run / "metrics.json").read_text())
    for key in ("windows", "har", "pbd", "pr_auc", "fold_average", "folds"):
        assert parallel[key] == sequential[key]


@pytest.mark.parametrize("sensor_set,nodes", [("one_side7", 7), ("symmetric7", 7)])
def test_reduce_names_run_after_sensor_set(workspace, sensor_set, nodes):
    root, config = workspace
    argv = [
        "reduce",
        "--config", str(config),
        "--corpus", str(root / "corpus"),
        "--out", str(root / "runs"),
        "--sensor-set", sensor_set,
    ]
    assert main(argv) == 0
    report = json.loads((root / "runs" / f"run_{sensor_set}" / "metrics.json").read_text())
    assert report["sensor_set"] == sensor_set
    assert report["node_count"] == nodes


def test_joint_strategy_run(workspace):
    root, _ = workspace
    assert main(run_args(workspace, "train", "joint", "--strategy", "JointBothCfcc")) == 0
    run = root / "runs" / "joint"
    assert len(list(run.glob("JointBothCfcc/*/*.ckpt"))) == 8
    assert json.loads((run / "metrics.json").read_text())["strategy"] == "JointBothCfcc"


def test_report_compares_runs(workspace, trained_run, tmp_path, capsys):
    assert main(run_args(workspace, "train", "compare_joint", "--strategy", "JointPbdCfcc")) == 0
    capsys.readouterr()
    other = trained_run.parent / "compare_joint"
    assert main(["report", str(trained_run), str(other), "--out", str(tmp_path)]) == 0
    assert "compare_joint" in capsys.readouterr().out
    table = pd.read_csv(tmp_path / "comparison.csv")
    assert list(table["run"]) == ["frozen", "compare_joint"]
    assert (tmp_path / "comparison.txt").exists()


def test_report_needs_evaluated_runs(tmp_path):
    assert main(["report", str(tmp_path)]) == 2


def test_ablate_runs_four_variants(workspace):
    root, _ = workspace
    assert main(run_args(workspace, "ablate", "study")) == 0
    table = pd.read_csv(root / "runs" / "study" / "ablation.csv")
    assert list(table["run"]) == [
        "study_pbd",
        "study_pbd_cfcc",
        "study_hierarchical",
        "study_hierarchical_cfcc",
    ]
    flat = json.loads((root / "runs" / "study_pbd" / "config.json").read_text())
    assert flat["train"]["hierarchical"] is False


def test_search_then_train_with_result(workspace, capsys):
    root, _ = workspace
    assert main(run_args(workspace, "search", "grid")) == 0
    result = json.loads((root / "runs" / "grid" / "search.json").read_text())
    assert set(result["modules"]) == {"HAR", "PBD"}
    assert len(result["modules"]["HAR"]["evaluated"]) == 1
    held = result["holdout_subjects"]
    assert len(held) == 1 and held[0].startswith("C")
    assert "HAR: gamma=0.0" in capsys.readouterr().out

    search_json = str(root / "runs" / "grid" / "search.json")
    assert main(run_args(workspace, "train", "tuned", "--search-result", search_json)) == 0
    config = json.loads((root / "runs" / "tuned" / "config.json").read_text())
    assert config["exclude_subjects"] == held
    assert config["train"]["lr_pbd"] == 0.001
    folds = {p.name for p in (root / "runs" / "tuned" / "PretrainedFrozen").iterdir()}
    assert held[0] not in folds
    assert len(folds) == 3


def test_reduce_takes_custom_removal_list(workspace):
    root, _ = workspace
    assert main(run_args(workspace, "reduce", "arm", "--sensor-set", "2,3,4")) == 0
    report = json.loads((root / "runs" / "arm" / "metrics.json").read_text())
    assert report["sensor_set"] == "custom"
    assert report["node_count"] == 19
    config = json.loads((root / "runs" / "arm" / "config.json").read_text())
    assert config["custom_removal"] == [2, 3, 4]


def test_reduce_sweep_summarizes_sensor_sets(workspace, capsys):
    root, _ = workspace
    argv = run_args(
        workspace, "reduce", "sweep", "--sensor-set", "one_side14", "--sensor-set", "one_side7", "--seeds", "5"
    )
    assert main(argv) == 0
    for run in ("sweep_one_side14_s5", "sweep_one_side7_s5"):
        assert (root / "runs" / run / "metrics.json").exists()

    medians = pd.read_csv(root / "runs" / "sweep" / "reduction_median.csv")
    assert list(medians["sensors"]) == ["one_side14", "one_side7"]
    assert list(medians["seeds"]) == [1, 1]
    summary = json.loads((root / "runs" / "sweep" / "reduction_summary.json").read_text())
    assert summary["seeds"] == [5]
    assert [(c["metric"], c["better"], c["worse"]) for c in summary["checks"]] == [
        ("pbd_macro_f1", "one_side14", "one_side7"),
        ("pr_auc", "one_side14", "one_side7"),
    ]
    assert "one_side14 >= one_side7" in capsys.readouterr().out


def test_ablate_over_seeds_reports_medians(workspace):
    root, _ = workspace
    assert main(run_args(workspace, "ablate", "seeded", "--seeds", "1,2")) == 0
    study = root / "runs" / "seeded"
    runs = pd.read_csv(study / "ablation.csv")
    assert len(runs) == 8
    assert runs["run"].iloc[0] == "seeded_pbd_s1"
    assert runs["run"].iloc[-1] == "seeded_hierarchical_cfcc_s2"

    medians = pd.read_csv(study / "ablation_median.csv")
    assert list(medians["variant"]) == ["pbd", "pbd_cfcc", "hierarchical", "hierarchical_cfcc"]
    assert list(medians["seeds"]) == [2, 2, 2, 2]
    flat = runs[runs["variant"] == "pbd"]["har_macro_f1"]
    assert medians.loc[0, "har_macro_f1"] == pytest.approx(flat.mean())

    summary = json.loads((study / "ablation_summary.json").read_text())
    assert summary["seeds"] == [1, 2]
    assert len(summary["checks"]) == 8
    seeds = json.loads((root / "runs" / "seeded_pbd_s2" / "config.json").read_text())
    assert seeds["seed"] == seeds["train"]["seed"] == 2


def test_search_over_seeds_counts_focal_choices(workspace, capsys):
    root, _ = workspace
    assert main(run_args(workspace, "search", "grid_seeds", "--seeds", "1,2")) == 0
    out = capsys.readouterr().out
    directory = root / "runs" / "grid_seeds"
    assert (directory / "search_s1.json").exists()
    assert (directory / "search_s2.json").exists()
    selections = pd.read_csv(directory / "search_seeds.csv")
    assert list(selections["seed"]) == [1, 1, 2, 2]
    assert "PBD: gamma > 0 selected in 0 of 2 seed(s)" in out
