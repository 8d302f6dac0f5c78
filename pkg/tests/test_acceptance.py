"""Five-seed studies on the acceptance corpora. Slow; run with ``pytest -m slow``.

The orderings are recorded in each study's summary and median text rather than
asserted, since small synthetic corpora do not always reproduce them.
"""

import json
from pathlib import Path

import pandas as pd
import pytest

from harpbd.main import main

pytestmark = pytest.mark.slow

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
SEEDS = "1,2,3,4,5"


def prepare(tmp_path_factory, config_name):
    root = tmp_path_factory.mktemp(config_name)
    config = CONFIGS / f"{config_name}.json"
    assert main(["synth", "--config", str(config), "--out", str(root / "corpus")]) == 0
    return root, config


def study_args(root, config, command, name, *extra):
    return [
        command,
        "--config", str(config),
        "--corpus", str(root / "corpus"),
        "--out", str(root / "runs"),
        "--name", name,
        "--seeds", SEEDS,
        *extra,
    ]


@pytest.fixture(scope="module")
def acceptance(tmp_path_factory):
    return prepare(tmp_path_factory, "acceptance")


def test_ablation_medians_over_five_seeds(acceptance):
    root, config = acceptance
    assert main(study_args(root, config, "ablate", "ablation")) == 0
    study = root / "runs" / "ablation"

    medians = pd.read_csv(study / "ablation_median.csv")
    assert list(medians["variant"]) == ["pbd", "pbd_cfcc", "hierarchical", "hierarchical_cfcc"]
    assert list(medians["seeds"]) == [5, 5, 5, 5]
    assert medians["pr_auc"].between(0.0, 1.0).all()

    summary = json.loads((study / "ablation_summary.json").read_text())
    assert summary["seeds"] == [1, 2, 3, 4, 5]
    assert summary["runs"] == 20
    assert {(c["better"], c["worse"]) for c in summary["checks"]} == {
        ("pbd_cfcc", "pbd"),
        ("hierarchical", "pbd"),
        ("hierarchical_cfcc", "pbd_cfcc"),
        ("hierarchical_cfcc", "hierarchical"),
    }
    text = (study / "ablation_median.txt").read_text()
    assert text.startswith("median over 5 seed(s)")
    assert text.count("hold") == len(summary["checks"])


def test_sensor_set_medians_over_five_seeds(acceptance):
    root, config = acceptance
    sets = ["full22", "one_side14", "one_side7", "symmetric7"]
    extra = [arg for name in sets for arg in ("--sensor-set", name)]
    assert main(study_args(root, config, "reduce", "sensors", *extra)) == 0
    study = root / "runs" / "sensors"

    medians = pd.read_csv(study / "reduction_median.csv")
    assert list(medians["sensors"]) == sets
    assert list(medians["seeds"]) == [5, 5, 5, 5]

    summary = json.loads((study / "reduction_summary.json").read_text())
    assert summary["runs"] == 20
    assert {(c["better"], c["worse"]) for c in summary["checks"]} == {
        ("full22", "one_side14"),
        ("one_side14", "one_side7"),
        ("one_side14", "symmetric7"),
    }
    assert all(c["relation"] == ">=" for c in summary["checks"])


def test_rare_protective_search_over_five_seeds(tmp_path_factory, capsys):
    root, config = prepare(tmp_path_factory, "rare_protective")
    assert main(study_args(root, config, "search", "rare")) == 0
    out = capsys.readouterr().out

    selections = pd.read_csv(root / "runs" / "rare" / "search_seeds.csv")
    assert list(selections["seed"]) == [1, 2, 3, 4, 5]
    assert set(selections["module"]) == {"PBD"}
    assert selections["gamma"].isin([0.0, 0.5, 1.0, 1.5, 2.0, 2.5]).all()
    chosen = int((selections["gamma"] > 0).sum())
    assert f"PBD: gamma > 0 selected in {chosen} of 5 seed(s)" in out
    for seed in range(1, 6):
        result = json.loads((root / "runs" / "rare" / f"search_s{seed}.json").read_text())
        assert "PBD" in result["modules"]
