import numpy as np
import pandas as pd
import pytest

from harpbd.data import WindowConfig
from harpbd.errors import ContractViolation
from harpbd.evaluation.metrics import (
    accuracy,
    average_precision,
    confusion_matrix,
    macro_f1,
    per_class_f1,
    pr_auc,
)
from harpbd.evaluation.report import build_report, comparison_table, fold_metrics, format_table
from harpbd.evaluation.study import (
    ABLATION_CLAIMS,
    focal_selection_text,
    median_table,
    ordering_checks,
    sensor_claims,
    study_text,
    summarize,
)
from harpbd.evaluation.traces import TRACE_COLUMNS, trace
from harpbd.models.base import FoldPredictions
from harpbd.models.registry import StrategyRegistry


def make_predictions(subject, true_act, pred_act, true_prot, pred_prot, scores):
    n = len(true_act)
    return FoldPredictions(
        subject_id=[subject] * n,
        trial_kind=["normal"] * n,
        window_start=np.arange(n, dtype=np.int64) * 90,
        true_act=np.asarray(true_act, dtype=np.int64),
        pred_act=np.asarray(pred_act, dtype=np.int64),
        true_prot=np.asarray(true_prot, dtype=np.int64),
        pred_prot=np.asarray(pred_prot, dtype=np.int64),
        prot_score=np.asarray(scores, dtype=np.float64),
    )


def test_diagonal_confusion_matrix_is_perfect():
    cm = np.diag([3, 5, 2, 4, 1, 6])
    assert accuracy(cm) == 1.0
    assert macro_f1(cm) == 1.0


def test_binary_macro_f1_reference():
    cm = np.array([[40, 10], [20, 30]])
    assert accuracy(cm) == pytest.approx(0.7)
    assert macro_f1(cm) == pytest.approx(0.6970, abs=1e-4)


def test_macro_f1_ignores_class_order():
    rng = np.random.default_rng(6)
    for _ in range(20):
        cm = rng.integers(0, 30, size=(6, 6))
        order = rng.permutation(6)
        assert macro_f1(cm[order][:, order]) == pytest.approx(macro_f1(cm), abs=1e-12)
        assert accuracy(cm[order][:, order]) == pytest.approx(accuracy(cm), abs=1e-12)


def test_absent_class_scores_zero_f1():
    cm = confusion_matrix([0, 0, 1], [0, 0, 0], 3)
    np.testing.assert_allclose(per_class_f1(cm), [0.8, 0.0, 0.0])


def test_empty_confusion_matrix_is_rejected():
    with pytest.raises(ContractViolation):
        accuracy(np.zeros((2, 2), dtype=int))


def test_confusion_matrix_orientation():
    cm = confusion_matrix([0, 1, 1], [1, 1, 0], 2)
    np.testing.assert_array_equal(cm, [[0, 1], [1, 1]])


def test_average_precision_of_perfect_ranking():
    assert average_precision([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0


def test_constant_scores_give_prevalence():
    assert average_precision([0.5] * 8, [1, 0, 0, 1, 0, 0, 0, 0]) == pytest.approx(0.25)


def test_average_precision_reference_ranking():
    assert average_precision([0.9, 0.8, 0.7, 0.6], [1, 0, 1, 0]) == pytest.approx(0.8333, abs=1e-4)


def test_average_precision_is_rank_based():
    rng = np.random.default_rng(8)
    scores = rng.random(50)
    labels = (rng.random(50) < 0.3).astype(int)
    labels[0] = 1
    assert average_precision(scores, labels) == average_precision(np.exp(3 * scores), labels)


def test_average_precision_needs_positives():
    with pytest.raises(ContractViolation):
        average_precision([0.3, 0.2], [0, 0])


def test_pr_curve_recall_is_non_decreasing():
    rng = np.random.default_rng(2)
    labels = (rng.random(40) < 0.4).astype(int)
    labels[:2] = [0, 1]
    curve = pr_auc(rng.random(40), labels)
    assert np.all(np.diff(curve.recall) >= 0)
    assert curve.recall[-1] == 1.0
    assert list(curve.to_frame().columns) == ["recall", "precision"]


def test_fold_without_positives_has_no_pr_auc():
    predictions = make_predictions("H01", [0, 1], [0, 1], [0, 0], [0, 1], [0.2, 0.7])
    metrics = fold_metrics("H01", predictions)
    assert metrics.pr_auc is None
    assert metrics.pbd.acc == 0.5


def test_report_pools_windows_across_folds():
    predictions = {
        "C02": make_predictions("C02", [1, 2, 3], [1, 2, 0], [1, 0, 1], [1, 0, 0], [0.9, 0.1, 0.4]),
        "C01": make_predictions("C01", [0], [0], [0], [0], [0.3]),
    }
    report, curve = build_report("run", "PretrainedFrozen", "full22", predictions, {"C01": 4}, 22)
    assert report.windows == 4
    assert [f.fold for f in report.folds] == ["C01", "C02"]
    assert report.folds[0].selected_har_epoch == 4
    assert report.har.acc == pytest.approx(0.75)
    assert report.fold_average.har_acc == pytest.approx((1.0 + 2 / 3) / 2)
    # pooled ranking 0.9(+) 0.4(+) 0.3(-) 0.1(-)
    assert report.pr_auc == 1.0
    assert curve.auc == report.pr_auc
    assert "PR-AUC 1.0000" in report.to_text()


def test_comparison_table_has_one_row_per_report():
    predictions = {"C01": make_predictions("C01", [0, 1], [0, 1], [1, 0], [1, 0], [0.8, 0.2])}
    first, _ = build_report("a", "PretrainedFrozen", "full22", predictions)
    second, _ = build_report("b", "JointBothCfcc", "one_side7", predictions)
    table = comparison_table([first, second])
    assert list(table["run"]) == ["a", "b"]
    assert "one_side7" in format_table(table)


@pytest.fixture
def frozen(train_config, har_spec, pbd_spec, small_graph):
    strategy = StrategyRegistry.create(train_config, har_spec, pbd_spec, small_graph)
    har, pbd = strategy.init_params("C01")
    return strategy, har, pbd


def test_trace_has_one_row_per_window(tiny_trials, frozen):
    strategy, har, pbd = frozen
    trial = next(t for t in tiny_trials if t.subject_id == "C01")
    frame = trace(trial, strategy, har, pbd, WindowConfig(length=20, stride=10), "C01")
    assert list(frame.columns) == TRACE_COLUMNS
    assert len(frame) == (trial.length - 20) // 10 + 1
    assert list(frame["window_start"]) == list(range(0, 10 * len(frame), 10))


def test_trace_of_short_trial_is_empty(tiny_trials, frozen):
    strategy, har, pbd = frozen
    trial = next(t for t in tiny_trials if t.subject_id == "C01")
    frame = trace(trial, strategy, har, pbd, WindowConfig(length=trial.length + 1, stride=10), "C01")
    assert frame.empty
    assert list(frame.columns) == TRACE_COLUMNS


def test_trace_refuses_other_subject(tiny_trials, frozen):
    strategy, har, pbd = frozen
    trial = next(t for t in tiny_trials if t.subject_id == "C02")
    with pytest.raises(ContractViolation):
        trace(trial, strategy, har, pbd, WindowConfig(length=20, stride=10), "C01")


def study_frame(rows):
    return pd.DataFrame(rows, columns=["variant", "seed", "har_macro_f1", "pbd_macro_f1", "pr_auc"])


def test_median_table_takes_median_per_group():
    runs = study_frame(
        [
            ("pbd", 1, 0.5, 0.40, 0.30),
            ("pbd", 2, 0.6, 0.10, 0.20),
            ("pbd", 3, 0.7, 0.30, 0.90),
            ("pbd_cfcc", 1, 0.5, 0.50, 0.40),
            ("pbd_cfcc", 2, 0.5, 0.70, 0.60),
        ]
    )
    medians = median_table(runs, "variant")
    assert list(medians["variant"]) == ["pbd", "pbd_cfcc"]
    assert list(medians["seeds"]) == [3, 2]
    assert medians.loc[0, "pbd_macro_f1"] == pytest.approx(0.30)
    assert medians.loc[0, "pr_auc"] == pytest.approx(0.30)
    assert medians.loc[1, "pr_auc"] == pytest.approx(0.50)


def test_ordering_checks_use_strict_and_weak_relations():
    medians = median_table(
        study_frame(
            [
                ("pbd", 1, 0.5, 0.3, 0.3),
                ("pbd_cfcc", 1, 0.5, 0.3, 0.4),
                ("hierarchical", 1, 0.5, 0.4, 0.4),
                ("hierarchical_cfcc", 1, 0.5, 0.4, 0.4),
            ]
        ),
        "variant",
    )
    checks = ordering_checks(medians, "variant", ABLATION_CLAIMS)
    assert len(checks) == 2 * len(ABLATION_CLAIMS)
    verdicts = {(c.metric, c.better, c.worse): c.holds for c in checks}
    # equal medians fail ">" and pass ">="
    assert verdicts[("pbd_macro_f1", "pbd_cfcc", "pbd")] is False
    assert verdicts[("pr_auc", "pbd_cfcc", "pbd")] is True
    assert verdicts[("pbd_macro_f1", "hierarchical_cfcc", "hierarchical")] is True
    assert "does not hold" in checks[0].to_text()


def test_ordering_checks_skip_missing_groups():
    medians = median_table(study_frame([("pbd", 1, 0.5, 0.3, 0.3)]), "variant")
    assert ordering_checks(medians, "variant", ABLATION_CLAIMS) == []


def test_sensor_claims_rank_adjacent_tiers():
    claims = sensor_claims(["one_side7", "full22", "symmetric7", "one_side14", "custom_2-3"])
    assert claims == [
        ("full22", ">=", "one_side14"),
        ("one_side14", ">=", "one_side7"),
        ("one_side14", ">=", "symmetric7"),
    ]
    assert sensor_claims(["full22", "symmetric7"]) == [("full22", ">=", "symmetric7")]
    assert sensor_claims(["custom_5"]) == []


def test_summarize_records_seeds_and_checks():
    predictions = {"C01": make_predictions("C01", [0, 1], [0, 1], [1, 0], [1, 0], [0.8, 0.2])}
    runs = []
    for seed in (3, 1):
        for variant in ("pbd", "pbd_cfcc"):
            report, _ = build_report(f"{variant}_s{seed}", "PretrainedFrozen", "full22", predictions)
            runs.append((variant, seed, report))
    table, medians, summary = summarize(runs, "variant", ABLATION_CLAIMS)
    assert list(table.columns[:3]) == ["variant", "seed", "run"]
    assert summary.seeds == [1, 3]
    assert summary.runs == 4
    assert [c.better for c in summary.checks] == ["pbd_cfcc", "pbd_cfcc"]
    text = study_text(medians, summary)
    assert text.startswith("median over 2 seed(s)")
    assert "pbd_macro_f1: pbd_cfcc > pbd does not hold" in text


def test_focal_selection_counts_positive_gamma():
    selections = pd.DataFrame(
        {"module": ["HAR", "PBD", "HAR", "PBD"], "seed": [1, 1, 2, 2], "gamma": [0.0, 2.0, 0.5, 1.0]}
    )
    text = focal_selection_text(selections)
    assert text.splitlines() == [
        "HAR: gamma > 0 selected in 1 of 2 seed(s)",
        "PBD: gamma > 0 selected in 2 of 2 seed(s)",
    ]
