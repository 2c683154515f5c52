import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aspen.errors import ConfigError, UndefinedMetricError
from aspen.metrics import (
    THRESHOLD_GRID,
    accuracy,
    binary_f1,
    macro_f1,
    macro_recall,
    pr_auc,
    precision_recall_curve,
    roc_auc_binary,
    roc_auc_ovr,
    threshold_sweep,
)
from aspen.training import metrics_from_logits

from oracles import grid_threshold, pairwise_auc


def test_grid():
    assert len(THRESHOLD_GRID) == 99
    assert THRESHOLD_GRID[0] == 0.01 and THRESHOLD_GRID[-1] == 0.99


def test_perfect_multiclass_classifier():
    y = np.array([0, 1, 2, 3] * 5)
    logits = np.eye(4)[y] * 10
    row = metrics_from_logits(logits, y, 4, 0.0)
    assert row.acc == row.f1 == row.recall == row.roc_auc == 100.0


def test_all_positive_on_one_to_five_set():
    y = np.array([1] * 10 + [0] * 50)
    row = metrics_from_logits(np.full(60, 5.0), y, 2, 0.0)
    assert round(row.acc, 2) == 16.67
    assert round(row.f1, 2) == 28.57
    assert row.recall == 100.0


def test_macro_scores():
    y = [0, 0, 1, 1, 2, 2]
    p = [0, 1, 1, 1, 2, 0]
    # per-class recall 0.5, 1, 0.5; precision 0.5, 2/3, 1
    assert abs(macro_recall(y, p, 3) - 2 / 3) < 1e-12
    f1 = [0.5, 0.8, 2 / 3]
    assert abs(macro_f1(y, p, 3) - np.mean(f1)) < 1e-12
    assert accuracy(y, p) == 4 / 6


def test_binary_f1_degenerate():
    assert binary_f1([0, 0], [0, 0]) == 0.0
    assert binary_f1([1, 0, 1], [1, 0, 1]) == 1.0


def test_roc_auc_matches_pairwise_oracle():
    r = np.random.default_rng(0)
    for n in (50, 200):
        y = r.integers(0, 2, size=n)
        s = np.round(r.normal(size=n), 1)  # rounding forces ties
        assert abs(roc_auc_binary(y, s) - pairwise_auc(y, s)) < 1e-9


def test_roc_auc_needs_both_classes():
    with pytest.raises(UndefinedMetricError):
        roc_auc_binary([1, 1], [0.2, 0.3])


def test_ovr_auc_averages_one_vs_rest():
    r = np.random.default_rng(1)
    y = r.integers(0, 3, size=60)
    p = r.dirichlet(np.ones(3), size=60)
    ref = np.mean([pairwise_auc(y == k, p[:, k]) for k in range(3)])
    assert abs(roc_auc_ovr(y, p) - ref) < 1e-12


def test_pr_curve_and_area():
    y = [1, 0, 1, 0]
    s = [0.9, 0.8, 0.7, 0.1]
    recall, precision = precision_recall_curve(y, s)
    assert np.allclose(recall, [0, 0.5, 0.5, 1, 1])
    assert np.allclose(precision, [1, 1, 0.5, 2 / 3, 0.5])
    assert pr_auc([1, 1, 0, 0], [0.9, 0.8, 0.2, 0.1]) == 1.0


def test_threshold_sweep_separated():
    probs = np.array([0.05, 0.1, 0.15, 0.2, 0.8, 0.85, 0.9])
    labels = np.array([0, 0, 0, 0, 1, 1, 1])
    assert threshold_sweep(probs, labels) == (0.21, 1.0)


def test_threshold_sweep_exact_labels():
    labels = np.array([0, 1, 1, 0, 1])
    t, f1 = threshold_sweep(labels.astype(float), labels)
    assert f1 == 1.0
    assert binary_f1(labels, labels >= 0.5) == 1.0


def test_threshold_sweep_needs_both_classes():
    with pytest.raises(UndefinedMetricError):
        threshold_sweep([0.2, 0.4], [1, 1])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(4, 60))
def test_threshold_sweep_matches_brute_force(seed, n):
    r = np.random.default_rng(seed)
    labels = r.integers(0, 2, size=n)
    labels[:2] = [0, 1]
    probs = np.round(r.uniform(size=n), 3)
    t, f1 = threshold_sweep(probs, labels)
    ref_t, ref_f1 = grid_threshold(probs.tolist(), labels.tolist())
    assert t == ref_t and abs(f1 - ref_f1) < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_tuned_threshold_never_worse_than_default(seed):
    r = np.random.default_rng(seed)
    labels = np.r_[0, 1, r.integers(0, 2, size=40)]
    probs = r.uniform(size=labels.size)
    t, f1 = threshold_sweep(probs, labels)
    assert f1 >= binary_f1(labels, probs >= 0.5)


def test_empty_split_rejected():
    with pytest.raises(ConfigError):
        metrics_from_logits(np.zeros((0, 3)), np.zeros(0), 3, 0.0)
