import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tdln.metrics import (confusion_matrix, fdr_per_class, machine_block, macro_fdr, micro_roc,
                          parse_machine_block, precision_per_class, report, roc_auc, roc_csv, text_table)

from oracles import pair_count_auc


def test_confusion_orientation():
    cm = confusion_matrix([1, 1, 0], [1, 0, 0], 2)
    # rows predicted, columns actual
    assert cm.tolist() == [[1, 0], [1, 1]]


def test_precision_examples():
    cm = np.array([[9, 1], [1, 0]])
    assert precision_per_class(cm, 0) == 0.9
    assert precision_per_class(np.array([[5, 0], [0, 0]]), 1) is None
    diag = np.diag([3, 4, 5])
    assert all(precision_per_class(diag, c) == 1.0 for c in range(3))


def test_fdr_examples():
    cm = np.zeros((2, 2), int)
    cm[0, 0], cm[1, 0] = 985, 15
    cm[1, 1] = 7
    assert fdr_per_class(cm, 0) == 0.985
    assert fdr_per_class(np.array([[0, 4], [0, 0]]), 1) == 0.0
    assert fdr_per_class(np.array([[3, 0], [0, 0]]), 1) is None
    toy = np.array([[5, 1, 0], [2, 6, 1], [0, 3, 9]])
    expect = (Fraction(5, 7) + Fraction(6, 10) + Fraction(9, 10)) / 3
    assert abs(macro_fdr(toy) - float(expect)) <= 1e-12


def test_macro_excludes_absent_classes():
    cm = np.array([[4, 0, 0], [0, 0, 0], [1, 0, 5]])
    assert macro_fdr(cm) == pytest.approx((0.8 + 1.0) / 2, abs=1e-15)
    rep = report([0, 0, 0, 0, 2, 2, 2, 2, 2, 0], np.eye(3)[[0, 0, 0, 0, 2, 2, 2, 2, 2, 0]],
                 [0, 0, 0, 0, 0, 2, 2, 2, 2, 2], 3)
    assert rep.fdr[1] is None and rep.fdr_excluded == 1
    assert rep.precision[1] is None and rep.precision_excluded == 1


def test_roc_examples():
    truths = np.array([0, 0, 1, 1])
    scores = np.array([[0.9, 0.1], [0.8, 0.2], [0.3, 0.7], [0.1, 0.9]])
    assert roc_auc(scores, truths, 1).auc == 1.0
    same = np.full((4, 2), 0.5)
    curve = roc_auc(same, truths, 1)
    assert curve.auc == 0.5 and list(curve.fpr) == [0.0, 1.0] and list(curve.tpr) == [0.0, 1.0]
    with pytest.raises(ValueError):
        roc_auc(scores, np.zeros(4, int), 1)


def test_six_point_hand_set():
    s = np.array([0.9, 0.7, 0.7, 0.4, 0.3, 0.3])
    pos = np.array([1, 1, 0, 1, 0, 1])
    scores = np.stack([1 - s, s], axis=1)
    # pairs: 4 positives x 2 negatives = 8; wins 0.9>all(2), 0.7>0.3 & tie 0.7(1.5), 0.4>0.3(1), 0.3 tie 0.3(0.5)
    assert pair_count_auc(s, pos) == Fraction(5, 8)
    assert abs(roc_auc(scores, pos, 1).auc - 5 / 8) <= 1e-12


@given(st.integers(0, 10 ** 6))
@settings(max_examples=60)
def test_auc_equals_pair_counting(seed):
    rng = np.random.default_rng(seed)
    n, k = int(rng.integers(2, 5)), int(rng.integers(4, 40))
    truths = rng.integers(0, n, size=k)
    raw = rng.integers(0, 5, size=(k, n)).astype(float) + 1.0
    scores = raw / raw.sum(axis=1, keepdims=True)
    for c in range(n):
        pos = truths == c
        if pos.all() or not pos.any():
            continue
        curve = roc_auc(scores, truths, c)
        assert abs(curve.auc - float(pair_count_auc(scores[:, c], pos))) <= 1e-12
        assert curve.fpr[0] == 0 and curve.tpr[0] == 0 and curve.fpr[-1] == 1 and curve.tpr[-1] == 1
        assert np.all(np.diff(curve.fpr) >= 0) and np.all(np.diff(curve.tpr) >= 0)
    if len(set(truths.tolist())) > 1:
        onehot = np.eye(n)[truths].ravel().astype(bool)
        micro = micro_roc(scores, truths)
        assert abs(micro.auc - float(pair_count_auc(scores.ravel(), onehot))) <= 1e-12


@given(st.integers(0, 10 ** 6))
@settings(max_examples=40)
def test_report_conservation(seed):
    rng = np.random.default_rng(seed)
    n, k = 4, int(rng.integers(1, 60))
    truths = rng.integers(0, n, size=k)
    pred = rng.integers(0, n, size=k)
    scores = rng.dirichlet(np.ones(n), size=k)
    rep = report(pred, scores, truths, n)
    assert rep.total == k == rep.confusion.sum()
    assert np.array_equal(rep.confusion.sum(axis=0), np.bincount(truths, minlength=n))
    assert np.array_equal(rep.confusion.sum(axis=1), np.bincount(pred, minlength=n))
    for v in rep.precision + rep.fdr:
        assert v is None or 0.0 <= v <= 1.0
    for c in range(n):
        tp = sum(1 for p, t in zip(pred, truths) if p == t == c)
        actual = sum(1 for t in truths if t == c)
        predicted = sum(1 for p in pred if p == c)
        assert rep.fdr[c] == (tp / actual if actual else None)
        assert rep.precision[c] == (tp / predicted if predicted else None)


def test_report_all_correct_and_block_roundtrip():
    truths = np.array([0, 1, 2, 2, 1, 0])
    rep = report(truths, np.eye(3)[truths], truths, 3)
    assert rep.macro_fdr == 1.0 and np.array_equal(rep.confusion, np.diag([2, 2, 2]))
    parsed = parse_machine_block(machine_block(rep))
    assert float(parsed["macro_fdr"]) == rep.macro_fdr
    rng = np.random.default_rng(3)
    truths = rng.integers(0, 3, size=50)
    scores = rng.dirichlet(np.ones(3), size=50)
    rep = report(np.argmax(scores, axis=1), scores, truths, 3)
    parsed = parse_machine_block("noise\n" + machine_block(rep) + "trailing\n")
    assert float(parsed["micro_auc"]) == rep.micro_auc
    for c in range(3):
        assert float(parsed[f"fdr.{c}"]) == rep.fdr[c]
        assert float(parsed[f"auc.{c}"]) == rep.auc[c]
        assert [int(v) for v in parsed[f"confusion.{c}"].split(",")] == rep.confusion[c].tolist()
    text = text_table(rep)
    assert "macro FDR" in text and text.count("\n") >= 3 + 3
    lines = roc_csv(rep.roc["micro"]).splitlines()
    assert lines[0] == "threshold,fpr,tpr" and lines[1].split(",")[1:] == ["0.0", "0.0"]


def test_report_length_mismatch():
    with pytest.raises(ValueError):
        report([0, 1], np.eye(2), [0], 2)


def test_undefined_printed_as_marker():
    rep = report([0, 0], np.array([[1.0, 0.0], [1.0, 0.0]]), [0, 0], 2)
    block = parse_machine_block(machine_block(rep))
    assert block["fdr.1"] == "undefined" and block["precision.1"] == "undefined"
    assert block["micro_auc"] != "undefined"
    assert math.isclose(float(block["fdr.0"]), 1.0)
