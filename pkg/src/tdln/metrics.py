"""Detection metrics: confusion matrix, per-class precision and FDR (recall),
one-vs-rest ROC curves with micro/macro AUC, and the text/machine report.

Metrics whose denominator is zero are reported as ``None`` and left out of
macro averages (the number left out is recorded).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class RocCurve:
    thresholds: np.ndarray
    tpr: np.ndarray
    fpr: np.ndarray
    auc: float


def confusion_matrix(predicted, actual, n: int) -> np.ndarray:
    """counts[p, a]: rows are predicted classes, columns actual classes."""
    predicted = np.asarray(predicted, dtype=np.int64)
    actual = np.asarray(actual, dtype=np.int64)
    if predicted.shape != actual.shape:
        raise ValueError(f"{predicted.size} predictions vs {actual.size} ground-truth labels")
    cm = np.zeros((n, n), dtype=np.int64)
    np.add.at(cm, (predicted, actual), 1)
    return cm


def precision_per_class(cm: np.ndarray, c: int) -> float | None:
    predicted_c = int(cm[c].sum())
    if predicted_c == 0:
        return None
    return cm[c, c] / predicted_c


def fdr_per_class(cm: np.ndarray, c: int) -> float | None:
    """Fault detection rate TP / (TP + FN), i.e. recall of class ``c``."""
    actual_c = int(cm[:, c].sum())
    if actual_c == 0:
        return None
    return cm[c, c] / actual_c


def _mean_defined(values) -> tuple[float | None, int]:
    defined = [v for v in values if v is not None]
    excluded = len(values) - len(defined)
    return (float(np.mean(defined)) if defined else None), excluded


def macro_fdr(cm: np.ndarray, classes=None) -> float | None:
    classes = range(cm.shape[0]) if classes is None else classes
    return _mean_defined([fdr_per_class(cm, c) for c in classes])[0]


def _roc_binary(scores: np.ndarray, positive: np.ndarray) -> RocCurve:
    P = int(positive.sum())
    Nn = positive.size - P
    if P == 0 or Nn == 0:
        raise ValueError("ROC needs both positive and negative examples")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    pos = positive[order].astype(np.int64)
    # one step per distinct score: the last index of each tie group
    last = np.flatnonzero(np.append(s[1:] != s[:-1], True))
    tp = np.cumsum(pos)[last]
    fp = (last + 1) - tp
    tpr = np.concatenate([[0.0], tp / P])
    fpr = np.concatenate([[0.0], fp / Nn])
    thresholds = np.concatenate([[np.inf], s[last]])
    auc = float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2.0))
    return RocCurve(thresholds, tpr, fpr, auc)


def roc_auc(scores: np.ndarray, truths, c: int) -> RocCurve:
    """One-vs-rest ROC for class ``c`` from (K, n) probability rows."""
    scores = np.asarray(scores, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.int64)
    return _roc_binary(scores[:, c], truths == c)


def micro_roc(scores: np.ndarray, truths) -> RocCurve:
    """Pool every (window, class) decision into one binary problem."""
    scores = np.asarray(scores, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.int64)
    positive = np.zeros(scores.shape, dtype=bool)
    positive[np.arange(truths.size), truths] = True
    return _roc_binary(scores.ravel(), positive.ravel())


@dataclass
class DetectionReport:
    class_count: int
    total: int
    confusion: np.ndarray
    precision: list[float | None]
    fdr: list[float | None]
    macro_fdr: float | None
    macro_fdr_faults: float | None
    fdr_excluded: int
    precision_excluded: int
    auc: list[float | None]
    micro_auc: float | None
    macro_auc: float | None
    prediction_counts: np.ndarray
    truth_counts: np.ndarray
    accuracy: float
    roc: dict


def report(predicted, scores, truths, n: int) -> DetectionReport:
    predicted = np.asarray(predicted, dtype=np.int64)
    truths = np.asarray(truths, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    if predicted.shape != truths.shape or scores.shape[0] != truths.size:
        raise ValueError(f"length mismatch: {predicted.size} predictions, {scores.shape[0]} score rows, "
                         f"{truths.size} truths")
    if truths.size == 0:
        raise ValueError("nothing to evaluate")
    cm = confusion_matrix(predicted, truths, n)
    precision = [precision_per_class(cm, c) for c in range(n)]
    fdr = [fdr_per_class(cm, c) for c in range(n)]
    macro, fdr_excl = _mean_defined(fdr)
    macro_faults, _ = _mean_defined(fdr[1:]) if n > 1 else (None, 0)
    _, prec_excl = _mean_defined(precision)
    roc = {}
    auc = []
    for c in range(n):
        try:
            roc[c] = roc_auc(scores, truths, c)
            auc.append(roc[c].auc)
        except ValueError:
            auc.append(None)
    try:
        roc["micro"] = micro_roc(scores, truths)
        micro = roc["micro"].auc
    except ValueError:
        micro = None
    macro_auc, _ = _mean_defined(auc)
    return DetectionReport(
        class_count=n, total=int(truths.size), confusion=cm, precision=precision, fdr=fdr,
        macro_fdr=macro, macro_fdr_faults=macro_faults, fdr_excluded=fdr_excl, precision_excluded=prec_excl,
        auc=auc, micro_auc=micro, macro_auc=macro_auc, prediction_counts=cm.sum(axis=1),
        truth_counts=cm.sum(axis=0), accuracy=float(np.trace(cm) / truths.size), roc=roc,
    )


def _fmt(v) -> str:
    return "undefined" if v is None else repr(float(v))


def machine_block(rep: DetectionReport) -> str:
    """One ``key=value`` record per line between BEGIN/END markers."""
    lines = ["BEGIN METRICS", f"classes={rep.class_count}", f"total={rep.total}",
             f"accuracy={_fmt(rep.accuracy)}", f"macro_fdr={_fmt(rep.macro_fdr)}",
             f"macro_fdr_faults={_fmt(rep.macro_fdr_faults)}", f"fdr_excluded={rep.fdr_excluded}",
             f"precision_excluded={rep.precision_excluded}", f"micro_auc={_fmt(rep.micro_auc)}",
             f"macro_auc={_fmt(rep.macro_auc)}"]
    for c in range(rep.class_count):
        lines += [f"precision.{c}={_fmt(rep.precision[c])}", f"fdr.{c}={_fmt(rep.fdr[c])}",
                  f"auc.{c}={_fmt(rep.auc[c])}", f"predicted_count.{c}={int(rep.prediction_counts[c])}",
                  f"actual_count.{c}={int(rep.truth_counts[c])}"]
    for p in range(rep.class_count):
        lines.append(f"confusion.{p}=" + ",".join(str(int(v)) for v in rep.confusion[p]))
    lines.append("END METRICS")
    return "\n".join(lines) + "\n"


def parse_machine_block(text: str) -> dict[str, str]:
    out = {}
    inside = False
    for line in text.splitlines():
        if line == "BEGIN METRICS":
            inside = True
        elif line == "END METRICS":
            break
        elif inside and "=" in line:
            k, v = line.split("=", 1)
            out[k] = v
    return out


def text_table(rep: DetectionReport) -> str:
    def pct(v):
        return "      -" if v is None else f"{100 * v:7.2f}"

    def num(v):
        return "     -" if v is None else f"{v:6.4f}"

    rows = ["class  predicted  actual  precision%    FDR%     AUC"]
    for c in range(rep.class_count):
        rows.append(f"{c:5d}  {int(rep.prediction_counts[c]):9d}  {int(rep.truth_counts[c]):6d}  "
                    f"{pct(rep.precision[c]):>10}  {pct(rep.fdr[c])}  {num(rep.auc[c])}")
    rows.append(f"windows evaluated: {rep.total}   accuracy: {pct(rep.accuracy).strip()}%")
    rows.append(f"macro FDR (all classes present): {pct(rep.macro_fdr).strip()}%   "
                f"(faults only: {pct(rep.macro_fdr_faults).strip()}%, undefined classes excluded: "
                f"{rep.fdr_excluded})")
    rows.append(f"micro AUC: {num(rep.micro_auc).strip()}   macro AUC: {num(rep.macro_auc).strip()}")
    rows.append("confusion matrix (rows = predicted, columns = actual):")
    width = max(5, len(str(int(rep.confusion.max()))) + 1)
    rows.append(" " * 6 + "".join(f"{c:>{width}}" for c in range(rep.class_count)))
    for p in range(rep.class_count):
        rows.append(f"{p:>5} " + "".join(f"{int(v):>{width}}" for v in rep.confusion[p]))
    return "\n".join(rows) + "\n"


def roc_csv(curve: RocCurve) -> str:
    lines = ["threshold,fpr,tpr"]
    for t, f, p in zip(curve.thresholds, curve.fpr, curve.tpr):
        lines.append(f"{float(t)!r},{float(f)!r},{float(p)!r}")
    return "\n".join(lines) + "\n"
