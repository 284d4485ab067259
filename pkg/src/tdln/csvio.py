"""Time-series CSV files.

Header ``label,c0,...,c{d-1}`` (or ``c0,...`` for unlabeled data), one row
per time step, values written with 17 significant digits so they read back
bit-exact. Detection files have header ``start,predicted,p0..p{n-1},provisional``
plus a trailing ``truth`` column when ground truth is known.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .preprocess import RawSeries


class CsvFormatError(ValueError):
    """Malformed input; the message carries the 1-based line number."""


def _fmt(v: float) -> str:
    return "%.17g" % v


def format_series(series: RawSeries, labeled: bool = True) -> str:
    d = series.channels
    head = ([] if not labeled else ["label"]) + [f"c{j}" for j in range(d)]
    lines = [",".join(head)]
    for lab, row in zip(series.labels, series.values):
        vals = [_fmt(v) for v in row]
        lines.append(",".join(([str(int(lab))] if labeled else []) + vals))
    return "\n".join(lines) + "\n"


def write_series(series: RawSeries, path, labeled: bool = True) -> None:
    Path(path).write_text(format_series(series, labeled), encoding="utf-8", newline="\n")


def parse_series(text: str, ignore_labels: bool = False) -> tuple[RawSeries, bool]:
    """Parse CSV text. Returns the series and whether it carried labels; an
    unlabeled (or ``ignore_labels``) file gets all-zero labels."""
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or not lines[0].strip():
        raise CsvFormatError("line 1: empty file, expected a header")
    header = [h.strip() for h in lines[0].rstrip("\r").split(",")]
    labeled = header[0] == "label"
    chans = header[1:] if labeled else header
    if not chans or chans != [f"c{j}" for j in range(len(chans))]:
        raise CsvFormatError(f"line 1: expected header label,c0,c1,... or c0,c1,..., got {lines[0]!r}")
    if len(lines) < 2:
        raise CsvFormatError("line 2: no data rows after the header")
    d = len(chans)
    width = len(header)
    values = np.empty((len(lines) - 1, d))
    labels = np.zeros(len(lines) - 1, dtype=np.int64)
    for k, line in enumerate(lines[1:]):
        lineno = k + 2
        cells = line.rstrip("\r").split(",")
        if len(cells) != width:
            raise CsvFormatError(f"line {lineno}: expected {width} fields, got {len(cells)}")
        if labeled:
            try:
                labels[k] = int(cells[0])
            except ValueError:
                raise CsvFormatError(f"line {lineno}: label {cells[0]!r} is not an integer") from None
            if labels[k] < 0:
                raise CsvFormatError(f"line {lineno}: negative label {labels[k]}")
            cells = cells[1:]
        try:
            values[k] = [float(c) for c in cells]
        except ValueError:
            raise CsvFormatError(f"line {lineno}: non-numeric value in {line!r}") from None
        if not np.all(np.isfinite(values[k])):
            raise CsvFormatError(f"line {lineno}: non-finite value")
    if ignore_labels:
        labels[:] = 0
    n = int(labels.max()) + 1 if labels.size else 1
    return RawSeries(values, labels, n), labeled and not ignore_labels


def read_series(path, ignore_labels: bool = False) -> tuple[RawSeries, bool]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise CsvFormatError(f"{path}: not UTF-8 text ({exc.reason})") from None
    return parse_series(text, ignore_labels)


def format_detections(detections, class_count: int) -> str:
    with_truth = any(d.truth is not None for d in detections)
    head = ["start", "predicted"] + [f"p{c}" for c in range(class_count)] + ["provisional"]
    if with_truth:
        head.append("truth")
    lines = [",".join(head)]
    for det in detections:
        row = [str(det.start), str(det.predicted)] + [_fmt(p) for p in det.probabilities]
        row.append("1" if det.provisional else "0")
        if with_truth:
            row.append(str(det.truth))
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def parse_detections(text: str) -> dict:
    """Columns of a detection file: start, predicted, proba (K, n), provisional, truth (or None)."""
    lines = [ln.rstrip("\r") for ln in text.split("\n") if ln.strip()]
    if not lines:
        raise CsvFormatError("line 1: empty detection file")
    header = lines[0].split(",")
    if header[:2] != ["start", "predicted"] or "provisional" not in header:
        raise CsvFormatError(f"line 1: not a detection header: {lines[0]!r}")
    n = sum(1 for h in header if h.startswith("p") and h[1:].isdigit())
    has_truth = header[-1] == "truth"
    rows = []
    for k, line in enumerate(lines[1:]):
        cells = line.split(",")
        if len(cells) != len(header):
            raise CsvFormatError(f"line {k + 2}: expected {len(header)} fields, got {len(cells)}")
        try:
            rows.append([float(c) for c in cells])
        except ValueError:
            raise CsvFormatError(f"line {k + 2}: non-numeric field in {line!r}") from None
    arr = np.array(rows, dtype=np.float64).reshape(-1, len(header))
    return {
        "start": arr[:, 0].astype(np.int64),
        "predicted": arr[:, 1].astype(np.int64),
        "proba": arr[:, 2:2 + n],
        "provisional": arr[:, 2 + n].astype(bool),
        "truth": arr[:, 3 + n].astype(np.int64) if has_truth else None,
    }
