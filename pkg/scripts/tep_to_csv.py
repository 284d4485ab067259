"""Convert the Tennessee Eastman .dat files to the tdln CSV format.

    python scripts/tep_to_csv.py TEP_DIR out/

Expects the usual file set: d00.dat (normal training, stored transposed as
52 x 500), d01.dat..d21.dat (training, fault active throughout) and
d00_te.dat..d21_te.dat (testing, fault introduced after sample 160). Writes
out/train.csv and out/test.csv with the fault number as the label; test rows
before the onset get label 0. Drop faults 3, 9 and 15 afterwards with
``tdln train --drop-classes 3,9,15``.
"""
import argparse
from pathlib import Path

import numpy as np

from tdln.csvio import write_series
from tdln.preprocess import RawSeries

CHANNELS = 52
TEST_ONSET = 160


def load_dat(path: Path) -> np.ndarray:
    a = np.loadtxt(path)
    if a.shape[0] == CHANNELS and a.shape[1] != CHANNELS:
        a = a.T
    if a.shape[1] != CHANNELS:
        raise ValueError(f"{path}: expected {CHANNELS} columns, got shape {a.shape}")
    return a


def collect(root: Path, test: bool, faults) -> RawSeries:
    values, labels = [], []
    for f in faults:
        path = root / (f"d{f:02d}_te.dat" if test else f"d{f:02d}.dat")
        if not path.exists():
            print(f"skipping missing {path}")
            continue
        a = load_dat(path)
        lab = np.full(len(a), f, dtype=np.int64)
        if test:
            lab[:TEST_ONSET] = 0
        values.append(a)
        labels.append(lab)
    lab = np.concatenate(labels)
    return RawSeries(np.concatenate(values), lab, int(lab.max()) + 1)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("tep_dir", type=Path)
    ap.add_argument("out", type=Path)
    ap.add_argument("--faults", default=",".join(str(f) for f in range(22)),
                    help="comma separated fault numbers to include (0 is normal)")
    args = ap.parse_args()
    faults = [int(v) for v in args.faults.split(",")]
    args.out.mkdir(parents=True, exist_ok=True)
    for name, test in (("train.csv", False), ("test.csv", True)):
        series = collect(args.tep_dir, test, faults)
        write_series(series, args.out / name)
        print(f"wrote {args.out / name}: {len(series)} rows, labels {sorted(set(series.labels.tolist()))}")


if __name__ == "__main__":
    main()
