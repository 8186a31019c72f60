"""Convert the UCI Adult files into the ``f0..,a,c,y`` CSV layout.

Usage::

    python scripts/prepare_adult.py adult.data [adult.test ...] --out adult.csv

Contract:
  * rows with a missing value (``?``) are dropped
  * c = 2 for education ``Doctorate``, c = 1 otherwise (two clients)
  * a = 1 for ``Male``, a = 0 for ``Female``
  * y = 2 for income ``>50K``, y = 1 for ``<=50K`` (trailing ``.`` in adult.test is ignored)
  * numeric columns are standardized, categorical columns one-hot encoded;
    sex and education are not used as features (education-num is kept)
"""

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education-num", "marital-status", "occupation",
    "relationship", "race", "sex", "capital-gain", "capital-loss", "hours-per-week", "native-country", "income",
]
NUMERIC = ["age", "fnlwgt", "education-num", "capital-gain", "capital-loss", "hours-per-week"]
CATEGORICAL = ["workclass", "marital-status", "occupation", "relationship", "race", "native-country"]


def read_rows(paths):
    rows = []
    for path in paths:
        with open(path, newline="", encoding="utf-8") as fh:
            for rec in csv.reader(fh):
                rec = [v.strip() for v in rec]
                if len(rec) != len(COLUMNS) or rec[0].startswith("|"):
                    continue  # blank lines and the header comment in adult.test
                if "?" in rec:
                    continue
                rows.append(dict(zip(COLUMNS, rec)))
    return rows


def encode(rows):
    num = np.array([[float(r[k]) for k in NUMERIC] for r in rows])
    sd = num.std(axis=0)
    num = (num - num.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
    blocks = [num]
    for k in CATEGORICAL:
        levels = sorted({r[k] for r in rows})
        idx = {v: i for i, v in enumerate(levels)}
        onehot = np.zeros((len(rows), len(levels)))
        onehot[np.arange(len(rows)), [idx[r[k]] for r in rows]] = 1.0
        blocks.append(onehot)
    X = np.hstack(blocks)
    a = np.array([1 if r["sex"] == "Male" else 0 for r in rows])
    c = np.array([2 if r["education"] == "Doctorate" else 1 for r in rows])
    y = np.array([2 if r["income"].rstrip(".") == ">50K" else 1 for r in rows])
    return X, a, c, y


def write_csv(path, X, a, c, y):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"f{i}" for i in range(X.shape[1])] + ["a", "c", "y"])
        for row, ai, ci, yi in zip(X, a, c, y):
            w.writerow([f"{v:.6g}" for v in row] + [int(ai), int(ci), int(yi)])


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("inputs", nargs="+", help="adult.data and optionally adult.test")
    p.add_argument("--out", required=True)
    args = p.parse_args(argv)
    rows = read_rows(args.inputs)
    if not rows:
        print("no usable rows found", file=sys.stderr)
        return 3
    X, a, c, y = encode(rows)
    write_csv(args.out, X, a, c, y)
    print(f"wrote {Path(args.out)}: {len(y)} rows, {X.shape[1]} features, "
          f"client sizes {np.bincount(c)[1:].tolist()}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
