import runpy
from pathlib import Path

import numpy as np

from fedfairlp.core import load_csv

SCRIPT = Path(__file__).resolve().parents[1] / "scripts" / "prepare_adult.py"

RAW = """39, State-gov, 77516, Bachelors, 13, Never-married, Adm-clerical, Not-in-family, White, Male, 2174, 0, 40, United-States, <=50K
50, Self-emp-not-inc, 83311, Doctorate, 16, Married-civ-spouse, Exec-managerial, Husband, White, Male, 0, 0, 13, United-States, >50K
38, Private, 215646, HS-grad, 9, Divorced, ?, Not-in-family, White, Male, 0, 0, 40, United-States, <=50K
28, Private, 338409, Doctorate, 16, Married-civ-spouse, Prof-specialty, Wife, Black, Female, 0, 0, 40, Cuba, <=50K

"""
TEST = """|1x3 Cross validator
25, Private, 226802, 11th, 7, Never-married, Machine-op-inspct, Own-child, Black, Female, 0, 0, 40, United-States, >50K.
"""


def test_prepare_adult_layout(tmp_path):
    (tmp_path / "adult.data").write_text(RAW)
    (tmp_path / "adult.test").write_text(TEST)
    out = tmp_path / "adult.csv"
    main = runpy.run_path(str(SCRIPT))["main"]
    assert main([str(tmp_path / "adult.data"), str(tmp_path / "adult.test"), "--out", str(out)]) == 0
    data = load_csv(out)
    # the row with '?' is dropped
    assert len(data) == 4
    assert data.a.tolist() == [1, 1, 0, 0]
    assert data.c.tolist() == [1, 2, 2, 1]
    assert data.y.tolist() == [1, 2, 1, 2]
    assert data.num_clients == 2 and data.num_classes == 2
    assert np.allclose(data.X[:, :6].mean(axis=0), 0.0, atol=1e-5)
