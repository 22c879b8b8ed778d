import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vfl_recon.data import (
    BINARY,
    NUMERIC,
    ONEHOT,
    VerticalSplit,
    load_csv,
    load_dataset,
    majority_baseline,
    save_dataset,
    split_indices,
    synth_planted,
    train_test_split,
    vertical_split,
)
from vfl_recon.errors import (
    EmptyDataset,
    IndexOutOfRange,
    InvalidColumns,
    MissingLabel,
    OverlappingSplit,
    ParseError,
)
from vfl_recon.linalg import numerical_rank

BANK = """age,housing,job,default,y
30,yes,admin,0,no
40,no,blue,1,yes
50,yes,tech,0,no
60,no,admin,1,yes
"""


@pytest.fixture
def bank(tmp_path):
    p = tmp_path / "bank.csv"
    p.write_text(BANK)
    return p


def test_load_csv_encoding(bank):
    ds = load_csv(bank, "y")
    names = [c.name for c in ds.schema]
    assert names == ["age", "housing", "job=admin", "job=blue", "job=tech", "default"]
    kinds = [c.kind for c in ds.schema]
    assert kinds == [NUMERIC, BINARY, ONEHOT, ONEHOT, ONEHOT, BINARY]
    # ages 30..60: mean 45, population std sqrt(125)
    assert np.allclose(ds.features[:, 0], (np.array([30, 40, 50, 60]) - 45) / np.sqrt(125))
    # sorted categories no < yes, so yes -> 1
    assert ds.features[:, 1].tolist() == [1, 0, 1, 0]
    assert ds.features[:, 2:5].tolist() == [[1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 0, 0]]
    assert ds.features[:, 5].tolist() == [0, 1, 0, 1]
    assert ds.labels.tolist() == [0, 1, 0, 1] and ds.class_count == 2
    assert ds.binary_columns() == [1, 5]
    assert ds.onehot_groups() == {"job": [2, 3, 4]}


def test_load_csv_schema_hints(bank, tmp_path):
    ds = load_csv(bank, "y", {"default": "numeric"})
    assert ds.schema[-1].kind == NUMERIC
    assert ds.features[:, -1].tolist() == [-1, 1, -1, 1]
    hints = tmp_path / "hints.json"
    hints.write_text(json.dumps({"age": "categorical"}))
    ds = load_csv(bank, "y", hints)
    assert sum(c.group == "age" for c in ds.schema) == 4
    with pytest.raises(ParseError):
        load_csv(bank, "y", {"job": "numeric"})
    with pytest.raises(ParseError):
        load_csv(bank, "y", {"nope": "numeric"})


def test_load_csv_errors(tmp_path, bank):
    with pytest.raises(MissingLabel):
        load_csv(bank, "target")
    empty = tmp_path / "e.csv"
    empty.write_text("a,y\n")
    with pytest.raises(EmptyDataset):
        load_csv(empty, "y")
    short = tmp_path / "s.csv"
    short.write_text("a,b,y\n1,2,0\n1,0\n")
    with pytest.raises(ParseError, match=":3"):
        load_csv(short, "y")
    missing = tmp_path / "m.csv"
    missing.write_text("a,y\n,1\n")
    with pytest.raises(ParseError):
        load_csv(missing, "y")


def test_dataset_is_read_only(bank):
    ds = load_csv(bank, "y")
    with pytest.raises(ValueError):
        ds.features[0, 0] = 1.0


def test_vertical_split_validation():
    ds = synth_planted(50, 3, [0], seed=0, d_B=2)
    x_a, x_b = vertical_split(ds, VerticalSplit.first(3, 5))
    assert x_a.shape == (50, 3) and x_b.shape == (50, 2)
    with pytest.raises(IndexOutOfRange):
        VerticalSplit((0, 7), (1,)).validate(5)
    with pytest.raises(OverlappingSplit):
        VerticalSplit((0, 1), (1, 2, 3, 4)).validate(5)
    with pytest.raises(InvalidColumns):
        VerticalSplit((0,), (1,)).validate(5)
    with pytest.raises(InvalidColumns):
        VerticalSplit((), tuple(range(5))).validate(5)


@given(st.integers(2, 500), st.floats(0.01, 0.99), st.integers(0, 1000))
def test_split_indices_partition(n, frac, seed):
    train, test = split_indices(n, frac, seed)
    assert len(test) == min(max(round(n * frac), 1), n - 1)
    assert np.array_equal(np.sort(np.concatenate([train, test])), np.arange(n))
    assert np.all(np.diff(train) > 0) and np.all(np.diff(test) > 0)
    again = split_indices(n, frac, seed)
    assert np.array_equal(train, again[0]) and np.array_equal(test, again[1])


def test_train_test_split_sizes():
    ds = synth_planted(100, 4, [1], seed=3)
    tr, te = train_test_split(ds, 0.2, 0)
    assert (tr.n, te.n) == (80, 20)
    with pytest.raises(ValueError):
        split_indices(10, 1.0, 0)


@given(st.integers(0, 500), st.integers(2, 8))
def test_synth_planted_layout(seed, d_A):
    binary = [0] if d_A > 2 else []
    group = [1, 2] if d_A > 2 else None
    ds = synth_planted(200, d_A, binary, group, seed=seed, d_B=3)
    x = ds.features
    assert ds.d == d_A + 3
    assert numerical_rank(x) == ds.d
    for j in binary:
        assert set(np.unique(x[:, j])) <= {0.0, 1.0}
    if group:
        assert np.all(x[:, group].sum(axis=1) == 1.0)
        assert ds.onehot_groups() == {"g0": group}
    assert set(np.unique(ds.labels)) <= {0, 1}


def test_synth_planted_is_seeded_and_validates():
    a = synth_planted(100, 4, [2], seed=9)
    b = synth_planted(100, 4, [2], seed=9)
    assert np.array_equal(a.features, b.features) and np.array_equal(a.labels, b.labels)
    with pytest.raises(InvalidColumns):
        synth_planted(100, 4, [4])
    with pytest.raises(InvalidColumns):
        synth_planted(100, 4, [1], onehot_group=[1, 2])
    with pytest.raises(InvalidColumns):
        synth_planted(100, 4, onehot_group=[1])


def test_synth_label_noise_rate():
    clean = synth_planted(20000, 3, [0], seed=1)
    noisy = synth_planted(20000, 3, [0], seed=1, label_noise=0.1)
    assert np.array_equal(clean.features, noisy.features)
    assert abs((clean.labels != noisy.labels).mean() - 0.1) < 0.01


def test_dataset_cache_roundtrip(tmp_path, bank):
    ds = load_csv(bank, "y")
    save_dataset(ds, tmp_path / "cache")
    back = load_dataset(tmp_path / "cache")
    assert np.array_equal(back.features, ds.features)
    assert np.array_equal(back.labels, ds.labels)
    assert back.schema == ds.schema and back.class_count == 2
    (tmp_path / "cache.bin").write_bytes(b"\0" * 8)
    with pytest.raises(ParseError):
        load_dataset(tmp_path / "cache")


def test_majority_baseline():
    assert majority_baseline(np.array([0, 1, 1, 1])) == 0.75
