"""Tabular datasets: CSV ingestion, encoding, vertical partitioning, splits and
synthetic data with planted binary features."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EmptyDataset,
    IndexOutOfRange,
    InvalidColumns,
    MissingLabel,
    OverlappingSplit,
    ParseError,
)
from .linalg import numerical_rank

NUMERIC = "numeric"
BINARY = "binary"
ONEHOT = "onehot"


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str
    group: str | None = None  # one-hot source column
    category: str | None = None

    def to_json(self) -> dict:
        out = {"name": self.name, "kind": self.kind}
        if self.kind == ONEHOT:
            out.update(group=self.group, category=self.category)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "ColumnSpec":
        return cls(obj["name"], obj["kind"], obj.get("group"), obj.get("category"))


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    schema: tuple[ColumnSpec, ...]
    class_count: int

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if x.ndim != 2 or x.shape[0] == 0:
            raise EmptyDataset("dataset has no rows")
        if y.shape != (x.shape[0],):
            raise ValueError("labels must be a vector with one entry per row")
        if len(self.schema) != x.shape[1]:
            raise ValueError("schema column count does not match features")
        if y.size and (y.min() < 0 or y.max() >= self.class_count):
            raise ValueError("labels must lie in [0, class_count)")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "schema", tuple(self.schema))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def binary_columns(self) -> list[int]:
        return [j for j, c in enumerate(self.schema) if c.kind == BINARY]

    def onehot_groups(self) -> dict[str, list[int]]:
        groups: dict[str, list[int]] = {}
        for j, c in enumerate(self.schema):
            if c.kind == ONEHOT:
                groups.setdefault(c.group, []).append(j)
        return groups

    def take_rows(self, rows: Sequence[int]) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(self.features[rows], self.labels[rows], self.schema, self.class_count)

    def take_columns(self, cols: Sequence[int]) -> "Dataset":
        cols = list(cols)
        return Dataset(
            self.features[:, cols], self.labels, tuple(self.schema[j] for j in cols), self.class_count
        )


@dataclass(frozen=True)
class VerticalSplit:
    passive_cols: tuple[int, ...]
    active_cols: tuple[int, ...] = field(default=())

    def validate(self, d: int) -> None:
        p, a = list(self.passive_cols), list(self.active_cols)
        if not p:
            raise InvalidColumns("passive side needs at least one column")
        for j in p + a:
            if not 0 <= j < d:
                raise IndexOutOfRange(f"column {j} outside [0, {d})")
        if len(set(p)) != len(p) or len(set(a)) != len(a) or set(p) & set(a):
            raise OverlappingSplit("passive and active columns must be disjoint and unique")
        if len(p) + len(a) != d:
            raise InvalidColumns("split must cover every column")

    @classmethod
    def first(cls, d_A: int, d: int) -> "VerticalSplit":
        return cls(tuple(range(d_A)), tuple(range(d_A, d)))


def vertical_split(ds: Dataset, split: VerticalSplit) -> tuple[np.ndarray, np.ndarray]:
    split.validate(ds.d)
    return ds.features[:, list(split.passive_cols)], ds.features[:, list(split.active_cols)]


# --------------------------------------------------------------------------- CSV


def _is_float(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def _category_key(v: str):
    return (0, float(v), v) if _is_float(v) else (1, 0.0, v)


def load_csv(path, label_column: str, schema_hints: dict[str, str] | str | Path | None = None) -> Dataset:
    """Read a headed CSV into an encoded :class:`Dataset`.

    Numeric columns are standardised with full-dataset statistics (population
    standard deviation).  Columns with two distinct values, or numeric columns
    holding only 0/1, become a single binary column.  Other text columns are
    one-hot encoded.  ``schema_hints`` maps column name to ``numeric``,
    ``binary`` or ``categorical`` and may be a path to a JSON file.
    """
    if isinstance(schema_hints, (str, Path)):
        schema_hints = json.loads(Path(schema_hints).read_text())
    hints = dict(schema_hints or {})

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyDataset(f"{path}: empty file") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            row = [c.strip() for c in row]
            if any(c == "" for c in row):
                raise ParseError(f"{path}:{lineno}: missing value")
            rows.append(row)
    if label_column not in header:
        raise MissingLabel(label_column)
    if not rows:
        raise EmptyDataset(f"{path}: no data rows")
    for name, kind in hints.items():
        if name not in header:
            raise ParseError(f"schema hint for unknown column {name!r}")
        if kind not in (NUMERIC, BINARY, "categorical"):
            raise ParseError(f"unknown kind {kind!r} for column {name!r}")

    columns = list(zip(*rows))
    li = header.index(label_column)
    label_values = sorted(set(columns[li]), key=_category_key)
    label_index = {v: i for i, v in enumerate(label_values)}
    labels = np.array([label_index[v] for v in columns[li]], dtype=np.int64)

    blocks: list[np.ndarray] = []
    schema: list[ColumnSpec] = []
    for j, name in enumerate(header):
        if j == li:
            continue
        values = columns[j]
        numeric = all(_is_float(v) for v in values)
        distinct = sorted(set(values), key=_category_key)
        kind = hints.get(name)
        if kind is None:
            if numeric:
                kind = BINARY if {float(v) for v in distinct} <= {0.0, 1.0} else NUMERIC
            else:
                kind = BINARY if len(distinct) == 2 else "categorical"
        if kind == NUMERIC:
            if not numeric:
                raise ParseError(f"column {name!r} hinted numeric but holds text")
            col = np.array([float(v) for v in values])
            sd = col.std()
            col = (col - col.mean()) / (sd if sd > 0 else 1.0)
            blocks.append(col[:, None])
            schema.append(ColumnSpec(name, NUMERIC))
        elif kind == BINARY:
            if len(distinct) > 2:
                raise ParseError(f"column {name!r} hinted binary but has {len(distinct)} values")
            if numeric and {float(v) for v in distinct} <= {0.0, 1.0}:
                col = np.array([float(v) for v in values])
            else:
                one = distinct[-1]
                col = np.array([1.0 if v == one else 0.0 for v in values])
            blocks.append(col[:, None])
            schema.append(ColumnSpec(name, BINARY))
        else:
            idx = {v: i for i, v in enumerate(distinct)}
            onehot = np.zeros((len(values), len(distinct)))
            onehot[np.arange(len(values)), [idx[v] for v in values]] = 1.0
            blocks.append(onehot)
            schema.extend(ColumnSpec(f"{name}={v}", ONEHOT, name, v) for v in distinct)
    if not blocks:
        raise EmptyDataset("no feature columns besides the label")
    return Dataset(np.hstack(blocks), labels, tuple(schema), len(label_values))


# ------------------------------------------------------------------- splitting


def split_indices(n: int, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded permutation split; returns sorted (train, test) row indices."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    if n < 2:
        raise EmptyDataset("need at least two rows to split")
    n_test = min(max(int(round(n * test_fraction)), 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def train_test_split(ds: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    train, test = split_indices(ds.n, test_fraction, seed)
    return ds.take_rows(train), ds.take_rows(test)


# ------------------------------------------------------------------- synthetic


def synth_planted(
    n: int,
    d_A: int,
    binary_cols: Iterable[int] = (),
    onehot_group: Iterable[int] | None = None,
    seed: int = 0,
    d_B: int = 0,
    label_noise: float = 0.0,
) -> Dataset:
    """Random data whose first ``d_A`` columns carry planted binary features.

    Columns in ``binary_cols`` are Bernoulli(0.5); ``onehot_group`` columns form
    one categorical feature with uniformly drawn categories; all other columns
    (including the ``d_B`` trailing active-side columns) are standard normal.
    Labels threshold a random linear score at its median, then a fraction
    ``label_noise`` of them is flipped.
    """
    binary_cols = sorted(set(binary_cols))
    group = list(onehot_group or [])
    if any(not 0 <= j < d_A for j in binary_cols + group):
        raise InvalidColumns("planted columns must lie in [0, d_A)")
    if set(binary_cols) & set(group) or len(set(group)) != len(group):
        raise InvalidColumns("one-hot group must be disjoint from binary columns")
    if len(group) == 1:
        raise InvalidColumns("a one-hot group needs at least two columns")
    d = d_A + d_B
    if n < d:
        raise InvalidColumns(f"n={n} rows cannot give full column rank {d}")
    rng = np.random.default_rng(seed)
    for _ in range(100):
        x = rng.standard_normal((n, d))
        for j in binary_cols:
            x[:, j] = rng.integers(0, 2, n)
        if group:
            cat = rng.integers(0, len(group), n)
            x[:, group] = 0.0
            x[np.arange(n), np.asarray(group)[cat]] = 1.0
        if numerical_rank(x) == d:
            break
    else:  # pragma: no cover - measure-zero event repeated 100 times
        raise InvalidColumns("could not draw a full-rank feature matrix")
    direction = rng.standard_normal(d)
    score = x @ direction
    y = (score > np.median(score)).astype(np.int64)
    if label_noise > 0:
        flip = rng.random(n) < label_noise
        y[flip] = 1 - y[flip]
    schema = []
    for j in range(d):
        if j in binary_cols:
            schema.append(ColumnSpec(f"x{j}", BINARY))
        elif j in group:
            schema.append(ColumnSpec(f"x{j}", ONEHOT, "g0", str(group.index(j))))
        else:
            schema.append(ColumnSpec(f"x{j}", NUMERIC))
    return Dataset(x, y, tuple(schema), 2)


# ----------------------------------------------------------------------- cache


def save_dataset(ds: Dataset, path) -> Path:
    """Write ``<path>.bin`` (row-major little-endian float64) and ``<path>.json``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    bin_path, meta_path = path.with_suffix(".bin"), path.with_suffix(".json")
    bin_path.write_bytes(np.ascontiguousarray(ds.features, dtype="<f8").tobytes())
    meta = {
        "rows": ds.n,
        "cols": ds.d,
        "class_count": ds.class_count,
        "labels": ds.labels.tolist(),
        "schema": [c.to_json() for c in ds.schema],
    }
    meta_path.write_text(json.dumps(meta))
    return meta_path


def load_dataset(path) -> Dataset:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    raw = np.frombuffer(path.with_suffix(".bin").read_bytes(), dtype="<f8")
    if raw.size != meta["rows"] * meta["cols"]:
        raise ParseError(f"{path}: dataset dump has {raw.size} values, expected {meta['rows'] * meta['cols']}")
    x = raw.reshape(meta["rows"], meta["cols"]).astype(np.float64)
    schema = tuple(ColumnSpec.from_json(c) for c in meta["schema"])
    return Dataset(x, np.asarray(meta["labels"]), schema, meta["class_count"])


def majority_baseline(labels: np.ndarray) -> float:
    counts = np.bincount(np.asarray(labels))
    return float(counts.max() / counts.sum()) if counts.size else math.nan
