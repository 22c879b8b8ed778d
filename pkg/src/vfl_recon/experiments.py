"""Run configuration, the train -> record -> attack -> score pipeline, and the
reproduction suites and runtime benchmark built on it.

Everything here is deterministic given a config and a seed.  Sweep cells run in
a process pool capped by ``VFL_RECON_THREADS`` (default 1, i.e. inline) and are
merged back in cell order.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import itertools
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .attack import (
    DEFAULT_BINARY_TOL,
    DEFAULT_MAX_DIM,
    AttackMatrix,
    AttackReport,
    attack_accuracy,
    attack_linear_equations,
    attack_linear_regression,
    build_attack_matrix,
    solve_exact_cover_via_attack,
)
from .data import (
    Dataset,
    VerticalSplit,
    load_csv,
    majority_baseline,
    split_indices,
    synth_planted,
    vertical_split,
)
from .defense import GaussianDefense, MasqueradeDefense, preprocess_full_rank
from .errors import ConfigError
from .exactcover import brute_force_cover, random_instance
from .linalg import random_orthogonal
from .model import init_model
from .vfl import TrainConfig, TrainResult, collect_inference_transcript, invariance_harness, run_training

DEFAULT_SEEDS = tuple(range(20))
SIGMAS = (0.1, 0.2, 0.3, 0.4, 0.5)


# ---------------------------------------------------------------- run config


@dataclass
class SynthSpec:
    n: int = 5000
    d_A: int = 8
    d_B: int = 12
    binary_cols: list[int] = field(default_factory=lambda: [3])
    onehot_group: list[int] | None = None
    label_noise: float = 0.0


@dataclass
class DatasetSpec:
    synth: SynthSpec | None = field(default_factory=SynthSpec)
    csv: str | None = None
    label_column: str | None = None
    schema_hints: Any = None
    passive_cols: list[int] | None = None
    test_fraction: float = 0.1


@dataclass
class ModelSpec:
    hidden_sizes: list[int] = field(default_factory=lambda: [60, 30, 10])


@dataclass
class TrainSpec:
    epochs: int = 100
    base_lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    decay_epochs: list[int] = field(default_factory=lambda: [30, 60, 90])
    batch_size: int = 256


@dataclass
class DefenseSpec:
    kind: str = "none"
    sigma: float = 0.0


@dataclass
class AttackSpec:
    algorithm: str = "equations"
    r: int | None = None
    trials: int = 20
    binary_tol: float = DEFAULT_BINARY_TOL
    max_dim: int = DEFAULT_MAX_DIM
    rank: int | None = None
    objective: str = "relative"


@dataclass
class RunConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    model: ModelSpec = field(default_factory=ModelSpec)
    train: TrainSpec = field(default_factory=TrainSpec)
    defense: DefenseSpec = field(default_factory=DefenseSpec)
    attack: AttackSpec = field(default_factory=AttackSpec)
    seeds: list[int] = field(default_factory=lambda: list(DEFAULT_SEEDS))
    out: str = "runs"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, obj: dict | None) -> "RunConfig":
        cfg = _build(cls, obj or {}, "config")
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            obj = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file {path} not found") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(obj)

    def validate(self) -> None:
        ds = self.dataset
        if (ds.synth is None) == (ds.csv is None):
            raise ConfigError("dataset needs exactly one of 'synth' or 'csv'")
        if ds.csv is not None and not ds.label_column:
            raise ConfigError("dataset.label_column is required with a CSV path")
        if ds.csv is not None and not ds.passive_cols:
            raise ConfigError("dataset.passive_cols is required with a CSV path")
        if ds.synth is not None:
            s = ds.synth
            if s.n < 2 or s.d_A < 1 or s.d_B < 0:
                raise ConfigError("synth needs n >= 2, d_A >= 1, d_B >= 0")
            planted = list(s.binary_cols) + list(s.onehot_group or [])
            if any(not 0 <= j < s.d_A for j in planted):
                raise ConfigError(f"planted columns must lie in [0, {s.d_A})")
            if not 0.0 <= s.label_noise < 0.5:
                raise ConfigError("synth.label_noise must lie in [0, 0.5)")
        if not 0.0 < ds.test_fraction < 1.0:
            raise ConfigError("dataset.test_fraction must lie in (0, 1)")
        if any(h < 1 for h in self.model.hidden_sizes) or not self.model.hidden_sizes:
            raise ConfigError("model.hidden_sizes must be a nonempty list of positive widths")
        t = self.train
        if t.epochs < 1 or t.batch_size < 1 or t.base_lr <= 0 or not 0 <= t.momentum < 1 or t.weight_decay < 0:
            raise ConfigError("train: need epochs >= 1, batch_size >= 1, base_lr > 0, momentum in [0, 1), weight_decay >= 0")
        if self.defense.kind not in ("none", "gaussian", "masquerade"):
            raise ConfigError(f"defense.kind must be none|gaussian|masquerade, got {self.defense.kind!r}")
        if self.defense.sigma < 0:
            raise ConfigError("defense.sigma must be >= 0")
        a = self.attack
        if a.algorithm not in ("equations", "regression"):
            raise ConfigError(f"attack.algorithm must be equations|regression, got {a.algorithm!r}")
        if a.objective not in ("relative", "absolute"):
            raise ConfigError("attack.objective must be relative|absolute")
        if a.trials < 1 or not 0 < a.binary_tol < 0.5 or a.max_dim < 1:
            raise ConfigError("attack: need trials >= 1, binary_tol in (0, 0.5), max_dim >= 1")
        if not self.seeds:
            raise ConfigError("seeds must not be empty")


def _build(cls, obj: Any, where: str):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be a JSON object")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(obj) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    kwargs = {}
    for name, value in obj.items():
        sub = _NESTED.get((cls, name))
        if sub is not None and value is not None:
            value = _build(sub, value, f"{where}.{name}")
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:  # pragma: no cover - guarded by the key check
        raise ConfigError(f"{where}: {exc}") from exc


_NESTED = {
    (RunConfig, "dataset"): DatasetSpec,
    (RunConfig, "model"): ModelSpec,
    (RunConfig, "train"): TrainSpec,
    (RunConfig, "defense"): DefenseSpec,
    (RunConfig, "attack"): AttackSpec,
    (DatasetSpec, "synth"): SynthSpec,
}


# ------------------------------------------------------------------ pipeline


@dataclass
class Prepared:
    ds: Dataset
    passive_cols: list[int]
    X_A: np.ndarray
    X_B: np.ndarray
    dropped: list[int]
    train_rows: np.ndarray
    test_rows: np.ndarray


def prepare_data(cfg: RunConfig, seed: int) -> Prepared:
    spec = cfg.dataset
    if spec.synth is not None:
        s = spec.synth
        ds = synth_planted(s.n, s.d_A, s.binary_cols, s.onehot_group, seed=seed, d_B=s.d_B,
                           label_noise=s.label_noise)
        passive = list(range(s.d_A)) if spec.passive_cols is None else list(spec.passive_cols)
    else:
        ds = load_csv(spec.csv, spec.label_column, spec.schema_hints)
        passive = list(spec.passive_cols)
    split = VerticalSplit(passive, [j for j in range(ds.d) if j not in set(passive)])
    X_A, X_B = vertical_split(ds, split)
    dropped: list[int] = []
    if cfg.defense.kind == "masquerade":
        X_A, dropped = preprocess_full_rank(X_A)
    train_rows, test_rows = split_indices(ds.n, spec.test_fraction, seed)
    return Prepared(ds, passive, X_A, X_B, dropped, train_rows, test_rows)


def make_defense(spec: DefenseSpec):
    if spec.kind == "gaussian":
        return GaussianDefense(spec.sigma)
    if spec.kind == "masquerade":
        return MasqueradeDefense()
    return None


def train_config(spec: TrainSpec) -> TrainConfig:
    return TrainConfig(epochs=spec.epochs, batch_size=spec.batch_size, base_lr=spec.base_lr,
                       momentum=spec.momentum, weight_decay=spec.weight_decay,
                       decay_epochs=tuple(spec.decay_epochs), record=False)


def train(cfg: RunConfig, seed: int, prep: Prepared | None = None) -> tuple[Prepared, TrainResult]:
    prep = prep or prepare_data(cfg, seed)
    model = init_model(prep.X_A.shape[1], prep.X_B.shape[1], cfg.model.hidden_sizes, prep.ds.class_count, seed)
    res = run_training(model, prep.X_A, prep.X_B, prep.ds.labels, train_config(cfg.train), seed,
                       make_defense(cfg.defense), prep.train_rows, prep.test_rows)
    return prep, res


def run_attack(spec: AttackSpec, transcript_or_z, seed: int = 0) -> AttackReport:
    am = build_attack_matrix(transcript_or_z, rank=spec.rank)
    if spec.algorithm == "equations":
        return attack_linear_equations(am, binary_tol=spec.binary_tol, max_dim=spec.max_dim)
    return attack_linear_regression(am, r=spec.r, seed=seed, trials=spec.trials, max_dim=spec.max_dim,
                                    objective=spec.objective)


@dataclass
class CellResult:
    seed: int
    final_loss: float
    test_acc: float
    report: AttackReport
    accuracies: list[float]
    fabricated: np.ndarray | None
    baseline: float


def run_cell(cfg: RunConfig, seed: int) -> CellResult:
    """Train, record the inference transcript, attack it and score the solutions."""
    prep, res = train(cfg, seed)
    transcript = collect_inference_transcript(res.passive)
    report = run_attack(cfg.attack, transcript, seed)
    accs = [attack_accuracy(x, prep.ds, prep.passive_cols) for x in report.solutions]
    fab = res.passive.inference_bits
    last = res.metrics[-1]
    return CellResult(seed, last["train_loss"], last["test_acc"], report, accs,
                      None if fab is None else fab.astype(np.uint8), majority_baseline(prep.ds.labels))


def _threads() -> int:
    env = os.environ.get("VFL_RECON_THREADS")
    try:
        return max(1, int(env)) if env else 1
    except ValueError as exc:
        raise ConfigError(f"VFL_RECON_THREADS must be an integer, got {env!r}") from exc


def map_cells(fn: Callable, cells: Sequence, workers: int | None = None) -> list:
    """Apply ``fn`` to every cell; results come back in cell order."""
    workers = _threads() if workers is None else max(1, workers)
    if workers == 1 or len(cells) < 2:
        return [fn(c) for c in cells]
    with ProcessPoolExecutor(min(workers, len(cells))) as pool:
        return list(pool.map(fn, cells))


# ------------------------------------------------------------------- outputs


def write_csv(path, header: Sequence[str], rows: Sequence[Sequence], config_hash: str) -> Path:
    """Tidy CSV with a trailing ``config_hash`` column on every row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*header, "config_hash"])
        for row in rows:
            w.writerow([_fmt(v) for v in row] + [config_hash])
    return path


def write_json(path, obj: dict, config_hash: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({**obj, "config_hash": config_hash}, indent=2, sort_keys=True) + "\n")
    return path


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return "n/a" if np.isnan(v) else repr(float(v))
    return v


# -------------------------------------------------------------------- suites


@dataclass
class SuiteResult:
    name: str
    passed: bool
    lines: list[str]
    header: list[str]
    rows: list[list]
    summary: dict

    def report(self) -> str:
        return "\n".join(self.lines + [f"{self.name}: {'PASS' if self.passed else 'FAIL'}"])


def _line(label: str, ok: bool, detail: str) -> str:
    return f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"


def _planted_layout(d_A: int, seed: int) -> list[int]:
    """1 to 5 planted binary columns, positions drawn from the seed."""
    rng = np.random.default_rng([d_A, seed])
    count = 1 + seed % 5
    return sorted(int(j) for j in rng.choice(d_A, size=count, replace=False))


SYNTH_D_A = (8, 10, 15)
ONEHOT_D_A = 10
ONEHOT_GROUP = [2, 3, 4, 5]
ONEHOT_EXTRA = [7]


def synth_configs(seed: int, epochs: int = 100) -> list[RunConfig]:
    """The synthetic tasks used by the attack suites, one config per layout."""
    cfgs = []
    for d_A in SYNTH_D_A:
        cfg = RunConfig(seeds=[seed])
        cfg.dataset.synth = SynthSpec(5000, d_A, 12, _planted_layout(d_A, seed))
        cfg.train.epochs = epochs
        cfgs.append(cfg)
    cfg = RunConfig(seeds=[seed])
    cfg.dataset.synth = SynthSpec(5000, ONEHOT_D_A, 12, list(ONEHOT_EXTRA), list(ONEHOT_GROUP))
    cfg.train.epochs = epochs
    cfgs.append(cfg)
    return cfgs


def binary_span_oracle(columns: np.ndarray) -> set[bytes]:
    """Nonzero binary vectors among integer combinations with coefficients in {-1, 0, 1}.

    For 0/1 indicator columns (binaries and one-hot members) every binary
    vector in their span arises this way, complements such as ``1 - b`` included
    when the all-ones vector is a combination.
    """
    columns = np.asarray(columns, dtype=np.int64)
    out: set[bytes] = set()
    for coeffs in itertools.product((-1, 0, 1), repeat=columns.shape[1]):
        v = columns @ np.asarray(coeffs)
        if v.any() and ((v == 0) | (v == 1)).all():
            out.add(v.astype(np.uint8).tobytes())
    return out


def _no_defense_cell(args) -> list:
    cfg, seed = args
    cell = run_cell(cfg, seed)
    s = cfg.dataset.synth
    prep = prepare_data(cfg, seed)
    planted = list(s.binary_cols) + list(s.onehot_group or [])
    truth = binary_span_oracle(prep.ds.features[:, planted])
    found = {x.tobytes() for x in cell.report.solutions}
    singles_ok = all(prep.ds.features[:, j].astype(np.uint8).tobytes() in found for j in s.binary_cols)
    return [s.d_A, seed, len(s.binary_cols), len(s.onehot_group or []), len(found), len(truth),
            int(found == truth), int(singles_ok), min(cell.accuracies, default=float("nan"))]


def suite_no_defense(seeds: Sequence[int] = DEFAULT_SEEDS, epochs: int = 100) -> SuiteResult:
    cells = [(cfg, seed) for seed in seeds for cfg in synth_configs(seed, epochs)]
    rows = map_cells(_no_defense_cell, cells)
    rows.sort(key=lambda r: (r[3] > 0, r[0], r[1]))
    plain = [r for r in rows if r[3] == 0]
    onehot = [r for r in rows if r[3] > 0]
    c1 = all(r[7] and r[8] == 1.0 for r in plain)
    c2 = all(r[6] for r in onehot)
    lines = [
        _line("planted binaries recovered", c1,
              f"{sum(bool(r[7] and r[8] == 1.0) for r in plain)}/{len(plain)} runs with accuracy 1.0"),
        _line("one-hot solution set exact", c2,
              f"{sum(r[6] for r in onehot)}/{len(onehot)} runs equal the oracle set "
              f"(sizes {sorted({r[4] for r in onehot})})"),
    ]
    header = ["d_A", "seed", "n_binary", "onehot_width", "n_solutions", "n_expected", "set_equal",
              "planted_found", "min_accuracy"]
    return SuiteResult("no-defense", c1 and c2, lines, header, rows,
                       {"completeness": c1, "onehot_exact": c2})


def _gaussian_cell(args) -> list:
    sigma, seed, epochs = args
    cfg = RunConfig(seeds=[seed])
    cfg.dataset.synth = SynthSpec(5000, 8, 12, [3])
    cfg.train.epochs = epochs
    cfg.defense = DefenseSpec("gaussian", sigma)
    prep, res = train(cfg, seed)
    transcript = collect_inference_transcript(res.passive)
    am = build_attack_matrix(transcript, rank=8)
    eq = attack_linear_equations(am)
    reg = attack_linear_regression(am, seed=seed, trials=20)
    acc = attack_accuracy(reg.solutions[0], prep.ds, prep.passive_cols)
    return [sigma, seed, len(eq.solutions), acc, res.metrics[-1]["test_acc"]]


def suite_gaussian_sweep(seeds: Sequence[int] = DEFAULT_SEEDS, sigmas: Sequence[float] = SIGMAS,
                         epochs: int = 100) -> SuiteResult:
    rows = map_cells(_gaussian_cell, [(s, seed, epochs) for s in sigmas for seed in seeds])
    means = {s: float(np.mean([r[3] for r in rows if r[0] == s])) for s in sigmas}
    top = max(sigmas)
    empty = [r for r in rows if r[0] == top]
    c5 = all(r[2] == 0 for r in empty)
    c6 = means[top] <= means[min(sigmas)] - 0.05
    lines = [
        _line(f"sigma={top} empties the exhaustive search", c5,
              f"{sum(r[2] == 0 for r in empty)}/{len(empty)} seeds with no solution"),
        _line("regression accuracy descends", c6,
              ", ".join(f"sigma={s}: {means[s]:.3f}" for s in sigmas)),
    ]
    header = ["sigma", "seed", "eq_solutions", "reg_accuracy", "test_acc"]
    return SuiteResult("gaussian-sweep", c5 and c6, lines, header, rows,
                       {"mean_accuracy": {str(s): m for s, m in means.items()}, "empty": c5, "descending": c6})


def _masquerade_cell(args) -> list:
    cfg, seed = args
    cfg = dataclasses.replace(cfg, defense=DefenseSpec("masquerade"))
    cell = run_cell(cfg, seed)
    sols = cell.report.solutions
    single = len(sols) == 1 and np.array_equal(sols[0], cell.fabricated)
    s = cfg.dataset.synth
    return [s.d_A, int(bool(s.onehot_group)), seed, len(sols), int(single),
            max(cell.accuracies, default=float("nan"))]


UTILITY_N = 10000
UTILITY_NOISE = 0.1
# narrow enough that neither run can memorise the flipped labels; with a wide
# top model the loss gap measures memorisation speed, not fit
UTILITY_HIDDEN = [24, 12]


def _utility_cell(args) -> list:
    seed, epochs, n = args
    out = [seed]
    for kind in ("none", "masquerade"):
        cfg = RunConfig(seeds=[seed])
        cfg.dataset.synth = SynthSpec(n, 8, 12, [3], label_noise=UTILITY_NOISE)
        cfg.model.hidden_sizes = list(UTILITY_HIDDEN)
        cfg.train.epochs = epochs
        cfg.defense = DefenseSpec(kind)
        _, res = train(cfg, seed)
        out += [res.metrics[-1]["train_loss"], res.metrics[-1]["test_acc"]]
    return out


def suite_masquerade(seeds: Sequence[int] = DEFAULT_SEEDS, epochs: int = 100,
                     utility_n: int = UTILITY_N) -> SuiteResult:
    cells = [(cfg, seed) for seed in seeds for cfg in synth_configs(seed, epochs)]
    rows = map_cells(_masquerade_cell, cells)
    c7 = all(r[4] and r[5] <= 0.65 for r in rows)
    util = map_cells(_utility_cell, [(seed, epochs, utility_n) for seed in seeds])
    plain = float(np.mean([u[1] for u in util]))
    masked = float(np.mean([u[3] for u in util]))
    gap = abs(masked - plain) / plain
    c8 = gap <= 0.10
    lines = [
        _line("single fabricated solution", c7,
              f"{sum(bool(r[4] and r[5] <= 0.65) for r in rows)}/{len(rows)} runs; "
              f"max accuracy {max(r[5] for r in rows):.3f}"),
        _line("training loss close to undefended", c8,
              f"mean final loss {plain:.4f} vs {masked:.4f} (relative gap {gap:.3f})"),
    ]
    header = ["d_A", "onehot", "seed", "n_solutions", "equals_fabricated", "accuracy"]
    return SuiteResult("masquerade", c7 and c8, lines, header, rows,
                       {"single_solution": c7, "utility_gap": gap, "utility_ok": c8,
                        "utility": [{"seed": u[0], "loss_none": u[1], "acc_none": u[2],
                                     "loss_masquerade": u[3], "acc_masquerade": u[4]} for u in util]})


def exact_cover_instances(count: int = 100, seed: int = 0):
    rng = np.random.default_rng(seed)
    for i in range(count):
        n = int(rng.integers(1, 9))
        m = int(rng.integers(1, 7))
        density = float(rng.uniform(0.15, 0.6))
        yield random_instance(n, m, density, seed=seed * 1000 + i)


def suite_exact_cover(count: int = 100, seed: int = 0) -> SuiteResult:
    rows = []
    t0 = time.perf_counter()
    for i, inst in enumerate(exact_cover_instances(count, seed)):
        want, _ = brute_force_cover(inst)
        got, cover = solve_exact_cover_via_attack(inst.n, [list(s) for s in inst.subsets])
        ok = want == got and (not got or inst.verify(cover))
        rows.append([i, inst.n, inst.m, int(want), int(got), int(ok)])
    elapsed = time.perf_counter() - t0
    agree = sum(r[5] for r in rows)
    passed = agree == count and elapsed < 10.0
    lines = [_line("oracle agreement", passed,
                   f"{agree}/{count} ({sum(r[3] for r in rows)} YES) in {elapsed:.2f}s")]
    return SuiteResult("exact-cover", passed, lines, ["instance", "n", "m", "oracle", "attack", "agree"],
                       rows, {"agree": agree, "count": count, "seconds": elapsed})


def suite_invariance(count: int = 10, seed: int = 0) -> SuiteResult:
    rows = []
    d_A = 6
    _, _, identity_gap = invariance_harness(seed, np.eye(d_A))
    rows.append(["identity", identity_gap])
    for i in range(count):
        _, _, gap = invariance_harness(seed + i, random_orthogonal(d_A, seed + i))
        rows.append([f"U{i}", gap])
    worst = max(r[1] for r in rows[1:])
    passed = worst <= 1e-6 and identity_gap == 0.0
    lines = [_line("transcripts coincide", passed, f"max divergence {worst:.3e}, identity {identity_gap}")]
    return SuiteResult("invariance", passed, lines, ["rotation", "max_divergence"], rows,
                       {"max_divergence": worst, "identity": identity_gap})


# --------------------------------------------------------------------- bench


def bench_instance(n: int, d: int, seed: int) -> AttackMatrix:
    """Random full-rank Gaussian matrix with one planted binary column."""
    rng = np.random.default_rng([n, d, seed])
    x = rng.standard_normal((n, d))
    x[:, 0] = rng.integers(0, 2, n)
    return AttackMatrix(x @ rng.standard_normal((d, d)))


def run_bench(ns: Sequence[int] = (5000, 10000), d_range: Sequence[int] = range(10, 21),
              algorithm: str = "equations", seed: int = 0, max_dim: int = DEFAULT_MAX_DIM,
              repeats: int = 1) -> tuple[list[list], dict]:
    """Time one attack per ``(n, d_A)`` cell; fit log2(seconds) against d_A per n."""
    d_range = list(d_range)
    for d in d_range:
        if d > max_dim:
            from .attack import _check_cap

            _check_cap(d, max_dim, "bench d_A")
    # warm the compiled kernel so the first cell does not pay for it
    attack_linear_equations(bench_instance(64, 4, seed))

    def once(am):
        if algorithm == "equations":
            return attack_linear_equations(am, max_dim=max_dim)
        return attack_linear_regression(am, r=am.d, seed=seed, max_dim=max_dim)

    rows = []
    for n in ns:
        for d in d_range:
            am = bench_instance(n, d, seed)
            best = min(_timed(once, am) for _ in range(repeats))
            rows.append([n, d, best])
    # fit the exponential regime [14, d_max] when the grid reaches it
    lo = 14 if min(d_range) <= 14 < max(d_range) else min(d_range)
    return rows, bench_fit(rows, lo, max(d_range))


def _timed(fn, arg) -> float:
    t0 = time.perf_counter()
    fn(arg)
    return time.perf_counter() - t0


def bench_fit(rows: Sequence[Sequence], lo: int = 14, hi: int = 20) -> dict:
    """Slope of log2(time) vs d_A over ``[lo, hi]`` per n, and time ratios between n values."""
    by_n: dict[int, dict[int, float]] = {}
    for n, d, sec in rows:
        by_n.setdefault(int(n), {})[int(d)] = float(sec)
    slopes = {}
    for n, cells in by_n.items():
        ds = [d for d in sorted(cells) if lo <= d <= hi]
        if len(ds) >= 2:
            slopes[n] = float(np.polyfit(ds, np.log2([cells[d] for d in ds]), 1)[0])
    ratios = {}
    ns = sorted(by_n)
    for a, b in zip(ns, ns[1:]):
        shared = [d for d in by_n[a] if d in by_n[b] and lo <= d <= hi]
        if shared:
            ratios[f"{b}/{a}"] = sum(by_n[b][d] for d in shared) / sum(by_n[a][d] for d in shared)
    return {"slopes": slopes, "ratios": ratios, "range": [lo, hi]}


SUITES = {
    "no-defense": suite_no_defense,
    "gaussian-sweep": suite_gaussian_sweep,
    "masquerade": suite_masquerade,
    "exact-cover": suite_exact_cover,
    "invariance": suite_invariance,
}
