"""Two-party split training with the cut at the input layer.

The passive party owns ``X_A`` and its bottom parameters; the active party owns
``X_B``, the labels, ``W_B`` and the top model.  The only values that cross the
boundary are ``z_A`` (passive -> active) and ``dL/dz`` (active -> passive).  The
:class:`Transcript` records exactly what the active party received.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .defense import (
    GaussianDefense,
    MasqueradeDefense,
    MasqueradeParams,
    gaussian_masked_forward,
    init_masquerade,
    masquerade_backward,
    masquerade_forward,
)
from .errors import DimensionMismatch, NonFiniteLoss, NotOrthogonal, ParseError
from .model import OptimizerState, TopModel, VflModel, init_model, sgd_momentum_step

TRANSCRIPT_MAGIC = "vfl-recon-transcript"

Defense = GaussianDefense | MasqueradeDefense | None


# ------------------------------------------------------------------ transcript


@dataclass
class Frame:
    t: int
    row_ids: np.ndarray
    z: np.ndarray
    grad: np.ndarray | None = None
    loss: float | None = None


@dataclass
class Transcript:
    phase: str = "train"
    frames: list[Frame] = field(default_factory=list)
    header: dict[str, Any] = field(default_factory=dict)

    @property
    def k(self) -> int | None:
        return self.frames[0].z.shape[1] if self.frames else None

    def __len__(self) -> int:
        return len(self.frames)

    def append(self, frame: Frame) -> None:
        if not np.all(np.isfinite(frame.z)):
            raise NonFiniteLoss(f"non-finite intermediate output at iteration {frame.t}")
        if self.frames:
            if frame.t <= self.frames[-1].t:
                raise ValueError("iteration indices must increase")
            if frame.z.shape[1] != self.k:
                raise DimensionMismatch("k must stay constant across a transcript")
        self.frames.append(frame)

    def stacked(self) -> np.ndarray:
        """All recorded ``z_A`` rows stacked into one ``N x k`` matrix."""
        if not self.frames:
            return np.zeros((0, 0))
        return np.vstack([f.z for f in self.frames])

    def row_ids(self) -> np.ndarray:
        return np.concatenate([f.row_ids for f in self.frames]) if self.frames else np.zeros(0, np.int64)

    def checksum(self) -> str:
        h = hashlib.sha256()
        for f in self.frames:
            h.update(np.ascontiguousarray(f.row_ids, dtype="<i8").tobytes())
            h.update(np.ascontiguousarray(f.z, dtype="<f8").tobytes())
            if f.grad is not None:
                h.update(np.ascontiguousarray(f.grad, dtype="<f8").tobytes())
        return h.hexdigest()


def save_transcript(tr: Transcript, path) -> Path:
    """JSON header line, then per frame a JSON line followed by raw little-endian
    frames: row ids (int64), ``z`` (float64, rows x k) and optionally ``dL/dz``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "format": TRANSCRIPT_MAGIC,
        "version": 1,
        "phase": tr.phase,
        "k": tr.k,
        "frames": len(tr.frames),
        **{k: v for k, v in tr.header.items() if k not in ("format", "version", "phase", "k", "frames")},
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for f in tr.frames:
            meta = {"t": f.t, "rows": int(f.z.shape[0]), "has_grad": f.grad is not None, "loss": f.loss}
            fh.write(json.dumps(meta).encode() + b"\n")
            fh.write(np.ascontiguousarray(f.row_ids, dtype="<i8").tobytes())
            fh.write(np.ascontiguousarray(f.z, dtype="<f8").tobytes())
            if f.grad is not None:
                fh.write(np.ascontiguousarray(f.grad, dtype="<f8").tobytes())
    return path


def _read_exact(fh, nbytes: int, path) -> bytes:
    buf = fh.read(nbytes)
    if len(buf) != nbytes:
        raise ParseError(f"{path}: truncated transcript frame")
    return buf


def load_transcript(path) -> Transcript:
    path = Path(path)
    with open(path, "rb") as fh:
        try:
            header = json.loads(fh.readline())
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: bad transcript header") from exc
        if header.get("format") != TRANSCRIPT_MAGIC:
            raise ParseError(f"{path}: not a transcript file")
        k = header["k"]
        tr = Transcript(phase=header["phase"], header={
            key: v for key, v in header.items() if key not in ("format", "version", "phase", "k", "frames")
        })
        for _ in range(header["frames"]):
            meta = json.loads(fh.readline())
            m = meta["rows"]
            ids = np.frombuffer(_read_exact(fh, 8 * m, path), dtype="<i8").astype(np.int64)
            z = np.frombuffer(_read_exact(fh, 8 * m * k, path), dtype="<f8").reshape(m, k).astype(np.float64)
            g = None
            if meta["has_grad"]:
                g = np.frombuffer(_read_exact(fh, 8 * m * k, path), dtype="<f8").reshape(m, k).astype(np.float64)
            tr.append(Frame(meta["t"], ids, z, g, meta.get("loss")))
    return tr


# --------------------------------------------------------------------- parties


class PassiveParty:
    """Holds ``X_A`` for every row id and the bottom model (plain, noisy or masquerade)."""

    def __init__(
        self,
        X_A: np.ndarray,
        W_A: np.ndarray | None = None,
        defense: Defense = None,
        masquerade: MasqueradeParams | None = None,
        noise_rng: np.random.Generator | None = None,
        bit_rng: np.random.Generator | None = None,
        optimizer: OptimizerState | None = None,
    ):
        self.X_A = np.asarray(X_A, dtype=np.float64)
        self.defense = defense
        self.noise_rng = noise_rng or np.random.default_rng(0)
        self.bit_rng = bit_rng or np.random.default_rng(1)
        self.optimizer = optimizer or OptimizerState()
        if isinstance(defense, MasqueradeDefense):
            if masquerade is None:
                raise ValueError("masquerade defense needs MasqueradeParams")
            self.mp = masquerade
            self.W_A = None
            # one fixed fabricated bit per row, used for every inference pass
            self.inference_bits = self.bit_rng.integers(0, 2, self.X_A.shape[0]).astype(np.float64)
        else:
            if W_A is None or W_A.shape[1] != self.X_A.shape[1]:
                raise DimensionMismatch("W_A must have one column per passive feature")
            self.W_A = W_A
            self.mp = None
            self.inference_bits = None
        self._cache: tuple[np.ndarray, np.ndarray | None] | None = None

    @property
    def kind(self) -> str:
        if isinstance(self.defense, GaussianDefense):
            return "gaussian"
        if isinstance(self.defense, MasqueradeDefense):
            return "masquerade"
        return "none"

    def params(self) -> dict[str, np.ndarray]:
        return self.mp.params() if self.mp is not None else {"W_A": self.W_A}

    def effective_weight(self) -> np.ndarray:
        return self.mp.effective_weight() if self.mp is not None else self.W_A

    def _bottom(self, x: np.ndarray, bits: np.ndarray | None) -> np.ndarray:
        if self.mp is not None:
            return masquerade_forward(self.mp, x, bits)
        sigma = self.defense.sigma if isinstance(self.defense, GaussianDefense) else 0.0
        return gaussian_masked_forward(self.W_A, x, sigma, self.noise_rng)

    def forward(self, row_ids: np.ndarray) -> np.ndarray:
        """Training-time ``z_A`` for the batch; caches inputs for :meth:`backward`."""
        x = self.X_A[row_ids]
        bits = self.bit_rng.integers(0, 2, x.shape[0]).astype(np.float64) if self.mp is not None else None
        self._cache = (x, bits)
        return self._bottom(x, bits)

    def infer(self, row_ids: np.ndarray) -> np.ndarray:
        x = self.X_A[row_ids]
        bits = self.inference_bits[row_ids] if self.mp is not None else None
        return self._bottom(x, bits)

    def backward(self, dL_dz: np.ndarray, epoch: int) -> None:
        if self._cache is None:
            raise RuntimeError("backward called without a preceding forward")
        x, bits = self._cache
        self._cache = None
        wd = self.optimizer.weight_decay
        if self.mp is not None:
            grads = masquerade_backward(self.mp, x, bits, dL_dz)
            for name, p in self.mp.params().items():
                grads[name] = grads[name] + wd * p
        else:
            # noise is ignored on the way back
            grads = {"W_A": dL_dz.T @ x + wd * self.W_A}
        sgd_momentum_step(self.params(), self.optimizer, grads, epoch)


class ActiveParty:
    """Label holder: ``X_B``, labels, ``W_B`` and the top model.  Never sees ``X_A``."""

    def __init__(self, X_B: np.ndarray, labels: np.ndarray, W_B: np.ndarray, top: TopModel,
                 optimizer: OptimizerState | None = None):
        self.X_B = np.asarray(X_B, dtype=np.float64)
        self.labels = np.asarray(labels)
        self.W_B = W_B
        self.top = top
        self.optimizer = optimizer or OptimizerState()

    def params(self) -> dict[str, np.ndarray]:
        return {"W_B": self.W_B, **self.top.params()}

    def train_step(self, row_ids: np.ndarray, z_A: np.ndarray, epoch: int) -> tuple[float, np.ndarray]:
        x_B = self.X_B[row_ids]
        z = z_A + x_B @ self.W_B.T
        loss, grads, dz = self.top.loss_and_grads(z, self.labels[row_ids], self.optimizer.weight_decay)
        if not np.isfinite(loss):
            raise NonFiniteLoss(f"loss became {loss}")
        grads["W_B"] = dz.T @ x_B + self.optimizer.weight_decay * self.W_B
        sgd_momentum_step(self.params(), self.optimizer, grads, epoch)
        return loss, dz

    def predict(self, row_ids: np.ndarray, z_A: np.ndarray) -> np.ndarray:
        logits, _ = self.top.forward(z_A + self.X_B[row_ids] @ self.W_B.T)
        return logits.argmax(axis=1)


# -------------------------------------------------------------------- training


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 256
    base_lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    decay_epochs: tuple[int, ...] = (30, 60, 90)
    max_iterations: int | None = None
    record: bool = True
    record_grads: bool = False

    def optimizer(self) -> OptimizerState:
        return OptimizerState(self.momentum, self.base_lr, tuple(self.decay_epochs), self.weight_decay)


@dataclass
class TrainResult:
    model: VflModel
    passive: PassiveParty
    active: ActiveParty
    transcript: Transcript
    metrics: list[dict[str, float]]


def _streams(seed: int) -> tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    batch, noise, bits, mask = np.random.SeedSequence(seed).spawn(4)
    return np.random.default_rng(batch), np.random.default_rng(noise), np.random.default_rng(bits)


def make_parties(
    model: VflModel,
    X_A: np.ndarray,
    X_B: np.ndarray,
    y: np.ndarray,
    config: TrainConfig,
    seed: int,
    defense: Defense = None,
) -> tuple[PassiveParty, ActiveParty, np.random.Generator]:
    """Split ``model`` into the two parties.  Returns the batch-order generator too."""
    X_A = np.asarray(X_A, dtype=np.float64)
    X_B = np.asarray(X_B, dtype=np.float64)
    y = np.asarray(y)
    if not (X_A.shape[0] == X_B.shape[0] == y.shape[0]):
        raise DimensionMismatch("X_A, X_B and labels must have the same number of rows")
    if X_A.shape[1] != model.d_A or X_B.shape[1] != model.d_B:
        raise DimensionMismatch("data widths do not match the model")
    m = model.copy()
    batch_rng, noise_rng, bit_rng = _streams(seed)
    mp = None
    if isinstance(defense, MasqueradeDefense):
        mask_seq = np.random.SeedSequence(seed).spawn(4)[3]
        mp = init_masquerade(m.k, m.d_A, np.random.default_rng(mask_seq))
    passive = PassiveParty(X_A, m.W_A, defense, mp, noise_rng, bit_rng, config.optimizer())
    active = ActiveParty(X_B, y, m.W_B, m.top, config.optimizer())
    return passive, active, batch_rng


def run_training(
    model: VflModel,
    X_A,
    X_B,
    y,
    config: TrainConfig | None = None,
    seed: int = 0,
    defense: Defense = None,
    train_rows: Sequence[int] | None = None,
    test_rows: Sequence[int] | None = None,
) -> TrainResult:
    """Run the split protocol; ``model`` itself is not modified.

    Each epoch shuffles ``train_rows`` with a seed-derived generator and walks it
    in mini-batches.  Metrics per epoch: ``train_loss`` (mean cross-entropy over
    the epoch's batches, sample-weighted) and ``test_acc`` (NaN without test rows).
    """
    config = config or TrainConfig()
    passive, active, batch_rng = make_parties(model, X_A, X_B, y, config, seed, defense)
    n = passive.X_A.shape[0]
    train_rows = np.arange(n) if train_rows is None else np.asarray(train_rows, dtype=np.int64)
    test_rows = None if test_rows is None else np.asarray(test_rows, dtype=np.int64)

    transcript = Transcript(phase="train", header={"defense": defense_header(defense)})
    metrics: list[dict[str, float]] = []
    t = 0
    done = False
    for epoch in range(config.epochs):
        order = batch_rng.permutation(train_rows)
        loss_sum = 0.0
        seen = 0
        for start in range(0, order.size, config.batch_size):
            if config.max_iterations is not None and t >= config.max_iterations:
                done = True
                break
            ids = order[start : start + config.batch_size]
            z_A = passive.forward(ids)
            loss, dz = active.train_step(ids, z_A, epoch)
            passive.backward(dz, epoch)
            t += 1
            if config.record:
                transcript.append(Frame(t, ids, z_A, dz if config.record_grads else None, loss))
            loss_sum += loss * ids.size
            seen += ids.size
        if seen:
            row = {"epoch": epoch + 1, "train_loss": loss_sum / seen, "test_acc": float("nan")}
            if test_rows is not None and test_rows.size:
                pred = active.predict(test_rows, passive.infer(test_rows))
                row["test_acc"] = float((pred == active.labels[test_rows]).mean())
            metrics.append(row)
        if done:
            break

    trained = VflModel(passive.effective_weight().copy(), active.W_B, active.top, model.class_count)
    return TrainResult(trained, passive, active, transcript, metrics)


def defense_header(defense: Defense) -> dict[str, Any]:
    if isinstance(defense, GaussianDefense):
        return {"kind": "gaussian", "sigma": defense.sigma}
    if isinstance(defense, MasqueradeDefense):
        return {"kind": "masquerade"}
    return {"kind": "none"}


def collect_inference_transcript(passive: PassiveParty | VflModel, X_A=None, batch_size: int = 4096) -> Transcript:
    """One forward pass over every row in order, with no parameter updates.

    Accepts a :class:`PassiveParty` (its defense applies; ``X_A`` defaults to the
    party's own data) or a plain :class:`VflModel` together with ``X_A``.
    """
    if isinstance(passive, VflModel):
        if X_A is None:
            raise ValueError("X_A is required when passing a model")
        passive = PassiveParty(np.asarray(X_A, dtype=np.float64), passive.W_A)
    elif X_A is not None:
        if np.asarray(X_A).shape[1] != passive.X_A.shape[1]:
            raise DimensionMismatch("X_A width does not match the passive party")
        passive.X_A = np.asarray(X_A, dtype=np.float64)
        if passive.inference_bits is not None and passive.inference_bits.shape[0] != passive.X_A.shape[0]:
            raise DimensionMismatch("X_A row count changed under a fixed fabricated-bit vector")
    n = passive.X_A.shape[0]
    if n == 0:
        raise DimensionMismatch("X_A has no rows")
    tr = Transcript(phase="inference", header={"defense": defense_header(passive.defense)})
    for t, start in enumerate(range(0, n, batch_size), start=1):
        ids = np.arange(start, min(start + batch_size, n))
        tr.append(Frame(t, ids, passive.infer(ids)))
    return tr


def replay_active(
    model: VflModel, X_B, y, transcript: Transcript, config: TrainConfig, epochs_of: Sequence[int]
) -> list[float]:
    """Re-run the active party alone from a recorded training transcript.

    ``epochs_of[i]`` is the epoch of frame ``i`` (it sets the learning rate).
    Returns the recomputed per-iteration losses.
    """
    m = model.copy()
    active = ActiveParty(X_B, y, m.W_B, m.top, config.optimizer())
    losses = []
    for f, epoch in zip(transcript.frames, epochs_of):
        loss, _ = active.train_step(f.row_ids, f.z, epoch)
        losses.append(loss)
    return losses


# ------------------------------------------------------------------ invariance


@dataclass
class InvarianceConfig:
    n: int = 512
    d_A: int = 6
    d_B: int = 4
    hidden_sizes: tuple[int, ...] = (24, 12)
    iterations: int = 50
    batch_size: int = 64
    base_lr: float = 0.1


def invariance_harness(
    seed: int, U, config: InvarianceConfig | None = None
) -> tuple[Transcript, Transcript, float]:
    """Train twice: with ``(W_A, {x_A})`` and with ``(W_A U^T, {U x_A})``.

    Batch order, active-party initialisation and all other randomness are shared.
    Returns both training transcripts and the largest entry-wise ``|z_A|`` gap.
    """
    from .data import synth_planted  # local import keeps module deps one-way

    config = config or InvarianceConfig()
    U = np.asarray(U, dtype=np.float64)
    if U.shape != (config.d_A, config.d_A) or np.abs(U.T @ U - np.eye(config.d_A)).max() > 1e-12:
        raise NotOrthogonal("U must be a d_A x d_A orthogonal matrix (|U^T U - I| <= 1e-12)")
    ds = synth_planted(config.n, config.d_A, [0], seed=seed, d_B=config.d_B)
    X_A, X_B = ds.features[:, : config.d_A], ds.features[:, config.d_A :]
    model = init_model(config.d_A, config.d_B, config.hidden_sizes, 2, seed)
    epochs = -(-config.iterations * config.batch_size // config.n)
    tc = TrainConfig(epochs=epochs, batch_size=config.batch_size, base_lr=config.base_lr,
                     max_iterations=config.iterations)
    base = run_training(model, X_A, X_B, ds.labels, tc, seed)
    rotated = model.copy()
    rotated.W_A = model.W_A @ U.T
    moved = run_training(rotated, X_A @ U.T, X_B, ds.labels, tc, seed)
    gap = max(
        (float(np.abs(a.z - b.z).max()) for a, b in zip(base.transcript.frames, moved.transcript.frames)),
        default=0.0,
    )
    return base.transcript, moved.transcript, gap
