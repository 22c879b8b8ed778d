"""MLP whose input layer is split column-wise into a passive block ``W_A`` and
an active block ``W_B``, trained with cross-entropy and SGD with momentum."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidArchitecture, ParseError


def glorot_uniform(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_out, fan_in))


@dataclass
class TopModel:
    """Layers 2..L: ``(weight, bias)`` pairs with ReLU between them."""

    layers: list[tuple[np.ndarray, np.ndarray]]

    @property
    def k(self) -> int:
        return self.layers[0][0].shape[1]

    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for i, (w, b) in enumerate(self.layers):
            out[f"h{i}.W"] = w
            out[f"h{i}.b"] = b
        return out

    def forward(self, z: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Logits for first-layer outputs ``z`` (batch x k) plus the activations cache."""
        acts = []
        h = z
        for w, b in self.layers:
            h = np.maximum(h, 0.0)
            acts.append(h)
            h = h @ w.T + b
        return h, acts

    def loss_and_grads(
        self, z: np.ndarray, y: np.ndarray, weight_decay: float = 0.0
    ) -> tuple[float, dict[str, np.ndarray], np.ndarray]:
        """Mean cross-entropy, gradients and ``dL/dz``.

        The returned loss is the data term only; the gradients include
        ``weight_decay * W`` for this model's weights (biases are not decayed).
        """
        z = np.asarray(z, dtype=np.float64)
        if z.ndim != 2 or z.shape[1] != self.k:
            raise DimensionMismatch(f"expected batch x {self.k} input, got {z.shape}")
        y = np.asarray(y)
        m = z.shape[0]
        logits, acts = self.forward(z)
        shifted = logits - logits.max(axis=1, keepdims=True)
        logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        ce = float(-logp[np.arange(m), y].mean())

        delta = np.exp(logp)
        delta[np.arange(m), y] -= 1.0
        delta /= m
        grads: dict[str, np.ndarray] = {}
        for i in range(len(self.layers) - 1, -1, -1):
            w, _ = self.layers[i]
            a = acts[i]
            grads[f"h{i}.W"] = delta.T @ a + weight_decay * w
            grads[f"h{i}.b"] = delta.sum(axis=0)
            delta = (delta @ w) * (a > 0)
        # `delta` now holds dL/dz: the ReLU mask uses z itself (acts[0] = relu(z))
        return ce, grads, delta

    def penalty(self) -> float:
        return float(sum((w * w).sum() for w, _ in self.layers))


@dataclass
class VflModel:
    W_A: np.ndarray
    W_B: np.ndarray
    top: TopModel
    class_count: int

    @property
    def k(self) -> int:
        return self.W_A.shape[0]

    @property
    def d_A(self) -> int:
        return self.W_A.shape[1]

    @property
    def d_B(self) -> int:
        return self.W_B.shape[1]

    @property
    def hidden(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return self.top.layers

    def params(self) -> dict[str, np.ndarray]:
        return {"W_A": self.W_A, "W_B": self.W_B, **self.top.params()}

    def copy(self) -> "VflModel":
        return VflModel(
            self.W_A.copy(),
            self.W_B.copy(),
            TopModel([(w.copy(), b.copy()) for w, b in self.top.layers]),
            self.class_count,
        )


def init_model(
    d_A: int, d_B: int, hidden_sizes: Sequence[int], class_count: int, seed: int
) -> VflModel:
    """Scaled-uniform init; no bias on the input layer, zero biases elsewhere."""
    hidden_sizes = list(hidden_sizes)
    if not hidden_sizes:
        raise InvalidArchitecture("need at least one hidden layer (the cut layer width k)")
    k = hidden_sizes[0]
    if k < d_A + d_B:
        raise InvalidArchitecture(f"first hidden width {k} < input width {d_A + d_B}")
    if d_A < 1 or d_B < 0 or class_count < 2:
        raise InvalidArchitecture("need d_A >= 1, d_B >= 0 and at least two classes")
    rng = np.random.default_rng(seed)
    w = glorot_uniform(rng, k, d_A + d_B)
    sizes = hidden_sizes + [class_count]
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        layers.append((glorot_uniform(rng, fan_out, fan_in), np.zeros(fan_out)))
    return VflModel(w[:, :d_A].copy(), w[:, d_A:].copy(), TopModel(layers), class_count)


def forward_centralized(m: VflModel, x) -> np.ndarray:
    """Logits for full inputs ``x = [x_A | x_B]`` (a vector or a batch of rows)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if xb.shape[1] != m.d_A + m.d_B:
        raise DimensionMismatch(f"input width {xb.shape[1]} != {m.d_A + m.d_B}")
    w = np.hstack([m.W_A, m.W_B])
    logits, _ = m.top.forward(xb @ w.T)
    return logits[0] if single else logits


def forward_split(m: VflModel, x_A, x_B) -> np.ndarray:
    """Logits computed the two-party way: ``z = z_A + z_B``."""
    x_A = np.atleast_2d(np.asarray(x_A, dtype=np.float64))
    x_B = np.asarray(x_B, dtype=np.float64).reshape(x_A.shape[0], -1)
    logits, _ = m.top.forward(x_A @ m.W_A.T + x_B @ m.W_B.T)
    return logits


def loss_and_grads(
    m: VflModel, batch_x, batch_y, weight_decay: float = 0.0
) -> tuple[float, dict[str, np.ndarray], np.ndarray]:
    """Loss, gradients for every parameter and ``dL/dz`` for a centralized batch."""
    x = np.atleast_2d(np.asarray(batch_x, dtype=np.float64))
    if x.shape[0] == 0:
        raise DimensionMismatch("empty batch")
    if x.shape[1] != m.d_A + m.d_B:
        raise DimensionMismatch(f"input width {x.shape[1]} != {m.d_A + m.d_B}")
    x_A, x_B = x[:, : m.d_A], x[:, m.d_A :]
    z = x_A @ m.W_A.T + x_B @ m.W_B.T
    loss, grads, dz = m.top.loss_and_grads(z, batch_y, weight_decay)
    grads["W_A"] = dz.T @ x_A + weight_decay * m.W_A
    grads["W_B"] = dz.T @ x_B + weight_decay * m.W_B
    loss += 0.5 * weight_decay * (m.top.penalty() + float((m.W_A**2).sum() + (m.W_B**2).sum()))
    return loss, grads, dz


@dataclass
class OptimizerState:
    momentum: float = 0.9
    base_lr: float = 0.1
    decay_epochs: tuple[int, ...] = (30, 60, 90)
    weight_decay: float = 1e-4
    buffers: dict[str, np.ndarray] = field(default_factory=dict)

    def lr(self, epoch: int) -> float:
        return self.base_lr * 10.0 ** (-sum(1 for e in self.decay_epochs if e <= epoch))


def sgd_momentum_step(
    params: dict[str, np.ndarray], state: OptimizerState, grads: dict[str, np.ndarray], epoch: int
) -> None:
    """In-place ``v <- mu v + g; p <- p - lr(epoch) v`` for every name in ``grads``."""
    lr = state.lr(epoch)
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise DimensionMismatch(f"gradient for {name} has shape {g.shape}, param {p.shape}")
        v = state.buffers.get(name)
        if v is None:
            v = state.buffers[name] = np.zeros_like(p)
        v *= state.momentum
        v += g
        p -= lr * v


# ------------------------------------------------------------------ checkpoint


def save_checkpoint(
    m: VflModel, path, epoch: int = 0, state: OptimizerState | None = None, extra: dict | None = None
) -> Path:
    """``<path>.bin`` holds every tensor as little-endian float64, ``<path>.json`` the manifest.

    ``extra`` keys (provenance and the like) are stored in the manifest verbatim.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tensors = dict(m.params())
    if state is not None:
        tensors.update({f"momentum.{k}": v for k, v in state.buffers.items()})
    manifest = {
        "d_A": m.d_A,
        "d_B": m.d_B,
        "hidden_sizes": [m.k] + [w.shape[0] for w, _ in m.hidden[:-1]],
        "class_count": m.class_count,
        "epoch": epoch,
        "has_optimizer_state": state is not None,
        "tensors": [],
        **(extra or {}),
    }
    if state is not None:
        manifest["optimizer"] = {
            "momentum": state.momentum,
            "base_lr": state.base_lr,
            "decay_epochs": list(state.decay_epochs),
            "weight_decay": state.weight_decay,
        }
    chunks = []
    offset = 0
    for name, t in tensors.items():
        manifest["tensors"].append({"name": name, "shape": list(t.shape), "offset": offset})
        chunks.append(np.ascontiguousarray(t, dtype="<f8").tobytes())
        offset += t.size
    path.with_suffix(".bin").write_bytes(b"".join(chunks))
    path.with_suffix(".json").write_text(json.dumps(manifest, indent=1))
    return path.with_suffix(".json")


def load_checkpoint(path) -> tuple[VflModel, OptimizerState | None, int]:
    path = Path(path)
    manifest = json.loads(path.with_suffix(".json").read_text())
    raw = np.frombuffer(path.with_suffix(".bin").read_bytes(), dtype="<f8")
    tensors = {}
    for t in manifest["tensors"]:
        size = int(np.prod(t["shape"]))
        chunk = raw[t["offset"] : t["offset"] + size]
        if chunk.size != size:
            raise ParseError(f"{path}: truncated tensor {t['name']}")
        tensors[t["name"]] = chunk.reshape(t["shape"]).astype(np.float64)
    m = init_model(manifest["d_A"], manifest["d_B"], manifest["hidden_sizes"], manifest["class_count"], 0)
    for name, p in m.params().items():
        p[...] = tensors[name]
    state = None
    if manifest["has_optimizer_state"]:
        opt = manifest["optimizer"]
        state = OptimizerState(
            opt["momentum"], opt["base_lr"], tuple(opt["decay_epochs"]), opt["weight_decay"],
            {k[len("momentum."):]: v for k, v in tensors.items() if k.startswith("momentum.")},
        )
    return m, state, manifest["epoch"]
