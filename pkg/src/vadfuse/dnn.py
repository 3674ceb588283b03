"""Lite two-layer dense network: spliced features -> (p_speech, p_silence)."""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

HIDDEN = 32
OUTPUTS = 2
MAGIC = b"VADW"
VERSION = 1
SOFT_LABELS = (0.0, 0.5, 1.0)


class DnnError(Exception):
    pass


class DimMismatch(DnnError):
    pass


class NonFiniteLoss(DnnError):
    pass


class BadMagic(DnnError):
    pass


class DimHeaderMismatch(DnnError):
    pass


class TruncatedFile(DnnError):
    pass


class DnnPosterior(NamedTuple):
    p_speech: float
    p_silence: float


@dataclass(frozen=True)
class DnnWeights:
    W1: np.ndarray  # (hidden, input_dim)
    b1: np.ndarray  # (hidden,)
    W2: np.ndarray  # (2, hidden)
    b2: np.ndarray  # (2,) index 0 is speech
    activation: str = "relu"

    def __post_init__(self) -> None:
        h, d = self.W1.shape
        if self.b1.shape != (h,) or self.W2.shape != (OUTPUTS, h) or self.b2.shape != (OUTPUTS,):
            raise DimMismatch("inconsistent weight shapes")
        if self.activation not in ("relu", "sigmoid"):
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def input_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def hidden(self) -> int:
        return self.W1.shape[0]

    def params(self) -> tuple[np.ndarray, ...]:
        return self.W1, self.b1, self.W2, self.b2

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params())


def init_weights(input_dim: int, hidden: int = HIDDEN, seed: int = 0, activation: str = "relu") -> DnnWeights:
    rng = np.random.default_rng(seed)
    return DnnWeights(
        W1=rng.normal(0.0, np.sqrt(2.0 / input_dim), size=(hidden, input_dim)),
        b1=np.zeros(hidden),
        W2=rng.normal(0.0, np.sqrt(1.0 / hidden), size=(OUTPUTS, hidden)),
        b2=np.zeros(OUTPUTS),
        activation=activation,
    )


def zero_weights(input_dim: int, hidden: int = HIDDEN) -> DnnWeights:
    return DnnWeights(np.zeros((hidden, input_dim)), np.zeros(hidden), np.zeros((OUTPUTS, hidden)), np.zeros(OUTPUTS))


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward_batch(w: DnnWeights, X: np.ndarray) -> np.ndarray:
    """Posteriors for a batch, shape (n, 2) with columns (speech, silence)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != w.input_dim:
        raise DimMismatch(f"input dim {X.shape[1]} != {w.input_dim}")
    h = _activate(X @ w.W1.T + w.b1, w.activation)
    return softmax(h @ w.W2.T + w.b2)


def forward(w: DnnWeights, x: np.ndarray) -> DnnPosterior:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != w.input_dim:
        raise DimMismatch(f"input shape {x.shape} does not match input_dim {w.input_dim}")
    p = forward_batch(w, x[None, :])[0]
    return DnnPosterior(float(p[0]), float(p[1]))


def dnn_flag(p: DnnPosterior, threshold: float = 0.5) -> int:
    return int(p.p_speech > threshold)


def loss_and_grads(w: DnnWeights, X: np.ndarray, targets: np.ndarray) -> tuple[float, tuple[np.ndarray, ...]]:
    """Mean soft-target cross entropy and its gradients w.r.t. (W1, b1, W2, b2)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    t = np.asarray(targets, dtype=np.float64).reshape(-1)
    if X.shape[1] != w.input_dim:
        raise DimMismatch(f"input dim {X.shape[1]} != {w.input_dim}")
    n = len(X)
    z1 = X @ w.W1.T + w.b1
    h = _activate(z1, w.activation)
    logits = h @ w.W2.T + w.b2
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_p = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    T = np.stack([t, 1.0 - t], axis=1)
    loss = float(-(T * log_p).sum() / n)

    d_logits = (np.exp(log_p) - T) / n
    gW2 = d_logits.T @ h
    gb2 = d_logits.sum(axis=0)
    d_h = d_logits @ w.W2
    if w.activation == "relu":
        d_z1 = d_h * (z1 > 0)
    else:
        d_z1 = d_h * h * (1.0 - h)
    gW1 = d_z1.T @ X
    gb1 = d_z1.sum(axis=0)
    return loss, (gW1, gb1, gW2, gb2)


def train_step(w: DnnWeights, X: np.ndarray, targets: np.ndarray, lr: float = 0.01) -> tuple[DnnWeights, float]:
    """One plain gradient-descent step; returns the updated weights and the pre-update loss."""
    if len(X) == 0:
        raise ValueError("empty batch")
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    loss, grads = loss_and_grads(w, X, targets)
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"loss={loss}")
    W1, b1, W2, b2 = (p - lr * g for p, g in zip(w.params(), grads))
    return replace(w, W1=W1, b1=b1, W2=W2, b2=b2), loss


def train(
    w: DnnWeights,
    X: np.ndarray,
    targets: np.ndarray,
    epochs: int = 10,
    lr: float = 0.01,
    batch_size: int = 64,
    seed: int = 0,
) -> tuple[DnnWeights, list[float]]:
    """Shuffled minibatch SGD. Returns final weights and the mean loss per epoch."""
    rng = np.random.default_rng(seed)
    X = np.asarray(X, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    history = []
    for _ in range(epochs):
        order = rng.permutation(len(X))
        total = 0.0
        for start in range(0, len(X), batch_size):
            idx = order[start:start + batch_size]
            w, loss = train_step(w, X[idx], targets[idx], lr)
            total += loss * len(idx)
        history.append(total / len(X))
    return w, history


def to_float32(w: DnnWeights) -> DnnWeights:
    """Round every parameter to the precision stored in weight files."""
    W1, b1, W2, b2 = (p.astype(np.float32).astype(np.float64) for p in w.params())
    return replace(w, W1=W1, b1=b1, W2=W2, b2=b2)


def save_weights(w: DnnWeights, path: str | Path) -> None:
    header = MAGIC + bytes([VERSION]) + struct.pack("<4I", w.input_dim, w.hidden, OUTPUTS, 0)
    payload = b"".join(np.ascontiguousarray(p, dtype="<f4").tobytes() for p in w.params())
    Path(path).write_bytes(header + payload)


def load_weights(path: str | Path, activation: str = "relu") -> DnnWeights:
    data = Path(path).read_bytes()
    if len(data) < 5 or data[:4] != MAGIC:
        raise BadMagic(f"{path}: bad magic")
    if data[4] != VERSION:
        raise BadMagic(f"{path}: unsupported version {data[4]}")
    if len(data) < 21:
        raise TruncatedFile(f"{path}: header truncated")
    input_dim, hidden, outputs, reserved = struct.unpack_from("<4I", data, 5)
    if hidden != HIDDEN or outputs != OUTPUTS or reserved != 0 or input_dim == 0:
        raise DimHeaderMismatch(f"{path}: header dims ({input_dim}, {hidden}, {outputs}, {reserved})")
    sizes = [hidden * input_dim, hidden, outputs * hidden, outputs]
    need = 21 + 4 * sum(sizes)
    if len(data) < need:
        raise TruncatedFile(f"{path}: {len(data)} bytes, expected {need}")
    if len(data) > need:
        raise DimHeaderMismatch(f"{path}: {len(data) - need} trailing bytes")
    flat = np.frombuffer(data, dtype="<f4", offset=21).astype(np.float64)
    parts, pos = [], 0
    for size in sizes:
        parts.append(flat[pos:pos + size])
        pos += size
    return DnnWeights(
        W1=parts[0].reshape(hidden, input_dim),
        b1=parts[1].copy(),
        W2=parts[2].reshape(outputs, hidden),
        b2=parts[3].copy(),
        activation=activation,
    )
