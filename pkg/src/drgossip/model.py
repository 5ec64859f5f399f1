"""Softmax regression and a ReLU MLP with hand-written backprop.

Parameters live in one flat float64 vector. Each dense layer stores its
weight matrix (fan_in x fan_out, row-major) followed by its bias.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class NonFiniteError(FloatingPointError):
    def __init__(self, layer: int, what: str = "activations"):
        super().__init__(f"non-finite {what} at layer {layer}")
        self.layer = layer


@dataclass(frozen=True)
class ModelSpec:
    kind: str  # "softmax" | "mlp"
    input_dim: int
    num_classes: int
    hidden: tuple = (128, 64)
    clip: float | None = None

    def __post_init__(self):
        if self.kind not in ("softmax", "mlp"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.input_dim < 1 or self.num_classes < 2:
            raise ValueError("input_dim must be >= 1 and num_classes >= 2")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.kind == "mlp" and (not self.hidden or min(self.hidden) < 1):
            raise ValueError("MLP hidden widths must be positive")
        if self.clip is not None and self.clip <= 0:
            raise ValueError("clip ceiling must be positive")

    @property
    def widths(self) -> tuple:
        if self.kind == "softmax":
            return (self.input_dim, self.num_classes)
        return (self.input_dim, *self.hidden, self.num_classes)

    def layout(self) -> list[tuple[tuple[int, int], slice, slice]]:
        """Per layer: (weight shape, weight slice, bias slice) into the flat vector."""
        out, off = [], 0
        w = self.widths
        for fan_in, fan_out in zip(w[:-1], w[1:]):
            ws = slice(off, off + fan_in * fan_out)
            off += fan_in * fan_out
            bs = slice(off, off + fan_out)
            off += fan_out
            out.append(((fan_in, fan_out), ws, bs))
        return out

    @property
    def num_params(self) -> int:
        return self.layout()[-1][2].stop


def default_clip(num_classes: int) -> float:
    return 2.0 * float(np.log(num_classes))


def init_params(spec: ModelSpec, seed) -> np.ndarray:
    """Kaiming-uniform weights with a = sqrt(5) (bound 1 / sqrt(fan_in)), zero biases.

    The small bound keeps initial cross-entropy near log(M), which the
    exponential tilt needs to stay in range at small mu.
    """
    rng = np.random.default_rng(seed)
    theta = np.zeros(spec.num_params)
    for (fan_in, fan_out), ws, _ in spec.layout():
        bound = 1.0 / np.sqrt(fan_in)
        theta[ws] = rng.uniform(-bound, bound, size=fan_in * fan_out)
    return theta


def _unpack(spec: ModelSpec, theta: np.ndarray):
    return [(theta[ws].reshape(shape), theta[bs]) for shape, ws, bs in spec.layout()]


def _forward(spec: ModelSpec, theta: np.ndarray, X: np.ndarray):
    layers = _unpack(spec, theta)
    acts = [X]
    h = X
    for k, (W, b) in enumerate(layers):
        z = h @ W + b
        if not np.all(np.isfinite(z)):
            raise NonFiniteError(k)
        h = z if k == len(layers) - 1 else np.maximum(z, 0.0)
        acts.append(h)
    return layers, acts


def _log_softmax(Z: np.ndarray) -> np.ndarray:
    s = Z - Z.max(axis=1, keepdims=True)
    return s - np.log(np.exp(s).sum(axis=1, keepdims=True))


def logits(spec: ModelSpec, theta: np.ndarray, X: np.ndarray) -> np.ndarray:
    return _forward(spec, theta, np.asarray(X, dtype=float))[1][-1]


def predict_proba(spec: ModelSpec, theta: np.ndarray, X: np.ndarray) -> np.ndarray:
    return np.exp(_log_softmax(logits(spec, theta, X)))


def per_sample_loss(spec: ModelSpec, theta: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    logp = _log_softmax(logits(spec, theta, X))
    loss = -logp[np.arange(len(y)), y]
    if spec.clip is not None:
        loss = np.minimum(loss, spec.clip)
    return loss


def loss_and_grad(spec: ModelSpec, theta: np.ndarray, X: np.ndarray, y: np.ndarray):
    """Mean cross-entropy over the batch and its exact gradient.

    With ``spec.clip`` set, a sample whose loss reaches the ceiling counts as
    the ceiling and contributes no gradient.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    B = len(y)
    if B == 0:
        raise ValueError("empty batch")
    if X.shape[1] != spec.input_dim:
        raise ValueError(f"feature dim {X.shape[1]} != model input dim {spec.input_dim}")
    layers, acts = _forward(spec, theta, X)
    logp = _log_softmax(acts[-1])
    rows = np.arange(B)
    loss = -logp[rows, y]
    dZ = np.exp(logp)
    dZ[rows, y] -= 1.0
    if spec.clip is not None:
        active = loss < spec.clip
        loss = np.where(active, loss, spec.clip)
        dZ *= active[:, None]
    dZ /= B

    grad = np.empty_like(theta)
    layout = spec.layout()
    for k in range(len(layers) - 1, -1, -1):
        _, ws, bs = layout[k]
        grad[ws] = (acts[k].T @ dZ).ravel()
        grad[bs] = dZ.sum(axis=0)
        if k:
            dZ = (dZ @ layers[k][0].T) * (acts[k] > 0)
    return float(loss.sum() / B), grad


def accuracy(spec: ModelSpec, theta: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
    y = np.asarray(y)
    if len(y) == 0:
        raise ValueError("accuracy of an empty subset")
    pred = np.argmax(logits(spec, theta, X), axis=1)  # first max wins ties
    return float(np.mean(pred == y))


def finite_difference_grad(fn, theta: np.ndarray, coords, step: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``fn`` at the listed coordinates."""
    theta = np.array(theta, dtype=float)
    out = np.empty(len(coords))
    for n, c in enumerate(coords):
        old = theta[c]
        theta[c] = old + step
        up = fn(theta)
        theta[c] = old - step
        down = fn(theta)
        theta[c] = old
        out[n] = (up - down) / (2.0 * step)
    return out


def save_params(theta: np.ndarray, path) -> None:
    theta = np.asarray(theta, dtype="<f8")
    Path(path).write_bytes(struct.pack("<Q", theta.size) + theta.tobytes())


def load_params(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    (d,) = struct.unpack_from("<Q", raw, 0)
    if len(raw) != 8 + 8 * d:
        raise ValueError(f"{path}: expected {8 + 8 * d} bytes, found {len(raw)}")
    return np.frombuffer(raw, dtype="<f8", count=d, offset=8).astype(np.float64)
