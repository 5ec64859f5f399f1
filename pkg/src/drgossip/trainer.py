"""Synchronous decentralized training: local step on every device, then one gossip mix.

Parameters are held as a ``(d, K)`` matrix whose column ``i`` belongs to
device ``i``. A round is bit-identical regardless of how many threads run
the local updates: each device draws from its own generator and writes only
its own column, and mixing happens after all columns are in.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import model
from .datagen import LabeledDataset, DevicePartition, device_stream, minibatch
from .robust import robust_objective, tilt, TiltOverflowError
from .topology import spectral_norm

ALGORITHMS = ("dsgd", "drdsgd")
CSV_HEADER = "round,avg_acc,worst_acc,worst10_acc,stdev,consensus,robust_obj"


class DeviceError(RuntimeError):
    def __init__(self, round_: int, device: int, cause: Exception):
        msg = str(cause)
        prefix = f"device {device}: "
        super().__init__(f"round {round_}, {prefix}{msg.removeprefix(prefix)}")
        self.round = round_
        self.device = device
        self.cause = cause


@dataclass(frozen=True)
class TrainConfig:
    algorithm: str = "dsgd"
    T: int = 100
    lr: float | str = "auto"
    batch: int | str = "auto"
    schedule: str = "sqrt"  # "sqrt" | "lipschitz"
    L_hat: float = 1.0
    mu: float = 1.0  # DR tilt; DSGD uses it only to report the robust objective
    eval_every: int = 1
    eval_mode: str = "average"  # "average" scores the network mean, "local" each device's own model
    seed: int = 0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.lr != "auto" and not float(self.lr) > 0:
            raise ValueError("learning rate must be positive")
        if self.batch != "auto" and int(self.batch) < 1:
            raise ValueError("batch size must be >= 1")
        if self.schedule not in ("sqrt", "lipschitz"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")
        if self.eval_mode not in ("average", "local"):
            raise ValueError(f"unknown eval_mode {self.eval_mode!r}")


def resolve_schedule(cfg: TrainConfig, K: int, device_size: int | None = None) -> tuple[float, int]:
    """Step size and batch size; ``auto`` entries follow the sqrt(K/T), sqrt(KT) rules."""
    if K < 1:
        raise ValueError("K must be >= 1")
    if cfg.lr != "auto":
        eta = float(cfg.lr)
    elif cfg.schedule == "sqrt":
        eta = math.sqrt(K / cfg.T)
    else:
        eta = 1.0 / (2.0 * cfg.L_hat + math.sqrt(cfg.T / K))
    if cfg.batch != "auto":
        B = int(cfg.batch)
    else:
        B = int(round(math.sqrt(K * cfg.T)))
        if device_size is not None:
            B = min(B, device_size)
    if B < 1:
        raise ValueError("batch size resolved to 0")
    return eta, B


@dataclass
class TrainState:
    theta: np.ndarray  # (d, K)
    t: int
    rngs: list = field(repr=False)


def init_state(spec: model.ModelSpec, K: int, seed) -> TrainState:
    theta0 = model.init_params(spec, [seed, 0])
    theta = np.repeat(theta0[:, None], K, axis=1)
    return TrainState(theta, 0, device_stream([seed, 1], K))


def local_update_dsgd(theta_i, batch, eta, loss_grad):
    _, g = loss_grad(theta_i, *batch)
    return theta_i - eta * g


def local_update_drdsgd(theta_i, batch, eta, mu, loss_grad, device=None):
    loss, g = loss_grad(theta_i, *batch)
    h = tilt(loss, mu, device)
    return theta_i - (eta * h / mu) * g


def mix(theta: np.ndarray, W: np.ndarray) -> np.ndarray:
    return theta @ W


def consensus_distance(theta: np.ndarray) -> float:
    dev = theta - theta.mean(axis=1, keepdims=True)
    return float(np.sum(dev * dev))


def _spec_loss_grad(spec):
    def f(theta, X, y):
        return model.loss_and_grad(spec, theta, X, y)
    return f


def step(state: TrainState, cfg: TrainConfig, W: np.ndarray, partition: DevicePartition,
         spec: model.ModelSpec, ds: LabeledDataset, eta: float, B: int,
         pool: ThreadPoolExecutor | None = None, loss_grad=None) -> TrainState:
    """One synchronous round of DSGD or DR-DSGD."""
    K = state.theta.shape[1]
    if W.shape != (K, K):
        raise ValueError(f"mixing matrix {W.shape} does not match K={K}")
    loss_grad = loss_grad or _spec_loss_grad(spec)
    X, y = ds.features, ds.labels

    def device_update(i):
        try:
            idx = minibatch(partition, i, B, state.rngs[i])
            batch = (X[idx], y[idx])
            if cfg.algorithm == "dsgd":
                return local_update_dsgd(state.theta[:, i], batch, eta, loss_grad)
            return local_update_drdsgd(state.theta[:, i], batch, eta, cfg.mu, loss_grad, device=i)
        except Exception as exc:  # reported with round and device
            if isinstance(exc, TiltOverflowError) and exc.device is None:
                exc.device = i
            raise DeviceError(state.t, i, exc) from exc

    half = np.empty_like(state.theta)
    cols = pool.map(device_update, range(K)) if pool is not None else map(device_update, range(K))
    for i, col in enumerate(cols):
        if not np.all(np.isfinite(col)):
            raise DeviceError(state.t, i, FloatingPointError("non-finite parameters"))
        half[:, i] = col
    return TrainState(mix(half, W), state.t + 1, state.rngs)


@dataclass(frozen=True)
class MetricsRow:
    round: int
    avg_acc: float
    worst_acc: float
    worst10_acc: float
    stdev: float
    consensus: float
    robust_obj: float

    def csv(self) -> str:
        vals = [self.avg_acc, self.worst_acc, self.worst10_acc, self.stdev, self.consensus, self.robust_obj]
        return f"{self.round}," + ",".join(repr(float(v)) for v in vals)


def accuracy_stats(accs) -> tuple[float, float, float, float]:
    """(average, worst, worst-decile mean, sample stdev) of per-device accuracies."""
    a = np.asarray(accs, dtype=float)
    worst_n = math.ceil(a.size / 10)
    stdev = float(np.std(a, ddof=1)) if a.size > 1 else 0.0
    return float(a.mean()), float(a.min()), float(np.sort(a)[:worst_n].mean()), stdev


def evaluate(state: TrainState, spec: model.ModelSpec, test_sets, train_ds: LabeledDataset,
             partition: DevicePartition, mu: float, mode: str = "average") -> MetricsRow:
    """Per-device test accuracy and the robust objective over device train losses."""
    K = state.theta.shape[1]
    mean_model = state.theta.mean(axis=1)
    accs, losses = [], []
    for i in range(K):
        th = mean_model if mode == "average" else state.theta[:, i]
        te = test_sets[i]
        accs.append(model.accuracy(spec, th, te.features, te.labels))
        idx = partition.assignments[i]
        losses.append(float(model.per_sample_loss(spec, th, train_ds.features[idx], train_ds.labels[idx]).mean()))
    avg, worst, worst10, sd = accuracy_stats(accs)
    return MetricsRow(state.t, avg, worst, worst10, sd, consensus_distance(state.theta),
                      robust_objective(losses, mu))


def train(cfg: TrainConfig, W: np.ndarray, partition: DevicePartition, spec: model.ModelSpec,
          ds: LabeledDataset, test_sets, threads: int = 1, on_row=None) -> list[MetricsRow]:
    """Run ``cfg.T`` rounds, evaluating at round 0, every ``eval_every`` rounds and at the end."""
    W = np.asarray(W, dtype=float)
    K = W.shape[0]
    rho = spectral_norm(W)
    if rho >= 1.0:
        raise ValueError(f"mixing matrix has spectral norm {rho:.6g} >= 1; consensus cannot contract")
    if partition.num_devices != K or len(test_sets) != K:
        raise ValueError("partition, test sets and mixing matrix disagree on K")
    eta, B = resolve_schedule(cfg, K, min(partition.device_size(i) for i in range(K)))
    state = init_state(spec, K, cfg.seed)
    rows = []

    def record():
        row = evaluate(state, spec, test_sets, ds, partition, cfg.mu, cfg.eval_mode)
        rows.append(row)
        if on_row is not None:
            on_row(row)

    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        record()
        for _ in range(cfg.T):
            state = step(state, cfg, W, partition, spec, ds, eta, B, pool)
            if state.t % cfg.eval_every == 0 or state.t == cfg.T:
                record()
    finally:
        if pool is not None:
            pool.shutdown()
    return rows


def with_resolved_schedule(cfg: TrainConfig, K: int, device_size: int) -> TrainConfig:
    eta, B = resolve_schedule(cfg, K, device_size)
    return replace(cfg, lr=eta, batch=B)
