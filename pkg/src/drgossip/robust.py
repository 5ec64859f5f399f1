"""KL-regularized distributionally robust objective and the exponential tilt.

Every exponential is max-shifted; raw exponents above ``EXP_LIMIT`` are
refused rather than allowed to overflow.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import model

EXP_LIMIT = 700.0


class TiltOverflowError(OverflowError):
    def __init__(self, exponent: float, device: int | None = None):
        who = "" if device is None else f"device {device}: "
        super().__init__(
            f"{who}tilt exponent mean_loss/mu = {exponent:.4g} exceeds {EXP_LIMIT:g}; "
            "raise mu or enable loss clipping"
        )
        self.exponent = exponent
        self.device = device


@dataclass(frozen=True)
class RobustConfig:
    mu: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if self.mu < 1:
            warnings.warn(f"mu={self.mu} < 1 lies outside the convergence guarantee", stacklevel=2)


def _check_mu(mu: float) -> None:
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")


def tilt(mean_loss: float, mu: float, device: int | None = None) -> float:
    """exp(mean_loss / mu)."""
    _check_mu(mu)
    e = mean_loss / mu
    if e > EXP_LIMIT:
        raise TiltOverflowError(e, device)
    return float(np.exp(e))


def robust_objective(f, mu: float) -> float:
    """mu * log((1/K) sum_i exp(f_i / mu))."""
    _check_mu(mu)
    f = np.asarray(f, dtype=float)
    if not np.all(np.isfinite(f)):
        raise ValueError("losses must be finite")
    s = f / mu
    top = s.max()
    return float(mu * (top + np.log(np.mean(np.exp(s - top)))))


def kl_worst_case_weights(f, mu: float) -> np.ndarray:
    """Maximizer over the simplex of sum(lam * f) - mu * sum(lam * log(lam * K))."""
    _check_mu(mu)
    s = np.asarray(f, dtype=float) / mu
    w = np.exp(s - s.max())
    return w / w.sum()


def regularized_value(lam, f, mu: float) -> float:
    """The inner objective sum(lam * f) - mu * KL(lam || uniform); 0 log 0 = 0."""
    lam = np.asarray(lam, dtype=float)
    f = np.asarray(f, dtype=float)
    K = lam.size
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = np.where(lam > 0, lam * np.log(lam * K), 0.0)
    return float(lam @ f - mu * ent.sum())


def surrogate_value(f, mu: float) -> float:
    """(1/K) sum_i exp(f_i / mu)."""
    _check_mu(mu)
    s = np.asarray(f, dtype=float) / mu
    if s.max() > EXP_LIMIT:
        raise TiltOverflowError(float(s.max()))
    return float(np.mean(np.exp(s)))


@dataclass(frozen=True)
class BiasReport:
    empirical: np.ndarray  # Monte Carlo mean of h * g
    plug_in: np.ndarray  # exp(f / mu) * grad f on the full device data
    gap: float
    stderr: float  # standard error of the gap estimate


def _per_sample(spec, theta, X, y):
    losses = np.empty(len(y))
    grads = np.empty((len(y), theta.size))
    for j in range(len(y)):
        losses[j], grads[j] = model.loss_and_grad(spec, theta, X[j:j + 1], y[j:j + 1])
    return losses, grads


def bias_probe(spec, theta, X, y, mu: float, B: int, trials: int, seed=0,
               per_sample=None) -> BiasReport:
    """Compare E[h * g] over random mini-batches with the plug-in tilted gradient.

    Batch mean loss and gradient are linear in the per-sample values, so each
    trial reuses per-sample evaluations instead of a fresh forward pass.
    ``per_sample`` may supply ``(losses, grads)`` directly for non-model losses.
    """
    if trials < 100:
        raise ValueError("bias_probe needs at least 100 trials")
    _check_mu(mu)
    losses, grads = per_sample if per_sample is not None else _per_sample(spec, theta, X, y)
    n = losses.size
    rng = np.random.default_rng(seed)
    d = grads.shape[1]
    full_cov = d <= 512
    acc = np.zeros(d)
    acc2 = np.zeros((d, d)) if full_cov else np.zeros(d)
    chunk = max(1, 4_000_000 // (B * d))
    done = 0
    while done < trials:
        t = min(chunk, trials - done)
        idx = rng.integers(0, n, size=(t, B))
        lbar = losses[idx].mean(axis=1)
        gbar = grads[idx].mean(axis=1)
        hg = np.exp(lbar / mu)[:, None] * gbar
        acc += hg.sum(axis=0)
        acc2 += hg.T @ hg if full_cov else (hg**2).sum(axis=0)
        done += t
    mean = acc / trials
    cov = (acc2 / trials - (np.outer(mean, mean) if full_cov else mean**2)) * trials / (trials - 1)
    cov = cov / trials  # covariance of the Monte Carlo mean
    f = losses.mean()
    plug = np.exp(f / mu) * grads.mean(axis=0)
    diff = mean - plug
    gap = float(np.linalg.norm(diff))
    var_diag = np.maximum(np.diag(cov) if full_cov else cov, 0.0)
    if gap == 0:
        se = float(np.sqrt(var_diag.sum()))
    elif full_cov:
        u = diff / gap  # delta method along the gap direction
        se = float(np.sqrt(max(u @ cov @ u, 0.0)))
    else:
        se = float(np.sqrt((diff / gap) ** 2 @ var_diag))
    return BiasReport(mean, plug, gap, se)
