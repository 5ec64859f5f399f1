"""Fast invariant battery behind ``drgossip check``."""
from __future__ import annotations

import numpy as np

from . import model, robust, topology, trainer


def mixing_invariants(inject_asymmetric: bool = False, n_graphs: int = 20, seed: int = 0) -> str | None:
    rng = np.random.default_rng(seed)
    for k in range(n_graphs):
        K = int(rng.integers(4, 33))
        p = float(rng.uniform(0.2, 0.9))
        g = topology.generate_erdos_renyi(K, p, seed=1000 + k)
        W = np.array(topology.metropolis_weights(g).W)
        if inject_asymmetric:
            i, j = sorted(g.edges)[0]
            W[i, j] += 1e-3
            W[i, i] -= 1e-3
        problem = mixing_problem(W, g)
        if problem:
            return f"graph {k} (K={K}, p={p:.2f}): {problem}"
    return None


def mixing_problem(W: np.ndarray, g: topology.Graph) -> str | None:
    K = g.num_nodes
    if not np.array_equal(W, W.T):
        return "W is not symmetric"
    if np.max(np.abs(W.sum(axis=0) - 1)) > 1e-12 or np.max(np.abs(W.sum(axis=1) - 1)) > 1e-12:
        return "W is not doubly stochastic"
    if W.min() < 0 or W.max() > 1:
        return "W has entries outside [0, 1]"
    off = ~(g.adjacency().astype(bool) | np.eye(K, dtype=bool))
    if np.any(W[off] != 0):
        return "W has weight on a non-edge"
    rho = topology.spectral_norm(W)
    if not rho < 1:
        return f"spectral norm {rho} >= 1"
    return None


def contraction_inequality(n_cases: int = 30, seed: int = 1) -> str | None:
    rng = np.random.default_rng(seed)
    for k in range(n_cases):
        K = int(rng.integers(3, 16))
        g = topology.generate_erdos_renyi(K, float(rng.uniform(0.2, 0.9)), seed=2000 + k)
        mm = topology.metropolis_weights(g)
        A = rng.standard_normal((int(rng.integers(1, 6)), K))
        n = int(rng.integers(1, 6))
        lhs, rhs = topology.contraction_check(A, mm.W, n, mm.spectral_norm)
        if lhs > rhs + 1e-9:
            return f"case {k}: {lhs} > {rhs}"
    path3 = topology.metropolis_weights(topology.Graph(3, frozenset({(0, 1), (1, 2)})))
    if abs(path3.spectral_norm - 4 / 9) > 1e-10:
        return f"path-3 spectral norm {path3.spectral_norm} != 4/9"
    return None


def duality_identity(n_cases: int = 100, seed: int = 2) -> str | None:
    rng = np.random.default_rng(seed)
    for k in range(n_cases):
        f = rng.uniform(0, 5, size=int(rng.integers(2, 20)))
        mu = float(rng.uniform(0.2, 10))
        lam = robust.kl_worst_case_weights(f, mu)
        lhs = robust.regularized_value(lam, f, mu)
        rhs = robust.robust_objective(f, mu)
        if abs(lhs - rhs) > 1e-10:
            return f"case {k}: {lhs} != {rhs}"
    return None


def gradient_check(n_cases: int = 10, seed: int = 3) -> str | None:
    rng = np.random.default_rng(seed)
    for k in range(n_cases):
        kind = "softmax" if k % 2 == 0 else "mlp"
        spec = model.ModelSpec(kind, int(rng.integers(2, 6)), int(rng.integers(2, 5)), hidden=(7, 5))
        theta = model.init_params(spec, k) + 0.1 * rng.standard_normal(spec.num_params)
        X = rng.standard_normal((6, spec.input_dim))
        y = rng.integers(0, spec.num_classes, 6)
        _, g = model.loss_and_grad(spec, theta, X, y)
        coords = rng.choice(spec.num_params, size=min(20, spec.num_params), replace=False)
        num = model.finite_difference_grad(lambda th: model.loss_and_grad(spec, th, X, y)[0], theta, coords)
        if not np.all(np.abs(g[coords] - num) <= 1e-4 * np.maximum(np.abs(g[coords]), np.abs(num)) + 1e-6):
            return f"case {k} ({kind}): analytic and numeric gradients disagree"
    return None


def mean_preservation(seed: int = 4) -> str | None:
    rng = np.random.default_rng(seed)
    g = topology.generate_erdos_renyi(12, 0.4, seed=seed)
    W = topology.metropolis_weights(g).W
    theta = rng.standard_normal((5, 12))
    for _ in range(10):
        nxt = trainer.mix(theta, W)
        if np.max(np.abs(nxt.mean(axis=1) - theta.mean(axis=1))) > 1e-10:
            return "column mean drifted under mixing"
        theta = nxt
    return None


BATTERY = (
    ("mixing matrix invariants", mixing_invariants),
    ("contraction inequality", contraction_inequality),
    ("DRO duality identity", duality_identity),
    ("gradient check", gradient_check),
    ("mean preservation under mixing", mean_preservation),
)


def run_battery(inject_asymmetric: bool = False, out=print) -> bool:
    ok = True
    for name, fn in BATTERY:
        problem = fn(inject_asymmetric) if fn is mixing_invariants else fn()
        out(f"{'PASS' if problem is None else 'FAIL'}  {name}" + ("" if problem is None else f": {problem}"))
        ok &= problem is None
    return ok
