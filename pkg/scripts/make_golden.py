"""Regenerate the frozen files under tests/golden/.

Run only when an RNG stream or numeric path changes on purpose; the tests
compare against whatever this writes.
"""
import json
from pathlib import Path

import numpy as np

from drgossip import datagen, model, topology, trainer

OUT = Path(__file__).resolve().parents[1] / "tests" / "golden"


def trace_setup():
    g = topology.generate_ring(4)
    W = topology.metropolis_weights(g).W
    ds = datagen.gaussian_mixture(4, 20, 3, 2.0, 3)
    part = datagen.partition_pathological(ds, 4, 1, 3)
    spec = model.ModelSpec("softmax", 3, 4)
    cfg = trainer.TrainConfig("drdsgd", T=20, lr=0.1, batch=8, mu=2.0, seed=3)
    return W, ds, part, spec, cfg


def trace_rows():
    W, ds, part, spec, cfg = trace_setup()
    state = trainer.init_state(spec, 4, cfg.seed)
    rows = []
    for _ in range(cfg.T):
        state = trainer.step(state, cfg, W, part, spec, ds, 0.1, 8)
        weights = np.arange(1, state.theta.size + 1).reshape(state.theta.shape)
        rows.append([state.t, float((weights * state.theta).sum()), float((state.theta**2).sum())])
    return rows


def sgd_trace():
    ds = datagen.gaussian_mixture(3, 10, 2, 3.0, 11)
    spec = model.ModelSpec("softmax", 2, 3)
    theta = model.init_params(spec, 11)
    rng = np.random.default_rng(11)
    out = []
    for _ in range(10):
        idx = rng.integers(0, len(ds), size=4)
        theta = trainer.local_update_dsgd(theta, (ds.features[idx], ds.labels[idx]), 0.5,
                                          lambda th, X, y: model.loss_and_grad(spec, th, X, y))
        out.append(theta.tolist())
    return out


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    topology.generate_erdos_renyi(10, 0.3, 7).save(OUT / "er_K10_p0.3_seed7.txt")
    topology.generate_geometric(8, 0.6, 1).save(OUT / "geometric_K8_r0.6_seed1.txt")

    part = datagen.DevicePartition((np.arange(100, 120),), 1)
    rng = datagen.device_stream(5, 1)[0]
    batches = [datagen.minibatch(part, 0, 6, rng).tolist() for _ in range(5)]

    ds = datagen.gaussian_mixture(3, 40, 2, 1.5, 21)
    spec = model.ModelSpec("mlp", 2, 3, hidden=(8, 6))
    theta = model.init_params(spec, 21)
    acc = model.accuracy(spec, theta, ds.features, ds.labels)

    golden = {
        "minibatch_stream_seed5": batches,
        "accuracy_mlp_seed21": acc,
        "trace_ring4_seed3": trace_rows(),
        "sgd_trace_seed11": sgd_trace(),
    }
    (OUT / "values.json").write_text(json.dumps(golden, indent=1) + "\n")
    print(f"wrote golden files to {OUT}")


if __name__ == "__main__":
    main()
