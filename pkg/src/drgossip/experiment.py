"""Turn a RunConfig into sweep cells, run them, and write CSV artifacts."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import datagen, model, topology
from .config import RunConfig
from .trainer import CSV_HEADER, MetricsRow, TrainConfig, resolve_schedule, train

log = logging.getLogger(__name__)

METRICS = ("avg_acc", "worst_acc", "worst10_acc", "stdev", "consensus", "robust_obj")
ALGO_ORDER = {"dsgd": 0, "drdsgd": 1}


@dataclass(frozen=True)
class Cell:
    algorithm: str
    topology: str
    p: float
    mu: float
    seed: int

    @property
    def name(self) -> str:
        return f"{self.algorithm}_{self.topology}_p{self.p:g}_mu{self.mu:g}_seed{self.seed}"

    @property
    def group(self) -> tuple:
        return (self.algorithm, self.topology, self.p, self.mu)


@dataclass
class Setup:
    graph: topology.Graph
    mixing: topology.MixingMatrix
    train_ds: datagen.LabeledDataset
    partition: datagen.DevicePartition
    test_sets: list
    spec: model.ModelSpec
    train_cfg: TrainConfig


def iter_cells(cfg: RunConfig) -> list[Cell]:
    kinds = cfg.sweep.topology or (cfg.topology.kind,)
    cells = []
    for kind in kinds:
        # p only shapes Erdos-Renyi graphs
        ps = (cfg.sweep.p or (cfg.topology.p,)) if kind == "erdos_renyi" else (cfg.topology.p,)
        for p in ps:
            for alg in sorted(cfg.train.algorithms, key=ALGO_ORDER.get):
                for mu in sorted(cfg.sweep.mu):
                    for s in cfg.sweep.seeds:
                        cells.append(Cell(alg, kind, float(p), float(mu), int(s)))
    return cells


def cell_config(cfg: RunConfig, cell: Cell) -> RunConfig:
    """Single-cell config with every seed spelled out."""
    def pick(v):
        return cell.seed if v is None else v
    return replace(
        cfg,
        topology=replace(cfg.topology, kind=cell.topology, p=cell.p, seed=pick(cfg.topology.seed)),
        dataset=replace(cfg.dataset, seed=pick(cfg.dataset.seed)),
        partition=replace(cfg.partition, seed=pick(cfg.partition.seed)),
        train=replace(cfg.train, algorithms=(cell.algorithm,)),
        sweep=replace(cfg.sweep, mu=(cell.mu,), p=(cell.p,), topology=(cell.topology,), seeds=(cell.seed,)),
    )


def load_data(cfg: RunConfig) -> tuple[datagen.LabeledDataset, datagen.LabeledDataset]:
    d = cfg.dataset
    seed = d.seed if d.seed is not None else cfg.sweep.seeds[0]
    if d.kind == "gaussian_mixture":
        scales = d.scales or None
        train_ds = datagen.gaussian_mixture(d.classes, d.per_class, d.dim, d.separation, [seed, 0], scales)
        test_ds = datagen.gaussian_mixture(d.classes, d.test_per_class, d.dim, d.separation, [seed, 1], scales)
        return train_ds, test_ds
    full = datagen.read_dataset(d.path, d.scale)
    if d.test_path is not None:
        return full, datagen.read_dataset(d.test_path, d.scale)
    perm = np.random.default_rng([seed, 2]).permutation(len(full))
    n_test = int(round(d.test_fraction * len(full)))
    return full.subset(np.sort(perm[n_test:])), full.subset(np.sort(perm[:n_test]))


def build(cfg: RunConfig) -> Setup:
    """Graph, mixing matrix, data, partitions and model for a single-cell config."""
    t = cfg.topology
    seed = cfg.sweep.seeds[0]
    g = topology.build_graph(t.kind, t.K, p=t.p, radius=t.radius, rows=t.rows, cols=t.cols,
                             seed=t.seed if t.seed is not None else seed)
    mixing = topology.metropolis_weights(g)
    if mixing.spectral_norm >= 1:
        raise ValueError(f"spectral norm {mixing.spectral_norm} >= 1")
    train_ds, test_ds = load_data(cfg)
    if np.any(train_ds.class_counts() == 0):
        raise datagen.DataError("every class needs at least one training sample")
    pseed = cfg.partition.seed if cfg.partition.seed is not None else seed
    spd = cfg.partition.shards_per_device
    part = datagen.partition_pathological(train_ds, t.K, spd, pseed)
    # test data is sharded with the same recipe so device i is scored on its own label mix
    test_part = datagen.partition_pathological(test_ds, t.K, spd, pseed)
    test_sets = [test_ds.subset(a) for a in test_part.assignments]

    m = cfg.model
    clip = None if m.clip == "none" else (
        model.default_clip(train_ds.num_classes) if m.clip == "auto" else float(m.clip))
    spec = model.ModelSpec(m.kind, train_ds.dim, train_ds.num_classes, m.hidden, clip)

    tr = cfg.train
    tcfg = TrainConfig(
        algorithm=tr.algorithms[0], T=tr.T,
        lr="auto" if tr.lr == "auto" else float(tr.lr),
        batch="auto" if tr.batch == "auto" else int(tr.batch),
        schedule=tr.schedule, L_hat=tr.L_hat, mu=cfg.sweep.mu[0],
        eval_every=tr.eval_every, eval_mode=tr.eval_mode, seed=seed,
    )
    return Setup(g, mixing, train_ds, part, test_sets, spec, tcfg)


def resolved_config(cfg: RunConfig, setup: Setup) -> RunConfig:
    K = setup.mixing.K
    size = min(setup.partition.device_size(i) for i in range(K))
    eta, B = resolve_schedule(setup.train_cfg, K, size)
    return replace(cfg, train=replace(cfg.train, lr=repr(eta), batch=str(B)))


def run_cell(cfg: RunConfig, cell: Cell, out_dir: Path, threads: int = 1) -> list[MetricsRow]:
    single = cell_config(cfg, cell)
    setup = build(single)
    cell_dir = Path(out_dir) / cell.name
    cell_dir.mkdir(parents=True, exist_ok=True)
    (cell_dir / "config.txt").write_text(resolved_config(single, setup).to_text())
    setup.graph.save(cell_dir / "graph.txt")
    log.info("cell %s: K=%d rho=%.4f", cell.name, setup.mixing.K, setup.mixing.spectral_norm)
    rows = train(setup.train_cfg, setup.mixing.W, setup.partition, setup.spec,
                 setup.train_ds, setup.test_sets, threads=threads)
    write_metrics(rows, cell_dir / "metrics.csv")
    return rows


def write_metrics(rows, path) -> None:
    Path(path).write_text("\n".join([CSV_HEADER] + [r.csv() for r in rows]) + "\n")


def read_metrics(path) -> list[dict]:
    lines = Path(path).read_text().splitlines()
    head = lines[0].split(",")
    return [{k: (int(v) if k == "round" else float(v)) for k, v in zip(head, ln.split(","))}
            for ln in lines[1:] if ln]


def mean_se(values) -> tuple[float, float]:
    a = np.asarray(values, dtype=float)
    if a.size < 2:
        return float(a.mean()), 0.0
    return float(a.mean()), float(np.std(a, ddof=1) / math.sqrt(a.size))


def summarize(final_rows: dict) -> str:
    """``final_rows`` maps Cell -> last MetricsRow; one line per (algorithm, topology, p, mu)."""
    groups: dict[tuple, list] = {}
    for cell, row in final_rows.items():
        groups.setdefault(cell.group, []).append((cell.seed, row))
    head = ["algorithm", "topology", "p", "mu", "n_seeds"]
    for m in METRICS:
        head += [f"{m}_mean", f"{m}_se"]
    lines = [",".join(head)]
    for key in sorted(groups, key=lambda k: (ALGO_ORDER[k[0]], k[1], k[2], k[3])):
        rows = [r for _, r in sorted(groups[key], key=lambda x: x[0])]
        vals = [key[0], key[1], repr(key[2]), repr(key[3]), str(len(rows))]
        for m in METRICS:
            mean, se = mean_se([getattr(r, m) for r in rows])
            vals += [repr(mean), repr(se)]
        lines.append(",".join(vals))
    return "\n".join(lines) + "\n"


class CellError(RuntimeError):
    pass


def _run_cell_job(args):
    cfg, cell, out_dir, threads = args
    try:
        return cell, run_cell(cfg, cell, out_dir, threads)[-1]
    except Exception as exc:
        raise CellError(f"cell {cell.name}: {type(exc).__name__}: {exc}") from exc


def run_all(cfg: RunConfig, out_dir=None, threads: int = 1, jobs: int = 1) -> Path:
    out = Path(out_dir or cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = iter_cells(cfg)
    work = [(cfg, c, out, threads) for c in cells]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            finals = dict(ex.map(_run_cell_job, work))
    else:
        finals = dict(map(_run_cell_job, work))
    path = out / "summary.csv"
    path.write_text(summarize(finals))
    return path
