"""Effect of graph connectivity on the gap between DR-DSGD and DSGD.

Reports the spectral norm of each topology next to the final worst-device
accuracy of both algorithms.
"""
import argparse
import csv
from pathlib import Path

from drgossip import experiment, topology
from drgossip.config import load_config

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=str(ROOT / "configs" / "topology_sweep.txt"))
    ap.add_argument("--out", default="runs/topology_sweep")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    cfg = load_config(args.config)
    summary = experiment.run_all(cfg, args.out, jobs=args.jobs)
    t = cfg.topology
    rows = list(csv.DictReader(open(summary)))
    print(f"{'topology':<12} {'p':>5} {'rho(seed0)':>10} {'alg':<7} {'worst':>8} {'avg':>8} {'consensus':>10}")
    for r in rows:
        p = float(r["p"])
        g = topology.build_graph(r["topology"], t.K, p=p, radius=t.radius, rows=t.rows, cols=t.cols,
                                 seed=cfg.sweep.seeds[0] if t.seed is None else t.seed)
        rho = topology.metropolis_weights(g).spectral_norm
        print(f"{r['topology']:<12} {p:5g} {rho:10.4f} {r['algorithm']:<7} "
              f"{float(r['worst_acc_mean']):8.4f} {float(r['avg_acc_mean']):8.4f} {float(r['consensus_mean']):10.3g}")


if __name__ == "__main__":
    main()
