"""DSGD vs DR-DSGD on the extreme non-IID Gaussian mixture.

Prints per-seed worst-device accuracy and the final per-device accuracy
spread, then the per-round average/worst curves averaged over seeds.
"""
import argparse
from pathlib import Path

import numpy as np

from drgossip import experiment
from drgossip.config import load_config

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=str(ROOT / "configs" / "desk_robustness.txt"))
    ap.add_argument("--out", default="runs/robustness")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    cfg = load_config(args.config)
    out = Path(args.out)
    experiment.run_all(cfg, out, jobs=args.jobs)
    curves = {}
    for cell in experiment.iter_cells(cfg):
        curves.setdefault(cell.algorithm, []).append(experiment.read_metrics(out / cell.name / "metrics.csv"))

    print(f"{'seed':>4}  {'alg':<7} {'avg':>7} {'worst':>7} {'stdev':>7}")
    for alg, runs in curves.items():
        for seed, rows in zip(cfg.sweep.seeds, runs):
            r = rows[-1]
            print(f"{seed:>4}  {alg:<7} {r['avg_acc']:7.4f} {r['worst_acc']:7.4f} {r['stdev']:7.4f}")

    print(f"\n{'round':>6}" + "".join(f"  {alg + ' avg':>12} {alg + ' worst':>12}" for alg in curves))
    rounds = [r["round"] for r in next(iter(curves.values()))[0]]
    for k, t in enumerate(rounds):
        line = f"{t:>6}"
        for runs in curves.values():
            line += f"  {np.mean([rows[k]['avg_acc'] for rows in runs]):12.4f}"
            line += f" {np.mean([rows[k]['worst_acc'] for rows in runs]):12.4f}"
        print(line)


if __name__ == "__main__":
    main()
