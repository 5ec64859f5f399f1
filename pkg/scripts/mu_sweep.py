"""Accuracy distribution statistics as the robustness parameter varies.

Prints one row per mu: average, worst-decile and worst accuracy plus the
per-device spread, each as mean +- standard error over seeds.
"""
import argparse
import csv
from pathlib import Path

from drgossip import experiment
from drgossip.config import load_config

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=str(ROOT / "configs" / "desk_mu_sweep.txt"))
    ap.add_argument("--out", default="runs/mu_sweep")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    summary = experiment.run_all(load_config(args.config), args.out, jobs=args.jobs)
    cols = ("avg_acc", "worst10_acc", "worst_acc", "stdev")
    print(f"{'alg':<7} {'mu':>5}" + "".join(f" {c:>17}" for c in cols))
    for row in csv.DictReader(open(summary)):
        cells = "".join(f" {float(row[c + '_mean']):8.4f}+-{float(row[c + '_se']):.4f}" for c in cols)
        print(f"{row['algorithm']:<7} {float(row['mu']):5g}{cells}")


if __name__ == "__main__":
    main()
