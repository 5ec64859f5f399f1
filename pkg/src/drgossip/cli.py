"""Command line entry point: ``drgossip run | check | dump-partition``."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import checks, datagen, experiment
from .config import ConfigError, load_config

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


def _load(path, args):
    cfg = load_config(path)
    env_seed = os.environ.get("DRGOSSIP_SEED")
    if env_seed is not None:
        try:
            cfg = replace(cfg, sweep=replace(cfg.sweep, seeds=(int(env_seed),)))
        except ValueError:
            raise ConfigError(f"DRGOSSIP_SEED must be an integer, got {env_seed!r}") from None
    if getattr(args, "eval_every", None) is not None:
        if args.eval_every < 1:
            raise ConfigError("--eval-every must be >= 1")
        cfg = replace(cfg, train=replace(cfg.train, eval_every=args.eval_every))
    if getattr(args, "out", None) is not None:
        cfg = replace(cfg, output=replace(cfg.output, dir=args.out))
    return cfg


def cmd_run(args) -> int:
    try:
        cfg = _load(args.config, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        summary = experiment.run_all(cfg, threads=args.threads, jobs=args.jobs)
    except Exception as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {summary}")
    return EXIT_OK


def cmd_check(args) -> int:
    inject = args.inject_fault == "asymmetric-w"
    return EXIT_OK if checks.run_battery(inject_asymmetric=inject) else EXIT_FAIL


def cmd_dump_partition(args) -> int:
    try:
        cfg = _load(args.config, args)
        cell = experiment.iter_cells(cfg)[0]
        single = experiment.cell_config(cfg, cell)
        train_ds, _ = experiment.load_data(single)
        part = datagen.partition_pathological(
            train_ds, single.topology.K, single.partition.shards_per_device, single.partition.seed)
    except (ConfigError, datagen.DataError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    text = datagen.histogram_csv(part, train_ds.labels, train_ds.num_classes)
    if args.out is None:
        sys.stdout.write(text)
    else:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "partition.csv").write_text(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="drgossip", description="DSGD vs DR-DSGD decentralized learning simulator")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run every sweep cell of a config")
    run.add_argument("config")
    run.add_argument("--out", help="output directory (overrides output.dir)")
    run.add_argument("--threads", type=int, default=1, help="threads for per-round device updates")
    run.add_argument("--jobs", type=int, default=1, help="sweep cells run in parallel processes")
    run.add_argument("--eval-every", type=int, dest="eval_every")
    run.set_defaults(func=cmd_run)

    chk = sub.add_parser("check", help="run the invariant battery")
    chk.add_argument("--inject-fault", choices=["asymmetric-w"], help=argparse.SUPPRESS)
    chk.set_defaults(func=cmd_check)

    dp = sub.add_parser("dump-partition", help="per-device class histograms as CSV")
    dp.add_argument("config")
    dp.add_argument("--out", help="write <out>/partition.csv instead of stdout")
    dp.set_defaults(func=cmd_dump_partition)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
