"""Flat ``section.key = value`` experiment configs.

Grammar: one assignment per line; ``#`` starts a comment; blank lines are
ignored; lists are comma separated; ``none`` clears optional values. Unknown
keys are errors. See README.md for every key and its default.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TopologyConfig:
    kind: str = "erdos_renyi"
    K: int = 10
    p: float = 0.3
    radius: float = 0.5
    rows: int | None = None
    cols: int | None = None
    seed: int | None = None  # none: follow the run seed


@dataclass(frozen=True)
class DatasetConfig:
    kind: str = "gaussian_mixture"
    classes: int = 4
    per_class: int = 250
    test_per_class: int = 250
    dim: int = 3
    separation: float = 2.0
    scales: tuple = ()  # per-class std devs; empty: unit variance
    path: str | None = None
    test_path: str | None = None
    test_fraction: float = 0.2
    scale: float | None = None
    seed: int | None = None


@dataclass(frozen=True)
class PartitionConfig:
    shards_per_device: int = 2
    seed: int | None = None


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "softmax"
    hidden: tuple = (128, 64)
    clip: str = "none"  # none | auto | <float>


@dataclass(frozen=True)
class TrainSection:
    algorithms: tuple = ("dsgd", "drdsgd")
    T: int = 300
    lr: str = "auto"
    batch: str = "auto"
    schedule: str = "sqrt"
    L_hat: float = 1.0
    eval_every: int = 10
    eval_mode: str = "average"


@dataclass(frozen=True)
class SweepConfig:
    mu: tuple = (6.0,)
    p: tuple = ()  # empty: topology.p
    topology: tuple = ()  # empty: topology.kind
    seeds: tuple = (0,)


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "runs"


@dataclass(frozen=True)
class RunConfig:
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    partition: PartitionConfig = field(default_factory=PartitionConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainSection = field(default_factory=TrainSection)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def to_text(self) -> str:
        lines = []
        for sec in fields(self):
            obj = getattr(self, sec.name)
            for f in fields(obj):
                lines.append(f"{sec.name}.{f.name} = {_fmt(getattr(obj, f.name))}")
        return "\n".join(lines) + "\n"


_CLASSES = {
    "topology": TopologyConfig, "dataset": DatasetConfig, "partition": PartitionConfig,
    "model": ModelConfig, "train": TrainSection, "sweep": SweepConfig, "output": OutputConfig,
}
_INT_LISTS = {("model", "hidden"), ("sweep", "seeds")}
_FLOAT_LISTS = {("sweep", "mu"), ("sweep", "p"), ("dataset", "scales")}
_STR_LISTS = {("train", "algorithms"), ("sweep", "topology")}


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, tuple):
        return ",".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _convert(section: str, key: str, raw: str):
    key_id = (section, key)
    try:
        if key_id in _INT_LISTS:
            return tuple(int(x) for x in raw.split(",") if x.strip())
        if key_id in _FLOAT_LISTS:
            return tuple(float(x) for x in raw.split(",") if x.strip())
        if key_id in _STR_LISTS:
            return tuple(x.strip() for x in raw.split(",") if x.strip())
        if key_id == ("model", "clip"):
            return raw.lower()
        if raw.lower() == "none":
            return None
        ftype = {f.name: f.type for f in fields(_CLASSES[section])}[key]
        if ftype.startswith("int"):
            return int(raw)
        if ftype.startswith("float"):
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"{section}.{key}: cannot parse {raw!r} ({exc})") from None


def parse_config(text: str, base_dir: str | Path | None = None) -> RunConfig:
    values: dict[str, dict] = {s: {} for s in _CLASSES}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'section.key = value'")
        lhs, rhs = (s.strip() for s in line.split("=", 1))
        if lhs.count(".") != 1:
            raise ConfigError(f"line {lineno}: key {lhs!r} must look like section.key")
        section, key = lhs.split(".")
        if section not in _CLASSES:
            raise ConfigError(f"line {lineno}: unknown section {section!r}")
        if key not in {f.name for f in fields(_CLASSES[section])}:
            raise ConfigError(f"line {lineno}: unknown key {lhs!r}")
        values[section][key] = _convert(section, key, rhs)
    cfg = RunConfig(**{s: _CLASSES[s](**values[s]) for s in _CLASSES})
    if base_dir is not None:
        cfg = _resolve_paths(cfg, Path(base_dir))
    validate(cfg)
    return cfg


def _resolve_paths(cfg: RunConfig, base: Path) -> RunConfig:
    ds = cfg.dataset
    upd = {}
    for k in ("path", "test_path"):
        v = getattr(ds, k)
        if v is not None and not Path(v).is_absolute():
            upd[k] = str((base / v).resolve())
    return replace(cfg, dataset=replace(ds, **upd)) if upd else cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, base_dir=path.parent)


def validate(cfg: RunConfig) -> None:
    t, d, tr, sw = cfg.topology, cfg.dataset, cfg.train, cfg.sweep
    kinds = sw.topology or (t.kind,)
    for kind in kinds:
        if kind not in ("erdos_renyi", "ring", "grid", "geometric", "complete"):
            raise ConfigError(f"unknown topology kind {kind!r}")
        if kind == "grid":
            if t.rows is None or t.cols is None:
                raise ConfigError("grid topology needs topology.rows and topology.cols")
            if t.rows * t.cols != t.K:
                raise ConfigError(f"grid {t.rows}x{t.cols} does not have K={t.K} nodes")
    if t.K < 1:
        raise ConfigError("topology.K must be >= 1")
    for p in sw.p or (t.p,):
        if not 0 < p <= 1:
            raise ConfigError(f"connectivity ratio {p} outside (0, 1]")
    if d.kind == "file":
        if d.path is None:
            raise ConfigError("dataset.kind = file needs dataset.path")
        for pth in (d.path, d.test_path):
            if pth is not None and not Path(pth).is_file():
                raise ConfigError(f"dataset file {pth} does not exist")
        if d.test_path is None and not 0 < d.test_fraction < 1:
            raise ConfigError("dataset.test_fraction must lie in (0, 1)")
    elif d.kind == "gaussian_mixture":
        if d.classes < 2 or d.per_class < 1 or d.test_per_class < 1 or d.separation <= 0:
            raise ConfigError("gaussian_mixture needs classes >= 2, per_class >= 1, separation > 0")
        if d.scales and (len(d.scales) != d.classes or min(d.scales) <= 0):
            raise ConfigError("dataset.scales needs one positive value per class")
        if d.dim < d.classes - 1:
            raise ConfigError(f"dataset.dim={d.dim} too small for {d.classes} classes")
    else:
        raise ConfigError(f"unknown dataset kind {d.kind!r}")
    if cfg.partition.shards_per_device < 1:
        raise ConfigError("partition.shards_per_device must be >= 1")
    if cfg.model.kind not in ("softmax", "mlp"):
        raise ConfigError(f"unknown model kind {cfg.model.kind!r}")
    if cfg.model.clip not in ("none", "auto"):
        try:
            if float(cfg.model.clip) <= 0:
                raise ValueError
        except ValueError:
            raise ConfigError(f"model.clip must be none, auto or a positive number, got {cfg.model.clip!r}") from None
    if not tr.algorithms or not set(tr.algorithms) <= {"dsgd", "drdsgd"}:
        raise ConfigError("train.algorithms must list dsgd and/or drdsgd")
    if tr.T < 1 or tr.eval_every < 1:
        raise ConfigError("train.T and train.eval_every must be >= 1")
    if tr.schedule not in ("sqrt", "lipschitz"):
        raise ConfigError(f"unknown schedule {tr.schedule!r}")
    if tr.eval_mode not in ("average", "local"):
        raise ConfigError(f"unknown eval_mode {tr.eval_mode!r}")
    for name, raw, conv in (("lr", tr.lr, float), ("batch", tr.batch, int)):
        if raw != "auto":
            try:
                if conv(raw) <= 0:
                    raise ValueError
            except ValueError:
                raise ConfigError(f"train.{name} must be auto or positive, got {raw!r}") from None
    if not sw.mu or not sw.seeds:
        raise ConfigError("sweep.mu and sweep.seeds must be non-empty")
    if any(m <= 0 for m in sw.mu):
        raise ConfigError("sweep.mu values must be positive")
