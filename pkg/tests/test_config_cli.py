import csv
import math
from pathlib import Path

import numpy as np
import pytest

from drgossip import cli, datagen, experiment
from drgossip.config import ConfigError, RunConfig, load_config, parse_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

MINIMAL = """
topology.kind = ring
topology.K = 2
dataset.classes = 2
dataset.per_class = 10
dataset.test_per_class = 10
dataset.dim = 2
partition.shards_per_device = 1
train.algorithms = dsgd
train.T = 1
train.eval_every = 1
sweep.mu = 1
"""

TINY_SWEEP = """
topology.K = 4
topology.p = 0.6
dataset.classes = 4
dataset.per_class = 20
dataset.test_per_class = 10
dataset.dim = 3
partition.shards_per_device = 1
train.T = 12
train.eval_every = 4
sweep.mu = 9, 1, 3
sweep.seeds = 0, 1, 2
"""


def write(tmp_path, text, name="cfg.txt"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_defaults_roundtrip_through_text():
    cfg = RunConfig()
    assert parse_config(cfg.to_text()) == cfg


def test_comments_blank_lines_and_lists():
    cfg = parse_config("# c\n\nsweep.mu = 1, 3,9  # trailing\nmodel.hidden=8,4\nmodel.clip = AUTO\n")
    assert cfg.sweep.mu == (1.0, 3.0, 9.0)
    assert cfg.model.hidden == (8, 4)
    assert cfg.model.clip == "auto"


@pytest.mark.parametrize("text,msg", [
    ("topology.K 5", "expected"),
    ("K = 5", "section.key"),
    ("net.K = 5", "unknown section"),
    ("topology.size = 5", "unknown key"),
    ("topology.K = five", "cannot parse"),
    ("topology.p = 0", "outside"),
    ("topology.kind = torus", "unknown topology"),
    ("topology.kind = grid\ntopology.K = 5\ntopology.rows = 2\ntopology.cols = 2", "does not have"),
    ("dataset.kind = file", "needs dataset.path"),
    ("dataset.kind = file\ndataset.path = nope.bin", "does not exist"),
    ("dataset.scales = 1, 2", "one positive value per class"),
    ("model.clip = -1", "model.clip"),
    ("train.algorithms = adam", "train.algorithms"),
    ("train.lr = fast", "train.lr"),
    ("sweep.seeds = ", "non-empty"),
    ("sweep.mu = 0", "positive"),
])
def test_config_errors(text, msg, tmp_path):
    with pytest.raises(ConfigError, match=msg):
        parse_config(text, base_dir=tmp_path)


def test_relative_paths_resolve_against_config_dir(tmp_path):
    ds = datagen.gaussian_mixture(2, 5, 2, 1.0, 0)
    (tmp_path / "data").mkdir()
    datagen.write_dataset(ds, tmp_path / "data" / "d.bin")
    cfg = load_config(write(tmp_path, "dataset.kind = file\ndataset.path = data/d.bin\n"))
    assert Path(cfg.dataset.path) == (tmp_path / "data" / "d.bin").resolve()


def test_cells_order_and_mu_sweep():
    cfg = parse_config(TINY_SWEEP)
    cells = experiment.iter_cells(cfg)
    dsgd = [c for c in cells if c.algorithm == "dsgd"]
    assert [c.mu for c in dsgd[::3]] == [1.0, 3.0, 9.0]
    assert len(cells) == 2 * 3 * 3
    assert len({c.name for c in cells}) == len(cells)


def test_p_only_sweeps_erdos_renyi():
    cfg = parse_config("topology.K = 4\ntopology.rows = 2\ntopology.cols = 2\n"
                       "sweep.topology = erdos_renyi, ring, grid\nsweep.p = 0.3, 0.6\n")
    kinds = [c.topology for c in experiment.iter_cells(cfg)]
    assert kinds.count("erdos_renyi") == 2 * kinds.count("ring") == 2 * kinds.count("grid")


def test_minimal_run_two_rows(tmp_path):
    out = tmp_path / "out"
    assert cli.main(["run", str(write(tmp_path, MINIMAL)), "--out", str(out)]) == 0
    cell_dirs = [d for d in out.iterdir() if d.is_dir()]
    assert len(cell_dirs) == 1
    rows = experiment.read_metrics(cell_dirs[0] / "metrics.csv")
    assert [r["round"] for r in rows] == [0, 1]
    assert (cell_dirs[0] / "graph.txt").read_text() == "2\n0 1\n"


@pytest.fixture(scope="module")
def sweep_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("sweep")
    out = tmp / "out"
    assert cli.main(["run", str(write(tmp, TINY_SWEEP)), "--out", str(out)]) == 0
    return out


def test_sweep_summary_structure(sweep_run):
    rows = list(csv.DictReader((sweep_run / "summary.csv").open()))
    assert len(rows) == 6
    for alg in ("dsgd", "drdsgd"):
        mus = [float(r["mu"]) for r in rows if r["algorithm"] == alg]
        assert mus == [1.0, 3.0, 9.0]
    assert all(r["n_seeds"] == "3" for r in rows)
    assert "worst_acc_se" in rows[0]


def test_summary_recomputable_from_metrics(sweep_run):
    rows = list(csv.DictReader((sweep_run / "summary.csv").open()))
    for r in rows:
        mu = float(r["mu"])
        finals = []
        for s in range(3):
            name = experiment.Cell(r["algorithm"], "erdos_renyi", 0.6, mu, s).name
            finals.append(experiment.read_metrics(sweep_run / name / "metrics.csv")[-1])
        for m in experiment.METRICS:
            vals = np.array([f[m] for f in finals])
            assert abs(float(r[f"{m}_mean"]) - vals.mean()) <= 1e-12
            se = vals.std(ddof=1) / math.sqrt(3)
            assert abs(float(r[f"{m}_se"]) - se) <= 1e-12


def test_resolved_config_reproduces_cell(sweep_run, tmp_path):
    name = experiment.Cell("drdsgd", "erdos_renyi", 0.6, 3.0, 1).name
    saved = (sweep_run / name / "config.txt").read_text()
    cfg = parse_config(saved)
    assert cfg.train.lr != "auto" and cfg.train.batch != "auto"
    assert cli.main(["run", str(write(tmp_path, saved)), "--out", str(tmp_path / "again")]) == 0
    again = tmp_path / "again" / name
    assert (again / "metrics.csv").read_bytes() == (sweep_run / name / "metrics.csv").read_bytes()
    strip = lambda t: [ln for ln in t.splitlines() if not ln.startswith("output.dir")]  # noqa: E731
    assert strip((again / "config.txt").read_text()) == strip(saved)


def test_parallel_jobs_match_sequential(sweep_run, tmp_path):
    out = tmp_path / "par"
    assert cli.main(["run", str(write(tmp_path, TINY_SWEEP)), "--out", str(out), "--jobs", "2"]) == 0
    assert (out / "summary.csv").read_bytes() == (sweep_run / "summary.csv").read_bytes()


def test_eval_every_flag(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["run", str(write(tmp_path, TINY_SWEEP.replace("sweep.mu = 9, 1, 3", "sweep.mu = 1")
                                       .replace("sweep.seeds = 0, 1, 2", "sweep.seeds = 0"))),
                     "--out", str(out), "--eval-every", "5"]) == 0
    rows = experiment.read_metrics(next(out.glob("dsgd_*")) / "metrics.csv")
    assert [r["round"] for r in rows] == [0, 5, 10, 12]


def test_env_seed_override(tmp_path, monkeypatch):
    monkeypatch.setenv("DRGOSSIP_SEED", "7")
    out = tmp_path / "o"
    assert cli.main(["run", str(write(tmp_path, MINIMAL)), "--out", str(out)]) == 0
    assert [d.name for d in out.iterdir() if d.is_dir()] == ["dsgd_ring_p0.3_mu1_seed7"]
    monkeypatch.setenv("DRGOSSIP_SEED", "x")
    assert cli.main(["run", str(write(tmp_path, MINIMAL)), "--out", str(out)]) == 2


def test_exit_code_config_error(tmp_path, capsys):
    assert cli.main(["run", str(write(tmp_path, "topology.K = zero"))]) == 2
    assert "config error" in capsys.readouterr().err
    assert cli.main(["run", str(tmp_path / "missing.txt")]) == 2


def test_exit_code_runtime_error_names_cell(tmp_path, capsys):
    text = MINIMAL.replace("train.algorithms = dsgd", "train.algorithms = drdsgd") \
        .replace("sweep.mu = 1", "sweep.mu = 0.0001")
    assert cli.main(["run", str(write(tmp_path, text)), "--out", str(tmp_path / "o")]) == 3
    err = capsys.readouterr().err
    assert "drdsgd_ring_p0.3_mu0.0001_seed0" in err and "device" in err


def test_check_exit_codes(capsys):
    assert cli.main(["check"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") >= 4 and "FAIL" not in out
    assert cli.main(["check", "--inject-fault", "asymmetric-w"]) == 1
    out = capsys.readouterr().out
    assert "FAIL" in out and "mixing" in out


DUMP = """
topology.K = 4
dataset.classes = 4
dataset.per_class = 6
dataset.test_per_class = 2
dataset.dim = 3
partition.shards_per_device = 2
"""


def test_dump_partition(tmp_path):
    cfg_path = write(tmp_path, DUMP)
    assert cli.main(["dump-partition", str(cfg_path), "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["dump-partition", str(cfg_path), "--out", str(tmp_path / "b")]) == 0
    text = (tmp_path / "a" / "partition.csv").read_text()
    assert text == (tmp_path / "b" / "partition.csv").read_text()
    rows = list(csv.reader(text.splitlines()))[1:]
    assert len(rows) == 4
    cfg = experiment.cell_config(load_config(cfg_path), experiment.iter_cells(load_config(cfg_path))[0])
    train_ds, _ = experiment.load_data(cfg)
    part = datagen.partition_pathological(train_ds, 4, 2, cfg.partition.seed)
    for row, idx in zip(rows, part.assignments):
        counts = list(map(int, row[1:]))
        assert sum(counts) == idx.size
        assert sum(c > 0 for c in counts) <= 2


def test_dump_partition_config_error(tmp_path):
    assert cli.main(["dump-partition", str(write(tmp_path, "partition.shards_per_device = 0"))]) == 2


def test_protocol_config_row_counts(tmp_path):
    out = tmp_path / "p"
    assert cli.main(["run", str(CONFIGS / "protocol_k10.txt"), "--out", str(out)]) == 0
    for alg in ("dsgd", "drdsgd"):
        files = sorted(out.glob(f"{alg}_*/metrics.csv"))
        assert len(files) == 5
        assert all(len(experiment.read_metrics(f)) == 11 for f in files)
    rows = list(csv.DictReader((out / "summary.csv").open()))
    assert len(rows) == 2 and all(r["n_seeds"] == "5" for r in rows)


def test_shipped_configs_parse():
    for path in CONFIGS.glob("*.txt"):
        if path.name == "fmnist_files.txt":
            continue  # needs converted image files
        load_config(path)
