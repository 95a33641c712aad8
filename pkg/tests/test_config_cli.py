import csv
import glob
import json
from pathlib import Path

import numpy as np
import pytest

from graphmfg.cli import main, sweep_workers
from graphmfg.config import ConfigError, load_config
from graphmfg.models import load_params

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"

SMALL = """\
[graph]
kind = lattice
rows = 5
cols = 5
bounds = -2 2

[mu0]
kind = gaussian
mean = -1 -1
cov_scale = 0.5

[muT]
kind = gaussian
mean = 1 1
cov_scale = 0.5

[potentials]
lambda_K = 0.5
lambda_G = 20
terminal = KL

[dynamics]
T = 2
dt = 0.2
M = 10

[training]
model = mlp
epochs = {epochs}
lr = {lr}
optimizer = {optimizer}
seed = 0
window = 4
"""


def write_cfg(path, epochs=8, lr="1e-2", optimizer="adam", extra=""):
    path.write_text(SMALL.format(epochs=epochs, lr=lr, optimizer=optimizer) + extra)
    return path


@pytest.mark.parametrize("path", sorted(glob.glob(str(CONFIG_DIR / "*.cfg"))), ids=lambda p: Path(p).stem)
def test_shipped_configs_validate(path, capsys):
    assert main(["validate", path]) == 0
    assert "[dynamics]" in capsys.readouterr().out


def test_scenario_counts():
    for name, n, m in (("scenario_triangle_holes", 463, 1272), ("scenario_lattice_fisher", 489, 928),
                       ("scenario_random_bifurcation", 1000, 2775)):
        g = load_config(CONFIG_DIR / f"{name}.cfg").build().graph
        assert (g.n, g.m) == (n, m)


def test_horizon_mismatch(tmp_path, capsys):
    p = write_cfg(tmp_path / "a.cfg")
    p.write_text(p.read_text().replace("M = 10", "M = 11"))
    assert main(["validate", str(p)]) == 1
    assert "[dynamics]" in capsys.readouterr().err


@pytest.mark.parametrize("extra,needle", [
    ("\n[training2]\n", "training2"),
    ("\n[output]\ncolour = red\n", "colour"),
])
def test_unknown_names(tmp_path, extra, needle):
    p = write_cfg(tmp_path / "a.cfg", extra=extra)
    with pytest.raises(ConfigError, match=needle):
        load_config(p)


def test_bad_value_names_key(tmp_path):
    p = write_cfg(tmp_path / "a.cfg", lr="fast")
    with pytest.raises(ConfigError, match=r"\[training\] lr"):
        load_config(p)


def test_overrides_and_resolved_round_trip(tmp_path):
    p = write_cfg(tmp_path / "a.cfg")
    cfg = load_config(p, seed=9, optimizer="gd", quadrature="alg1")
    assert (cfg.train.seed, cfg.train.optimizer, cfg.train.quadrature) == (9, "gd", "alg1")
    q = tmp_path / "b.cfg"
    q.write_text(cfg.resolved())
    assert load_config(q).resolved() == cfg.resolved()


def test_dry_run(tmp_path, capsys):
    p = write_cfg(tmp_path / "a.cfg")
    out = tmp_path / "out"
    assert main(["run", str(p), "--dry-run", "--out-dir", str(out)]) == 0
    assert not out.exists()
    assert "25 nodes, 40 edges" in capsys.readouterr().out


def test_run_artifacts_and_determinism(tmp_path):
    p = write_cfg(tmp_path / "a.cfg")
    outs = [tmp_path / "r1", tmp_path / "r2"]
    for o in outs:
        assert main(["run", str(p), "--out-dir", str(o)]) == 0
    a, b = ((o / "metrics.json").read_text() for o in outs)
    assert a == b
    assert (outs[0] / "trajectory.csv").read_bytes() == (outs[1] / "trajectory.csv").read_bytes()
    m = json.loads(a)
    assert {"kinetic", "potentials", "terminal", "min_rho", "mass_drift"} <= set(m)
    rows = list(csv.reader(open(outs[0] / "trajectory.csv")))
    assert rows[0] == ["m", "t", "node_id", "rho", "S"] and len(rows) == 1 + 11 * 25
    dens = list(csv.reader(open(outs[0] / "mu0.csv")))
    assert dens[0] == ["node_id", "x", "y", "value"]
    kind, seed, params = load_params(outs[0] / "checkpoint_best.txt")
    assert (kind, seed) == ("mlp", 0) and sum(v.size for v in params.values()) == 337
    report = json.load(open(outs[0] / "train_report.json"))
    assert len(report["epochs"]) == 8
    assert m["trailing_kinetic"] == pytest.approx(np.mean([e["kinetic"] for e in report["epochs"][-4:]]))
    svgs = sorted(x.name for x in (outs[0] / "snapshots").iterdir())
    assert "rho_m0000.svg" in svgs and "S_m0010.svg" in svgs
    assert (outs[0] / "snapshots" / "rho_m0005.svg").read_text().startswith("<svg")


def test_aborted_run_exit_code(tmp_path, capsys):
    p = write_cfg(tmp_path / "a.cfg", epochs=20, lr="1e6", optimizer="gd")
    assert main(["run", str(p), "--out-dir", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "aborted at epoch" in err
    assert (tmp_path / "o" / "train_report.json").exists()


def test_sweep(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("GRAPHMFG_THREADS", "1")
    for k in range(2):
        write_cfg(tmp_path / f"s{k}.cfg", epochs=5 + k)
    out = tmp_path / "sweep"
    assert main(["sweep", str(tmp_path / "s*.cfg"), "--out-dir", str(out)]) == 0
    printed = capsys.readouterr().out
    rows = list(csv.DictReader(open(out / "summary.csv")))
    assert [r["config"] for r in rows] == ["s0", "s1"]
    for r in rows:
        metrics = json.load(open(out / r["config"] / "metrics.json"))
        for key in ("trailing_kinetic", "trailing_terminal_node_avg", "best_kinetic_node_avg"):
            assert float(r[key]) == metrics[key]
        assert f"{metrics['trailing_kinetic']:.6g}" in printed
    assert (out / "summary.txt").read_text() == printed


def test_sweep_empty_glob(tmp_path, capsys):
    assert main(["sweep", str(tmp_path / "none*.cfg"), "--out-dir", str(tmp_path)]) == 1
    assert "no config" in capsys.readouterr().err


def test_sweep_workers(monkeypatch):
    monkeypatch.setenv("GRAPHMFG_THREADS", "3")
    assert sweep_workers(10) == 3 and sweep_workers(2) == 2
    monkeypatch.setenv("GRAPHMFG_THREADS", "lots")
    assert sweep_workers(1) == 1
