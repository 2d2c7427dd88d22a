import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from fastslow.cli import main

ROOT = Path(__file__).resolve().parents[1]
CONFIG = ROOT / "configs" / "ou-sin.ini"

SMALL = """
[system]
name = {name}

[grid]
T = 1.0
n_steps = 50
x0 = 1.0
y0 = 0.0

[noise]
H = 0.6
alpha = 0.45
master_seed = 3

[experiment]
eps = {eps}
n_paths = {paths}
chunk = 10
"""


def write_cfg(tmp_path, name="ou-sin", eps="0.1, 0.05", paths=20, extra=""):
    p = tmp_path / "run.ini"
    p.write_text(SMALL.format(name=name, eps=eps, paths=paths) + extra)
    return p


class TestUsage:
    def test_no_subcommand(self, capsys):
        assert main([]) == 64
        assert "usage" in capsys.readouterr().err

    def test_unknown_subcommand(self):
        assert main(["bogus"]) == 64

    def test_unknown_flag(self):
        assert main(["fbm", "--hurst", "0.7", "--wat"]) == 64

    def test_help_is_usage(self, capsys):
        with pytest.raises(SystemExit) as ei:
            main(["--help"])
        assert ei.value.code == 0

    def test_module_entry_point(self):
        r = subprocess.run([sys.executable, "-m", "fastslow", "nope"], capture_output=True, text=True)
        assert r.returncode == 64


class TestConfigErrors:
    def test_malformed_key_names_key(self, tmp_path, capsys):
        p = write_cfg(tmp_path)
        p.write_text(p.read_text().replace("alpha = 0.45", "alpha = 0.45\nhurts = 0.7"))
        assert main(["converge", "--config", str(p), "--out", str(tmp_path / "r.csv")]) == 64
        assert "hurts" in capsys.readouterr().err

    def test_unknown_section(self, tmp_path, capsys):
        p = write_cfg(tmp_path, extra="\n[extras]\nfoo = 1\n")
        assert main(["converge", "--config", str(p)]) == 64
        assert "extras" in capsys.readouterr().err

    def test_bad_value(self, tmp_path, capsys):
        p = write_cfg(tmp_path)
        p.write_text(p.read_text().replace("n_steps = 50", "n_steps = fifty"))
        assert main(["converge", "--config", str(p)]) == 64
        assert "n_steps" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["converge", "--config", str(tmp_path / "absent.ini")]) == 64

    def test_unknown_system(self, tmp_path, capsys):
        assert main(["converge", "--config", str(write_cfg(tmp_path, name="nope"))]) == 64
        assert "system.name" in capsys.readouterr().err

    def test_custom_needs_constants(self, tmp_path, capsys):
        p = write_cfg(tmp_path, name="custom")
        p.write_text(p.read_text().replace("name = custom", "name = custom\nplugin = fastslow.systems:ou_sin"))
        assert main(["converge", "--config", str(p)]) == 64
        assert "beta_holder" in capsys.readouterr().err


class TestCommands:
    def test_converge_writes_report(self, tmp_path):
        out = tmp_path / "report.csv"
        rc = main(["converge", "--config", str(write_cfg(tmp_path)), "--out", str(out)])
        assert rc in (0, 2)
        rows = list(csv.DictReader(out.open()))
        assert [float(r["epsilon"]) for r in rows] == [0.1, 0.05]
        man = json.loads((tmp_path / "report.csv.manifest.json").read_text())
        assert man["config"]["master_seed"] == 3 and man["command"] == "converge"

    def test_converge_y_free_zero(self, tmp_path, capsys):
        out = tmp_path / "r.jsonl"
        rc = main(["converge", "--config", str(write_cfg(tmp_path, name="y-free")), "--out", str(out),
                   "--format", "jsonl"])
        recs = [json.loads(line) for line in out.read_text().splitlines()]
        assert all(r["mse_sup"] == 0.0 for r in recs)
        # zero error cannot be strictly decreasing, so the verdict is "failed checks"
        assert rc == 2

    def test_converge_sampled_bbar(self, tmp_path):
        p = write_cfg(tmp_path, eps="0.1", paths=10)
        p.write_text(p.read_text() + "bbar_mode = sampled\n")
        assert main(["converge", "--config", str(p), "--out", str(tmp_path / "r.csv")]) in (0, 2)

    def test_execution_error(self, tmp_path, capsys):
        assert main(["integrate", "--f", str(tmp_path / "nope.csv"), "--g", str(tmp_path / "nope.csv")]) == 1
        assert "error" in capsys.readouterr().err

    def test_fbm_and_integrate(self, tmp_path, capsys):
        g = tmp_path / "g.csv"
        assert main(["fbm", "--hurst", "0.75", "--steps", "256", "--seed", "4", "--out", str(g)]) == 0
        data = np.loadtxt(g, delimiter=",", skiprows=1)
        assert data.shape == (257, 2) and data[0, 1] == 0.0
        man = json.loads((tmp_path / "g.csv.manifest.json").read_text())
        assert man["generator"] == "cholesky" and man["H"] == 0.75
        f = tmp_path / "f.csv"
        np.savetxt(f, np.column_stack([data[:, 0], data[:, 0]]), delimiter=",", header="t,x1", comments="")
        capsys.readouterr()
        assert main(["integrate", "--f", str(f), "--g", str(g), "--alpha", "0.3"]) == 0
        lines = [json.loads(s) for s in capsys.readouterr().out.splitlines()]
        assert lines[1]["abs_diff"] <= 1e-2 * (1 + abs(lines[1]["young"]))
        assert lines[2]["young_bound"]["holds"]

    def test_fbm_ensemble_columns(self, tmp_path):
        out = tmp_path / "e.csv"
        assert main(["fbm", "--H", "0.7", "--n", "16", "--paths", "2", "--dim", "2", "--out", str(out)]) == 0
        assert out.read_text().splitlines()[0] == "t,p0_x1,p0_x2,p1_x1,p1_x2"

    def test_simulate(self, tmp_path):
        out = tmp_path / "sim"
        assert main(["simulate", "--config", str(write_cfg(tmp_path)), "--out", str(out), "--paths", "2"]) == 0
        for name in ("X", "Y", "Xhat", "Yhat", "Xbar"):
            assert (out / f"{name}.csv").exists()
        assert "delta_used" in json.loads((out / "manifest.json").read_text())

    def test_frozen_then_average(self, tmp_path, capsys):
        m = tmp_path / "mu.csv"
        assert main(["frozen", "--x", "1.0", "--horizon", "200", "--chains", "8", "--thin", "100",
                     "--seed", "2", "--out", str(m)]) == 0
        capsys.readouterr()
        assert main(["average", "--measure", str(m)]) == 0
        rec = json.loads(capsys.readouterr().out)
        assert abs(rec["bbar1"][0] - np.exp(-0.5) * np.sin(1.0)) <= 3 * rec["stderr"][0]
        assert main(["average", "--measure", str(m), "--x", "2.0"]) == 1

    def test_lemmas_trivial(self, tmp_path):
        p = write_cfg(tmp_path, name="trivial", eps="0.1, 0.05", paths=10)
        out = tmp_path / "lemmas.jsonl"
        assert main(["lemmas", "--config", str(p), "--out", str(out)]) == 0
        names = [json.loads(s)["name"] for s in out.read_text().splitlines()]
        assert {"yhat", "x-xhat", "ptau", "decorrelation"} <= set(names)

    def test_selftest_exit_zero(self, tmp_path, capsys):
        out = tmp_path / "st"
        assert main(["selftest", "--out", str(out)]) == 0
        assert "selftest passed" in capsys.readouterr().out
        assert len((out / "selftest.jsonl").read_text().splitlines()) >= 18

    def test_shipped_config_parses(self):
        from fastslow.config import load_config
        rc = load_config(CONFIG)
        assert rc.system == "ou-sin" and rc.experiment["eps"] == [0.1, 0.05, 0.02, 0.01]
