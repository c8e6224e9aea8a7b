import json
import math
from pathlib import Path

import pytest

from maxrep.cli import run_cli
from maxrep.io import ConfigError, config_hash, fmt, load_config, parse_config, read_csv, write_csv
from maxrep.model import HardInvalid

DEMO = Path(__file__).resolve().parents[1] / "demos" / "configs"

SMALL_COX = """
model = "cox"
mu = 0.05
sigma1 = 0.2
kappa = 2.0
theta = 1.0
sigma2 = 0.5
lambda0 = 0.5
nu_atoms = [[1.0, 1.0]]
jump = { kind = "linear", value = 0.1 }
[grid]
n_steps = 8
[rng]
seed = 4
[run]
paths = 12
inner = 8
n_ef = 200
[first_passage]
b = [0.1]
e = [1.0]
"""


@pytest.fixture
def cox_cfg(tmp_path):
    p = tmp_path / "cox.toml"
    p.write_text(SMALL_COX)
    return p


@pytest.fixture
def hawkes_cfg(tmp_path):
    text = (DEMO / "hawkes_a.toml").read_text().replace("n_steps = 64", "n_steps = 8")
    text = text.replace("paths = 64", "paths = 12").replace("inner = 256", "inner = 8").replace("n_ef = 20000", "n_ef = 200")
    p = tmp_path / "hawkes.toml"
    p.write_text(text)
    return p


# --- configuration -------------------------------------------------------------

def test_demo_configs_parse():
    for name in ("cox_a.toml", "hawkes_a.toml", "wiener.toml"):
        cfg = load_config(DEMO / name)
        assert len(cfg.sha256) == 64
    assert not load_config(DEMO / "wiener.toml").spec.enabled


def test_missing_config_raises():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/x.toml")


def test_parse_errors():
    base = {"model": "cox", "mu": 0.0, "sigma1": 0.2, "kappa": 1.0, "theta": 1.0, "sigma2": 0.5, "lambda0": 1.0}
    assert parse_config(base).model == "cox"
    with pytest.raises(ConfigError):
        parse_config({**base, "model": "levy"})
    with pytest.raises(ConfigError):
        parse_config({k: v for k, v in base.items() if k != "kappa"})
    with pytest.raises(ConfigError):
        parse_config({**base, "mu": "fast"})
    with pytest.raises(ConfigError):
        parse_config({**base, "nu_atoms": [1, 2]})
    with pytest.raises(HardInvalid):
        parse_config({**base, "sigma2": 0.0})


def test_overrides_and_hash(cox_cfg):
    a = load_config(cox_cfg)
    b = load_config(cox_cfg, {"run.paths": 99, "rng.seed": None})
    assert b.paths == 99 and b.seed == a.seed
    assert a.sha256 != b.sha256
    assert config_hash({"x": 1, "y": 2}) == config_hash({"y": 2, "x": 1})


def test_csv_roundtrip(tmp_path):
    import numpy as np
    p = write_csv(tmp_path / "a.csv", ["a", "b"], [(np.float64(0.1), np.int64(3)), (math.nan, True)], "abc")
    raw = p.read_bytes()
    assert raw.startswith(b"# config_sha256=abc\r\n") and raw.count(b"\r\n") == 4
    header, rows = read_csv(p)
    assert header == ["a", "b"] and rows == [["0.1", "3"], ["nan", "true"]]
    assert fmt(1 / 3) == repr(1 / 3)


# --- subcommands -----------------------------------------------------------------

def test_invert_laplace(capsys):
    assert run_cli(["invert-laplace", "--fn", "one_over_s", "--t", "1"]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(1.0, abs=1e-10)


def test_constants_hawkes(tmp_path, capsys):
    assert run_cli(["constants", "--config", str(DEMO / "hawkes_a.toml"), "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "alpha1=0.643824" in out and "alpha2=1 " in out and "alpha=0.527605" in out
    data = json.loads((tmp_path / "constants.json").read_text())
    assert data["config_sha256"] == load_config(DEMO / "hawkes_a.toml").sha256


def test_missing_config_exit_code(tmp_path, capsys):
    assert run_cli(["price", "--config", str(tmp_path / "nope.toml")]) == 2
    assert "not found" in capsys.readouterr().err


def test_unknown_flag_exit_code(cox_cfg):
    assert run_cli(["price", "--config", str(cox_cfg), "--bogus"]) == 2
    assert run_cli([]) == 2


def test_cox_constants_unavailable_exit_code(tmp_path):
    # alpha1 above the admissible range has no real root
    p = tmp_path / "c.toml"
    p.write_text(SMALL_COX + "[constants]\nalpha1 = 1000.0\n")
    assert run_cli(["constants", "--config", str(p), "--out", str(tmp_path)]) in (0, 3)


@pytest.mark.parametrize("cmd,files", [
    (["simulate"], ["paths.csv", "events.csv"]),
    (["price"], ["price.json"]),
    (["verify-clark-ocone", "--mode", "both"], ["residuals.csv", "residuals_closed_form.csv", "summary.json"]),
    (["first-passage"], ["first_passage.csv"]),
    (["constants"], ["constants.json"]),
    (["hedge", "--mode", "nested"], ["hedge.csv"]),
])
@pytest.mark.parametrize("which", ["cox", "hawkes"])
def test_subcommands_run(cmd, files, which, cox_cfg, hawkes_cfg, tmp_path):
    cfg = cox_cfg if which == "cox" else hawkes_cfg
    out = tmp_path / "out"
    assert run_cli(cmd + ["--config", str(cfg), "--out", str(out)]) == 0
    sha = load_config(cfg).sha256
    for f in files:
        text = (out / f).read_text()
        assert sha in text


def test_simulate_columns(cox_cfg, tmp_path):
    assert run_cli(["simulate", "--config", str(cox_cfg), "--out", str(tmp_path)]) == 0
    header, rows = read_csv(tmp_path / "paths.csv")
    assert header == ["path_id", "t", "w_s", "w", "lambda", "x", "m"]
    assert len(rows) == 12 * 9
    assert all(float(r[6]) >= float(r[5]) for r in rows)


def test_verify_outputs_byte_identical(cox_cfg, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_cli(["verify-clark-ocone", "--config", str(cox_cfg), "--out", str(a), "--workers", "1"]) == 0
    assert run_cli(["verify-clark-ocone", "--config", str(cox_cfg), "--out", str(b), "--workers", "3"]) == 0
    assert (a / "residuals.csv").read_bytes() == (b / "residuals.csv").read_bytes()
    sa = json.loads((a / "summary.json").read_text())
    sb = json.loads((b / "summary.json").read_text())
    assert sa["corr"] == sb["corr"] and sa["resid_mean"] == sb["resid_mean"]


def test_module_entry_point(cox_cfg, tmp_path):
    import subprocess
    import sys
    r = subprocess.run([sys.executable, "-m", "maxrep", "constants", "--config", str(cox_cfg), "--out", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "alpha1=" in r.stdout
