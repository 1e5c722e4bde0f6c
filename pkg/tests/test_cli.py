import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from cgdft import Grid, ModelSpec, Potential, project
from cgdft.cli import main
from cgdft.config import load_config
from cgdft.io import atomic_write_text, density_to_csv, read_table
from cgdft.sampling import forward_density, random_smooth_potential


def write_config(path, text):
    path.write_text(text)
    return str(path)


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_invert_forward_density(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.toml", '[density]\nkind = "forward"\npotential_level = 3\namplitude = 5.0\n[experiment.invert]\nlevel = 4\n')
    code, out, _ = run(["invert", "--config", cfg, "--out", str(tmp_path / "o"), "--seed", "3"], capsys)
    assert code == 0
    assert "PASS  potential recovery" in out
    doc = json.loads((tmp_path / "o" / "invert_inversion.json").read_text())
    assert doc["converged"] and doc["residual"] <= 1e-6 and len(doc["potential"]) == 16
    assert doc["config"] == {"L": 1.0, "M": 128, "N": 1, "strength": 1.0, "softening": 0.5}
    for name in ("invert_density.csv", "invert_potential.csv", "invert_lambda_density.csv", "invert_residual_trace.csv", "invert_checks.csv"):
        assert (tmp_path / "o" / name).exists()
    meta = json.loads((tmp_path / "o" / "invert.meta.json").read_text())
    assert meta["seed"] == 3 and meta["passed"] and len(meta["config_hash"]) == 64


def test_invert_is_reproducible(tmp_path, capsys):
    for name in ("a", "b"):
        assert run(["invert", "--out", str(tmp_path / name), "--seed", "11"], capsys)[0] == 0
    for csv in sorted((tmp_path / "a").glob("*.csv")):
        assert csv.read_bytes() == (tmp_path / "b" / csv.name).read_bytes()


def test_density_from_csv(tmp_path, capsys):
    model = ModelSpec(Grid(1.0, 128), 1)
    v0 = random_smooth_potential(model.hierarchy, 2, np.random.default_rng(0))
    rho = project(forward_density(model, v0), 4, model.hierarchy)
    atomic_write_text(tmp_path / "rho.csv", density_to_csv(rho))
    cfg = write_config(tmp_path / "c.toml", f'[density]\nkind = "csv"\npath = "{tmp_path / "rho.csv"}"\n[experiment.invert]\nlevel = 3\n')
    code, _, _ = run(["invert", "--config", cfg, "--out", str(tmp_path / "o")], capsys)
    assert code == 0
    potential = read_table(tmp_path / "o" / "invert_potential.csv")
    values = np.array([float(r["potential"]) for r in potential])
    diff = values - v0.refine(3).values
    assert np.ptp(diff) <= 1e-5 * v0.sup_norm()


def test_csv_density_at_a_coarser_level_is_rejected(tmp_path, capsys):
    model = ModelSpec(Grid(1.0, 128), 1)
    rho = project(forward_density(model, Potential.zeros(model.hierarchy, 0)), 2, model.hierarchy)
    atomic_write_text(tmp_path / "rho.csv", density_to_csv(rho))
    cfg = write_config(tmp_path / "c.toml", f'[density]\nkind = "csv"\npath = "{tmp_path / "rho.csv"}"\n')
    code, _, err = run(["invert", "--config", cfg, "--out", str(tmp_path / "o")], capsys)
    assert code == 2 and "level 2" in err
    assert not (tmp_path / "o").exists()


@pytest.mark.parametrize(
    "text",
    [
        "[model]\nstrength = -1.0\n",
        "[model]\nunknown = 1\n",
        "[model]\nM = 96\n",
        '[density]\nkind = "csv"\n',
        "[experiment.invert]\nlevel = 9\n",
        "not toml at all [",
    ],
)
def test_config_errors_exit_2_without_artifacts(tmp_path, capsys, text):
    cfg = write_config(tmp_path / "bad.toml", text)
    code, _, err = run(["invert", "--config", cfg, "--out", str(tmp_path / "o")], capsys)
    assert code == 2 and "config error" in err
    assert not (tmp_path / "o").exists()


def test_bad_tolerance_override(tmp_path, capsys):
    code, _, err = run(["invert", "--out", str(tmp_path / "o"), "--tol", "nonsense=1"], capsys)
    assert code == 2 and not (tmp_path / "o").exists()


def test_sweep_and_report(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.toml", '[density]\nkind = "box"\n')
    code, out, _ = run(["sweep", "--config", cfg, "--out", str(tmp_path / "o")], capsys)
    assert code == 0 and "PASS  monotone F^n" in out
    rows = read_table(tmp_path / "o" / "sweep.csv")
    assert [r["n"] for r in rows] == ["1", "2", "3", "4", "5", "7"]
    assert all(r["monotone"] == "OK" for r in rows)
    code, out, _ = run(["report", str(tmp_path / "o")], capsys)
    assert code == 0
    assert "monotone" in out and "overall: PASS" in out


def test_perturbed_sweep(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.toml", '[density]\nkind = "box"\n[experiment.sweep]\nperturbed = true\n')
    code, _, _ = run(["sweep", "--config", cfg, "--out", str(tmp_path / "o")], capsys)
    rows = read_table(tmp_path / "o" / "sweep.csv")
    assert code == 0 and len(rows) == 6


def test_failed_check_exits_1(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.toml", '[density]\nkind = "harmonic"\n')
    code, out, err = run(["sweep", "--config", cfg, "--out", str(tmp_path / "o"), "--tol", "grid_gap=1e-12"], capsys)
    assert code == 1
    assert "FAIL  grid gap" in out and "grid gap" in err
    meta = json.loads((tmp_path / "o" / "sweep.meta.json").read_text())
    assert meta["passed"] is False and meta["thresholds"]["grid_gap"] == 1e-12


@pytest.mark.parametrize("kind, verdict", [("node", "blowup"), ("box", "representable")])
def test_probe_verdicts(tmp_path, capsys, kind, verdict):
    cfg = write_config(tmp_path / "c.toml", f'[density]\nkind = "{kind}"\n')
    code, out, _ = run(["probe", "--config", cfg, "--out", str(tmp_path / "o")], capsys)
    assert code == 0 and f"verdict probe: {verdict}" in out
    doc = json.loads((tmp_path / "o" / "probe_verdict.json").read_text())
    assert doc["kind"] == verdict


def test_quasi_and_modulus(tmp_path, capsys):
    cfg = write_config(
        tmp_path / "c.toml",
        '[density]\nkind = "forward"\npotential_level = 3\namplitude = 2.0\n'
        "[experiment.quasi]\nsamples = 4\nradii = 3\n"
        "[experiment.modulus]\nsamples = 4\n",
    )
    assert run(["quasi", "--config", cfg, "--out", str(tmp_path / "o")], capsys)[0] == 0
    assert run(["modulus", "--config", cfg, "--out", str(tmp_path / "o")], capsys)[0] == 0
    assert len(read_table(tmp_path / "o" / "quasi.csv")) == 3
    assert len(read_table(tmp_path / "o" / "modulus.csv")) == 5
    code, out, _ = run(["report", str(tmp_path / "o")], capsys)
    assert code == 0 and "== modulus" in out and "== quasi" in out


def test_blowup(tmp_path, capsys):
    code, out, _ = run(["blowup", "--out", str(tmp_path / "o")], capsys)
    assert code == 0 and "verdict node_probe: blowup" in out
    assert len(read_table(tmp_path / "o" / "blowup_oscillation.csv")) == 5


def test_ks_small(tmp_path, capsys):
    cfg = write_config(
        tmp_path / "c.toml",
        '[model]\nM = 32\nN = 2\n[density]\nkind = "forward"\npotential_level = 2\namplitude = 2.0\n[experiment.ks]\nlevel = 2\ndirections = 2\n',
    )
    code, out, _ = run(["ks", "--config", cfg, "--out", str(tmp_path / "o")], capsys)
    assert code == 0 and "PASS  Kohn-Sham identities" in out
    rows = read_table(tmp_path / "o" / "ks_potentials.csv")
    assert len(rows) == 4 and set(rows[0]) == {"x_left", "x_right", "v", "v_s", "phi", "v_xc"}
    assert len(read_table(tmp_path / "o" / "ks_xc_directions.csv")) == 2


def test_report_errors(tmp_path, capsys):
    (tmp_path / "empty").mkdir()
    assert run(["report", str(tmp_path / "empty")], capsys)[0] == 2
    assert run(["report", str(tmp_path / "missing")], capsys)[0] == 2
    (tmp_path / "bad").mkdir()
    (tmp_path / "bad" / "x.meta.json").write_text("{not json")
    code, _, err = run(["report", str(tmp_path / "bad")], capsys)
    assert code == 2 and "corrupt" in err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "cgdft.cli", "--help"], capture_output=True, text=True, check=True)
    for name in ("invert", "sweep", "probe", "quasi", "modulus", "blowup", "ks", "verify-all", "report"):
        assert name in proc.stdout


def test_missing_out_is_a_usage_error(capsys):
    with pytest.raises(SystemExit) as info:
        main(["invert"])
    assert info.value.code == 2


@pytest.mark.parametrize("name", ["example.toml", "ks_two_particles.toml"])
def test_shipped_configs_parse(name):
    path = Path(__file__).resolve().parents[1] / "configs" / name
    assert load_config(path).model.M == 128
