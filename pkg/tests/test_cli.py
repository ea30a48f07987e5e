import subprocess
import sys

import pytest

from competing_growth.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_sigma_gnedenko(capsys):
    code, out, _ = run(capsys, "sigma", "--model", "gnedenko", "--lambda", "1", "--t", "120")
    assert code == 0
    assert float(out.splitlines()[0].split("=")[1]) == pytest.approx(10.0, rel=1e-12)


def test_sigma_weibull_leading_term(capsys):
    code, out, _ = run(capsys, "sigma", "--model", "weibull_alpha", "--alpha", "2", "--lambda", "2",
                       "--t", "22026.465794806718")
    assert code == 0
    assert float(out.splitlines()[0].split("=")[1]) == pytest.approx(10.0, rel=1e-12)


def test_malthus_bb_uniform(capsys):
    code, out, _ = run(capsys, "malthus", "--equation", "bb", "--model", "weibull_alpha", "--alpha", "1")
    assert code == 0
    assert float(out.splitlines()[0].split("=")[1]) == pytest.approx(1.2550009749, abs=1e-9)


def test_malthus_rbp_table_and_crp(capsys):
    code, out, _ = run(capsys, "malthus", "--equation", "rbp", "--model", "tan", "--p-ij", "1,1,1.0")
    assert code == 0 and out.startswith("lambda = ")
    code, out, _ = run(capsys, "malthus", "--equation", "crp", "--model", "gnedenko")
    assert code == 0 and out.splitlines()[0] == "lambda = 1.0"


def test_malthus_without_root_exits_one(capsys):
    code, _, err = run(capsys, "malthus", "--equation", "selection_mutation", "--model", "gnedenko", "--beta", "0.5")
    assert code == 1 and "no Malthusian parameter" in err


def test_kappa(capsys):
    code, out, _ = run(capsys, "kappa", "--model", "power_rho", "--rho", "0.5")
    assert code == 0
    assert float(out.splitlines()[0].split("=")[1]) == pytest.approx(3.0, abs=1e-3)
    code, _, err = run(capsys, "kappa", "--model", "weibull_alpha")
    assert code == 2 and "Weibull" in err


def test_catalog_lists_every_model(capsys):
    code, out, _ = run(capsys, "catalog")
    assert code == 0
    for name in ("power_rho", "exp_inv", "gnedenko", "exp_sqrt", "tan", "loglog_negative", "weibull_alpha"):
        assert name in out
    assert "fails" in next(line for line in out.splitlines() if line.startswith("loglog_negative"))


@pytest.mark.parametrize("argv", [
    [],
    ["frobnicate"],
    ["sigma", "--model", "gnedenko"],
    ["sigma", "--model", "nope", "--lambda", "1", "--t", "10"],
    ["sigma", "--model", "gnedenko", "--lambda", "-1", "--t", "10"],
    ["malthus", "--equation", "rbp", "--model", "gnedenko", "--p-ij", "1,1"],
    ["malthus", "--equation", "selection_mutation", "--model", "gnedenko"],
    ["validate", "--scenario", "99"],
    ["simulate", "--config", "/nonexistent/config.toml"],
])
def test_usage_and_config_errors_exit_two(capsys, argv):
    assert main(argv) == 2


def test_simulate_and_validate_config(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("EXTREMAL_SEED", raising=False)
    cfg = tmp_path / "toy.toml"
    cfg.write_text('model = "toy"\nreplicates = 200\nworkers = 1\n[fitness]\nid = "weibull_alpha"\n'
                   '[stop]\nt_end = 30.0\n[output]\ndetails = "none"\n')
    code, out, _ = run(capsys, "simulate", "--config", str(cfg), "--out", str(tmp_path / "a"), "--seed", "3",
                       "--set", "replicates=150")
    assert code == 0 and "150 replicate(s)" in out
    assert (tmp_path / "a" / "replicates.csv").exists()
    code, out, _ = run(capsys, "simulate", "--config", str(cfg), "--out", str(tmp_path / "b"), "--validate")
    assert "frechet" in out
    assert code == (1 if "[FAIL]" in out else 0)


def test_bad_set_override_exits_two(tmp_path, capsys):
    cfg = tmp_path / "toy.toml"
    cfg.write_text('model = "toy"\n[fitness]\nid = "weibull_alpha"\n[stop]\nt_end = 30.0\n')
    assert main(["simulate", "--config", str(cfg), "--set", "novalue"]) == 2
    assert main(["simulate", "--config", str(cfg), "--set", "dynamics.c=1"]) == 2


def test_validate_list_and_single_scenario(capsys):
    code, out, _ = run(capsys, "validate", "--list")
    assert code == 0 and len(out.strip().splitlines()) == 12
    code, out, _ = run(capsys, "validate", "--scenario", "sigma_exact")
    assert code == 0 and out.startswith("[PASS]  1 sigma_exact")


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "competing_growth", "sigma", "--model", "gnedenko",
                           "--lambda", "1", "--t", "3"], capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0 and proc.stdout.startswith("sigma_t = 1.0")
