import csv
import json

import numpy as np
import pytest

from competing_growth.harness import ConfigError, ExperimentConfig, load_config, replicate_rng, run_experiment

TOY = """
model = "toy"
replicates = 3
seed = 17
workers = 1
[fitness]
id = "weibull_alpha"
alpha = 1.0
[stop]
t_end = 30.0
"""


def write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.mark.parametrize("raw,field", [
    ({"model": "dereich", "fitness": {"id": "gnedenko"}, "dynamics": {"beta": 1.5}, "stop": {"n_vertices": 10}},
     "dynamics.beta"),
    ({"model": "dereich", "fitness": {"id": "gnedenko"}, "dynamics": {"beta": 0.5}, "stop": {}}, "stop.n_vertices"),
    ({"model": "nope", "fitness": {"id": "gnedenko"}}, "model"),
    ({"model": "rbp", "fitness": {"id": "unknown"}}, "fitness.id"),
    ({"model": "rbp", "fitness": {"id": "gnedenko"}, "replicates": 0}, "replicates"),
    ({"model": "rbp", "fitness": {"id": "gnedenko"}, "dynamics": {"p_ij": [[1, 1, 0.4]]}}, "dynamics.p_ij"),
    ({"model": "toy", "fitness": {"id": "weibull_alpha"}, "dynamics": {"c": 2}, "stop": {"t_end": 5.0}},
     "dynamics.c"),
    ({"model": "crp", "fitness": {"id": "gnedenko"}, "dynamics": {"theta": -1.0}, "stop": {"n_customers": 5}},
     "dynamics.theta"),
    ({"model": "rbp", "fitness": {"id": "gnedenko"}, "colour": "red"}, "colour"),
])
def test_config_errors_name_the_field(raw, field):
    with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
        ExperimentConfig.from_dict(raw)


def test_unreadable_config(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, "model = [unclosed"))


def test_defaults_are_filled_in():
    cfg = ExperimentConfig.from_dict({"model": "rbp", "fitness": {"id": "weibull_alpha", "alpha": 1.0}})
    assert cfg.dynamics["p_ij"] == [[1, 1, 1.0]]
    assert cfg.stop == {"max_population": 10**6}
    assert cfg.output["details"] == "first" and cfg.validate["threshold"] == 0.05


def test_seed_precedence(tmp_path, monkeypatch):
    path = write(tmp_path, TOY)
    monkeypatch.delenv("EXTREMAL_SEED", raising=False)
    assert load_config(path).seed == 17
    monkeypatch.setenv("EXTREMAL_SEED", "99")
    assert load_config(path).seed == 99
    assert load_config(path, seed=5).seed == 5
    monkeypatch.setenv("EXTREMAL_SEED", "abc")
    with pytest.raises(ConfigError, match="EXTREMAL_SEED"):
        load_config(path)


def test_overrides_apply_dotted_keys(tmp_path):
    cfg = load_config(write(tmp_path, TOY), overrides={"stop.t_end": 40.0, "replicates": 2})
    assert cfg.stop["t_end"] == 40.0 and cfg.replicates == 2


def test_replicate_streams_are_independent_of_order():
    a = replicate_rng(3, 7).random(4)
    replicate_rng(3, 0).random(100)
    assert np.array_equal(a, replicate_rng(3, 7).random(4))
    assert not np.array_equal(a, replicate_rng(3, 8).random(4))
    assert not np.array_equal(a, replicate_rng(4, 7).random(4))


def test_toy_experiment_files(tmp_path):
    cfg = load_config(write(tmp_path, TOY))
    res = run_experiment(cfg, out_dir=tmp_path / "out")
    rows = read_rows(tmp_path / "out" / "replicates.csv")
    assert rows[0] == ["replicate", "t_or_n", "max_size_rescaled", "argmax_fitness", "argmax_birth_rescaled",
                       "top_ratio", "T_hat"]
    assert [r[0] for r in rows[1:]] == ["0", "1", "2"]
    resolved = json.loads((tmp_path / "out" / "config.resolved.json").read_text())
    assert resolved["seed"] == 17 and resolved["dynamics"]["c"] == 3.0
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["n_replicates"] == 3 and summary["lambda"] == 1.0
    assert len(res.summaries) == 3


def test_crp_single_replicate_details(tmp_path):
    cfg = ExperimentConfig.from_dict({"model": "crp", "fitness": {"id": "weibull_alpha", "alpha": 1.0},
                                      "stop": {"n_customers": 10}, "replicates": 1, "workers": 1})
    run_experiment(cfg, out_dir=tmp_path)
    rows = read_rows(tmp_path / "replicates.csv")
    assert len(rows) == 2 and rows[1][1] == "10"
    details = sorted(p.name for p in (tmp_path / "details").iterdir())
    assert details
    table = read_rows(tmp_path / "details" / details[0])
    assert table[0][2] == "size" and sum(int(r[2]) for r in table[1:]) == 10


@pytest.mark.parametrize("raw", [
    {"model": "rbp", "fitness": {"id": "weibull_alpha", "alpha": 1.0},
     "dynamics": {"p_ij": [[1, 1, 0.5], [2, 1, 0.5]]}, "stop": {"max_population": 2000}},
    {"model": "bb_tree", "fitness": {"id": "power_rho", "rho": 0.5}, "stop": {"n_vertices": 500}},
    {"model": "dereich", "fitness": {"id": "weibull_alpha", "alpha": 1.0}, "dynamics": {"beta": 0.5},
     "stop": {"n_vertices": 500}},
])
def test_serial_and_parallel_runs_match(tmp_path, raw):
    cfg = ExperimentConfig.from_dict(dict(raw, replicates=4, seed=8, output={"details": "all"}))
    run_experiment(cfg, out_dir=tmp_path / "serial", workers=1)
    run_experiment(cfg, out_dir=tmp_path / "parallel", workers=2)
    for f in sorted((tmp_path / "serial").rglob("*.csv")):
        other = tmp_path / "parallel" / f.relative_to(tmp_path / "serial")
        assert f.read_bytes() == other.read_bytes(), f.name


def test_boundary_dynamics_is_a_config_error(tmp_path):
    # Gnedenko with p_11 = 1 sits exactly on the existence boundary
    cfg = ExperimentConfig.from_dict({"model": "rbp", "fitness": {"id": "gnedenko"}, "workers": 1,
                                      "stop": {"max_families": 50}})
    with pytest.raises(ConfigError, match="dynamics"):
        run_experiment(cfg, out_dir=tmp_path)


def test_validation_report_for_toy(tmp_path):
    cfg = ExperimentConfig.from_dict({"model": "toy", "fitness": {"id": "weibull_alpha", "alpha": 1.0},
                                      "stop": {"t_end": 40.0}, "replicates": 400, "seed": 2, "workers": 1,
                                      "output": {"details": "none"}})
    res = run_experiment(cfg, out_dir=tmp_path, validate=True)
    laws = {e["law"]: e for e in res.report}
    assert laws["frechet"]["pass"], laws["frechet"]
    assert set(laws) == {"frechet", "gamma", "ratio"}
