import math

import numpy as np
import pytest
from scipy import stats

from competing_growth.engines import (
    SizeCapExceeded,
    estimate_T,
    rbp_extremes,
    simulate_ct_gw,
    simulate_rbp,
    simulate_selection_mutation,
    simulate_yule,
)
from competing_growth.fitness import make_model
from competing_growth.malthusian import OffspringLaw, malthusian_rbp

UNIFORM = make_model("weibull_alpha", alpha=1.0)
LAW = OffspringLaw({(2, 1): 0.5, (0, 1): 0.25, (1, 2): 0.25})


def test_yule_is_geometric():
    # Y(t) is geometric with success probability e^(-gamma t)
    rng = np.random.default_rng(1)
    gamma, t = 0.7, 2.0
    y = np.array([simulate_yule(gamma, t, rng)[1][-1] for _ in range(10_000)])
    p = math.exp(-gamma * t)
    assert y.mean() == pytest.approx(1 / p, rel=0.03)
    ks = stats.kstest(y, stats.geom(p).cdf).statistic
    assert ks <= stats.geom(p).pmf(1) + 0.015  # atoms inflate the continuous statistic by at most one jump


def test_yule_path_shape():
    times, sizes = simulate_yule(1.0, 3.0, np.random.default_rng(2))
    assert times[0] == 0.0 and sizes[0] == 1
    assert np.all(np.diff(times) > 0) and times[-1] <= 3.0
    assert np.all(np.diff(sizes) == 1)


def test_ct_gw_mean_growth():
    rng = np.random.default_rng(3)
    law = {0: 0.2, 1: 0.3, 3: 0.5}  # mean jump 1.8
    t = 1.0
    z = np.array([simulate_ct_gw(law, 0.5, t, rng)[1][-1] for _ in range(8000)])
    assert z.mean() == pytest.approx(math.exp(0.5 * 1.8 * t), rel=0.03)


def test_ct_gw_validation_and_cap():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        simulate_ct_gw({1: 0.5}, 1.0, 1.0, rng)
    with pytest.raises(ValueError):
        simulate_ct_gw({1: 1.0}, 0.0, 1.0, rng)
    with pytest.raises(SizeCapExceeded):
        simulate_yule(1.0, 50.0, rng, size_cap=1000)


def test_rbp_conservation_with_event_log():
    snap, log = simulate_rbp(UNIFORM, LAW, np.random.default_rng(1), max_families=500, log_events=True)
    assert snap.stop_reason == "max_families" and snap.family_count == 500
    assert len(log) == snap.events
    assert snap.total_size == 1 + log.delta_same_family.sum() + log.new_families.sum()
    assert snap.family_count == 1 + log.new_families.sum()
    assert snap.size.sum() == snap.total_size
    assert np.all(np.diff(log.time) >= 0)
    assert np.all((log.family >= 1) & (log.family <= snap.family_count))


def test_rbp_snapshot_invariants():
    snap, _ = simulate_rbp(UNIFORM, LAW, np.random.default_rng(4), t_end=5.0)
    assert snap.stop_reason == "t_end" and snap.clock == 5.0
    assert snap.tau[0] == 0.0 and np.all(np.diff(snap.tau) >= 0) and snap.tau[-1] <= 5.0
    assert np.all((snap.fitness > 0) & (snap.fitness < 1))
    assert snap.families[2].index == 3 and snap.family(3) == snap.families[2]
    with pytest.raises(ValueError):
        snap.size[0] = 7


def test_rbp_rate_drift_stays_small():
    snap, _ = simulate_rbp(UNIFORM, LAW, np.random.default_rng(5), max_population=100_000, rebuild_every=1000)
    assert snap.total_size >= 100_000
    assert abs(snap.total_rate - snap.recompute_rate()) <= 1e-9 * snap.recompute_rate()


def test_rbp_deterministic_for_seed(tmp_path):
    a, _ = simulate_rbp(UNIFORM, LAW, np.random.default_rng(9), max_families=300)
    b, _ = simulate_rbp(UNIFORM, LAW, np.random.default_rng(9), max_families=300)
    a.to_csv(tmp_path / "a.csv")
    b.to_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.csv").read_text().splitlines()[0] == "family_index,tau,fitness,size"


def test_event_log_csv(tmp_path):
    _, log = simulate_rbp(UNIFORM, LAW, np.random.default_rng(2), max_events=20, log_events=True)
    log.to_csv(tmp_path / "ev.csv")
    rows = (tmp_path / "ev.csv").read_text().splitlines()
    assert rows[0] == "event_index,time,family_index,delta_same_family,new_families"
    assert len(rows) == 21


def test_families_grow_at_malthusian_rate():
    lam = malthusian_rbp(UNIFORM, LAW)
    snap, _ = simulate_rbp(UNIFORM, LAW, np.random.default_rng(6), max_families=20_000)
    n = np.arange(1, snap.family_count + 1)
    slope = np.polyfit(np.log(n[1000:]), snap.tau[1000:], 1)[0]
    assert slope == pytest.approx(1 / lam, rel=0.05)


def test_estimate_T_recovers_offset():
    lam, T = 1.3, 0.42
    tau = np.log(np.arange(1, 1001)) / lam + T
    assert estimate_T(tau, lam) == pytest.approx(T, abs=1e-12)
    with pytest.raises(ValueError):
        estimate_T(np.array([0.0]), lam)


def test_selection_mutation_runs_on_thinned_law():
    snap, _ = simulate_selection_mutation(UNIFORM, 0.4, {1: 0.5, 2: 0.5}, np.random.default_rng(7), max_families=200)
    assert snap.family_count == 200


def test_extremes_sampler_agrees_in_law_with_gillespie():
    t = 4.0
    rng_a, rng_b = np.random.default_rng(10), np.random.default_rng(11)
    gil = [simulate_rbp(UNIFORM, LAW, rng_a, t_end=t)[0] for _ in range(1500)]
    dfs = [rbp_extremes(UNIFORM, LAW, t, rng_b) for _ in range(1500)]
    for field in ("total_size", "family_count"):
        a = [getattr(s, field) for s in gil]
        b = [getattr(s, field) for s in dfs]
        assert stats.ks_2samp(a, b).pvalue > 1e-3, field
    assert stats.ks_2samp([s.size.max() for s in gil], [s.max_size for s in dfs]).pvalue > 1e-3


def test_extremes_record_matches_summary():
    e = rbp_extremes(UNIFORM, LAW, 5.0, np.random.default_rng(2), record=True)
    tau, fit, size = e.families
    assert e.complete and len(tau) == e.family_count
    assert size.sum() == e.total_size
    order = np.argsort(-size, kind="stable")
    assert size[order[0]] == e.max_size and size[order[1]] == e.second_size
    assert np.all(np.diff(tau) >= 0)


def test_extremes_birth_time_recording_keeps_the_stream():
    full = rbp_extremes(UNIFORM, LAW, 5.0, np.random.default_rng(8), record=True)
    lean = rbp_extremes(UNIFORM, LAW, 5.0, np.random.default_rng(8), record="tau")
    plain = rbp_extremes(UNIFORM, LAW, 5.0, np.random.default_rng(8))
    assert np.array_equal(full.families[0], lean.families[0])
    assert lean.families[1] is None and plain.families is None
    assert full.max_tau == lean.max_tau == plain.max_tau
    with pytest.raises(ValueError):
        rbp_extremes(UNIFORM, LAW, 5.0, np.random.default_rng(8), record="sizes")
