import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import lambertw

from competing_growth.extremal import ks_distance
from competing_growth.fitness import (
    CATALOG_IDS,
    catalog,
    check_a5,
    expect,
    kappa,
    make_model,
    sample_fitness,
    tail_prob,
)

GUMBEL_IDS = [k for k, m in catalog().items() if m.is_gumbel]


def test_catalog_ids():
    assert set(CATALOG_IDS) == {"power_rho", "exp_inv", "gnedenko", "exp_sqrt", "tan", "loglog_negative",
                                "weibull_alpha"}
    with pytest.raises(KeyError):
        make_model("nope")


def test_tail_prob_examples():
    g = make_model("gnedenko")
    assert tail_prob(g, 0.0) == 1.0
    assert tail_prob(g, 0.5) == pytest.approx(math.exp(-1.0), abs=1e-15)
    assert tail_prob(make_model("weibull_alpha", alpha=1.0), 0.75) == pytest.approx(0.25, abs=1e-15)


@pytest.mark.parametrize("x", [1.0, 1.5, -0.1, float("nan")])
def test_tail_prob_domain(x):
    with pytest.raises(ValueError):
        tail_prob(make_model("gnedenko"), x)


@pytest.mark.parametrize("model_id", CATALOG_IDS)
def test_tail_prob_decreasing(model_id):
    m = make_model(model_id)
    x = np.linspace(0.0, 0.999, 500)
    t = tail_prob(m, x)
    assert np.all(t >= 0) and np.all(t <= 1)
    if m.is_gumbel:
        with np.errstate(over="ignore"):
            representable = m.m(x) < 700
        assert np.all(t[representable] > 0)
    assert np.all(np.diff(t) <= 0)


def test_sampling_examples():
    for model_id in GUMBEL_IDS:
        assert make_model(model_id).g(0.0) == pytest.approx(0.0, abs=1e-12)
    assert make_model("gnedenko").g(1.0) == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("model_id", CATALOG_IDS)
def test_sampling_matches_tail_ks(model_id):
    m = make_model(model_id)
    x = sample_fitness(m, np.random.default_rng(3), 10_000)
    assert ks_distance(x, lambda v: 1.0 - m.tail(v)) <= 0.02


@pytest.mark.parametrize("model_id", CATALOG_IDS)
def test_samples_strictly_inside_unit_interval(model_id):
    x = sample_fitness(make_model(model_id), np.random.default_rng(11), 1_000_000)
    assert np.all(x > 0) and np.all(x < 1)


@pytest.mark.parametrize("model_id", GUMBEL_IDS)
def test_m_of_g_identity(model_id):
    m = make_model(model_id)
    for y in (0.1, 1.0, 10.0, 100.0):
        x = m.g(y)
        # near one the float spacing of x limits how well m(x) can hit y
        tol = max(1e-9, 4.0 * float(m.m1(x)) * float(np.spacing(1.0 - x) + np.spacing(x)))
        assert abs(m.m(x) - y) <= tol, (model_id, y)


@pytest.mark.parametrize("model_id", GUMBEL_IDS)
def test_g_of_m_identity(model_id):
    m = make_model(model_id)
    x = np.linspace(0.0, 1.0 - 1e-8, 400)
    with np.errstate(over="ignore"):
        y = m.m(x)
    ok = np.isfinite(y) & (y < 700)  # exp_inv overflows long before 1 - 1e-8
    assert ok.sum() > 100
    assert np.max(np.abs(m.g(y[ok]) - x[ok])) <= 1e-10


@pytest.mark.parametrize("model_id", GUMBEL_IDS)
@settings(max_examples=60, deadline=None)
@given(y=st.floats(min_value=1e-3, max_value=200.0))
def test_inverse_derivative_identity(model_id, y):
    m = make_model(model_id)
    assert float(m.g1(y)) * float(m.m1(m.g(y))) == pytest.approx(1.0, abs=1e-8)


def test_loglog_inverse_matches_lambert_w():
    # m(x) = L log L with L = 1 - log(1 - x), so log L = W(y)
    m = make_model("loglog_negative")
    y = np.array([0.01, 0.5, 1.0, 3.0, 10.0, 30.0])
    L = y / lambertw(y).real
    assert np.allclose(m.g(y), -np.expm1(1.0 - L), rtol=0, atol=1e-12)


@pytest.mark.parametrize("model_id", GUMBEL_IDS)
def test_m_increasing_convex_and_zero_at_origin(model_id):
    m = make_model(model_id)
    assert m.m(0.0) == pytest.approx(0.0, abs=1e-15)
    x = np.linspace(0.0, 0.999, 300)
    with np.errstate(over="ignore"):
        assert np.all(np.diff(m.m(x)) > 0)
        assert np.all(m.m1(x) > 0)
        assert np.all(m.m2(x[1:]) > 0)


@pytest.mark.parametrize("alpha", [0.3, 1.0, 2.5])
def test_weibull_tail_is_regular(alpha):
    m = make_model("weibull_alpha", alpha=alpha)
    eps = np.logspace(-9, -0.1, 50)
    assert np.allclose(m.tail(1.0 - eps) / eps**alpha, 1.0, rtol=0, atol=1e-10 * 1e3)


def test_kappa_examples():
    assert kappa(make_model("gnedenko")).value == pytest.approx(2.0, abs=1e-4)
    for rho in (0.3, 0.5, 1.0, 2.0):
        k = kappa(make_model("power_rho", rho=rho))
        assert k.ok
        assert k.value == pytest.approx((rho + 1.0) / rho, abs=1e-3)


def test_kappa_is_deterministic():
    m = make_model("exp_sqrt")
    assert kappa(m) == kappa(m)


def test_check_a5_examples():
    assert check_a5(make_model("gnedenko")).ok
    rep = check_a5(make_model("power_rho", rho=0.5))
    assert rep.ok and rep.kappa.value == pytest.approx(3.0, abs=1e-3)
    bad = check_a5(make_model("loglog_negative"))
    assert not bad.ok and len(bad.failures) >= 1


def test_check_a5_rejects_weibull():
    with pytest.raises(ValueError):
        check_a5(make_model("weibull_alpha"))


def test_expect_closed_forms():
    assert expect(make_model("weibull_alpha", alpha=1.0), lambda f: f) == pytest.approx(0.5, abs=1e-12)
    # Gnedenko: integral of 1/(1 - x) dmu = 2
    assert expect(make_model("gnedenko"), lambda f: 1.0 / (1.0 - f)) == pytest.approx(2.0, abs=1e-9)
    # 1 - F = U^(1/alpha) for the pure power tail, so E[F] = 1/(alpha + 1)
    for a in (0.5, 2.0):
        assert expect(make_model("weibull_alpha", alpha=a), lambda f: f) == pytest.approx(1.0 / (a + 1.0), abs=1e-10)
