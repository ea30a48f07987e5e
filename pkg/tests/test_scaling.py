import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from competing_growth.fitness import make_model
from competing_growth.scaling import (
    EXP_XI,
    POINT_MASS_XI,
    frechet_scale_gumbel,
    frechet_scale_weibull,
    intensity_gumbel,
    intensity_weibull,
    quadrature_tail_gumbel,
    quadrature_tail_weibull,
    sanity_asymptotics,
    scaling_bundle,
    sigma_weibull_leading,
    solve_sigma,
    tail_mass_gumbel,
    tail_mass_weibull,
)

GNEDENKO = make_model("gnedenko")


def gnedenko_sigma(lam, t):
    return (math.sqrt(lam * t + 1.0) - 1.0) / lam


def test_solve_sigma_examples():
    assert solve_sigma(GNEDENKO, 1.0, 3.0) == pytest.approx(1.0, rel=1e-12)
    assert solve_sigma(GNEDENKO, 1.0, 120.0) == pytest.approx(10.0, rel=1e-12)


@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("t", [10.0, 1e2, 1e4, 1e6])
def test_solve_sigma_gnedenko_closed_form(lam, t):
    assert solve_sigma(GNEDENKO, lam, t) == pytest.approx(gnedenko_sigma(lam, t), rel=1e-10)


@settings(max_examples=80, deadline=None)
@given(lam=st.floats(0.2, 5.0), t=st.floats(5.0, 1e7))
def test_solve_sigma_gnedenko_property(lam, t):
    expected = max(1.0, gnedenko_sigma(lam, t))
    assert solve_sigma(GNEDENKO, lam, t) == pytest.approx(expected, rel=1e-10)


@pytest.mark.parametrize("model_id", ["gnedenko", "power_rho", "exp_sqrt", "tan", "exp_inv"])
def test_solve_sigma_residual_and_monotone(model_id):
    m = make_model(model_id)
    ts = np.logspace(1.5, 6, 12)
    sig = [solve_sigma(m, 1.0, t, full_output=True) for t in ts]
    values = [s for s, _ in sig]
    assert all(1.0 <= s < t for s, t in zip(values, ts))
    assert np.all(np.diff(values) >= 0)
    for (s, info), t in zip(sig, ts):
        if not info.clamped:
            lhs = float(m.g1(s)) / float(m.g(s))
            rhs = 1.0 / (t - s)
            assert abs(lhs - rhs) <= 1e-12 * rhs * 10


def test_solve_sigma_clamps_small_t():
    s, info = solve_sigma(GNEDENKO, 1.0, 1.5, full_output=True)
    assert s == 1.0 and info.clamped


def test_power_rho_growth_exponent():
    # the sigma equation gives t^(rho/(rho+1)) growth, with this prefactor
    rho, lam = 0.5, 1.0
    m = make_model("power_rho", rho=rho)
    e = rho / (rho + 1.0)
    for t in (1e5, 1e6, 1e7):
        lead = lam ** (-1.0 / (rho + 1.0)) * rho ** (-e) * t**e
        assert solve_sigma(m, lam, t) / lead == pytest.approx(1.0, abs=0.02)


def test_sigma_weibull_leading_examples():
    assert sigma_weibull_leading(1.0, None, 1.0, math.exp(10)) == pytest.approx(10.0, abs=1e-12)
    assert sigma_weibull_leading(2.0, None, 2.0, math.exp(10)) == pytest.approx(10.0, abs=1e-12)
    assert sigma_weibull_leading(1.0, lambda eps: 2.0, 1.0, math.exp(10)) == pytest.approx(10 - math.log(2), abs=1e-12)


def test_frechet_scale_examples():
    assert frechet_scale_gumbel(1.0, 1.0, 2.0, 1.0) == pytest.approx(math.sqrt(math.pi), rel=1e-12)
    assert frechet_scale_gumbel(1.3, 1.3, 2 * math.pi * 1.3, 1.0) == pytest.approx(1.0, rel=1e-12)
    assert frechet_scale_gumbel(2.0, 1.0, 2.0, 2.0) == pytest.approx(math.sqrt(math.sqrt(2 * math.pi) * 2), rel=1e-12)
    assert frechet_scale_weibull(1.0, 1.0, 1.0, 1.0) == pytest.approx(1.0, rel=1e-12)
    assert frechet_scale_weibull(2.0, 1.0, 1.0, 2.0) == pytest.approx(1.0, rel=1e-12)
    assert frechet_scale_weibull(1.0, 1.0, 2.0, 1.0) == pytest.approx(2.0, rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(a=st.floats(0.1, 10.0), b=st.floats(0.1, 10.0))
def test_frechet_scales_increase_with_moment(a, b):
    lo, hi = sorted((a, b))
    if hi - lo < 1e-6:
        return
    assert frechet_scale_gumbel(1.2, 0.7, 2.0, lo) < frechet_scale_gumbel(1.2, 0.7, 2.0, hi)
    assert frechet_scale_weibull(1.2, 0.7, 1.5, lo) < frechet_scale_weibull(1.2, 0.7, 1.5, hi)


def test_bundle_invariants():
    b = scaling_bundle(GNEDENKO, 1.3, 0.7, 500.0)
    assert b.a3 * b.frechet_shape == pytest.approx(1.0, rel=1e-15)
    assert b.a1 == pytest.approx(0.7 / 2.6)
    assert b.a2 == pytest.approx(0.7 * 2.0 / 2.0, rel=1e-6)
    assert 1.0 <= b.sigma_t < b.t
    assert b.xi_moment == pytest.approx(math.gamma(1 + 1.3 / 0.7))
    w = scaling_bundle(make_model("weibull_alpha", alpha=2.0), 1.0, 1.0, 100.0)
    assert w.case == "weibull" and w.alpha == 2.0


def test_intensity_gumbel_examples():
    b = scaling_bundle(GNEDENKO, 1.0, 1.0, 120.0, kappa=2.0)
    assert intensity_gumbel(0.0, 0.0, 1.0, b, EXP_XI) == pytest.approx(math.exp(-1.0), rel=1e-12)
    f = math.log(2.0)
    assert intensity_gumbel(0.0, f, 1.0, b, EXP_XI) == pytest.approx(0.25 * math.exp(-0.5), rel=1e-12)


def test_intensity_weibull_examples():
    b = scaling_bundle(make_model("weibull_alpha", alpha=1.0), 1.0, 1.0, 100.0)
    assert intensity_weibull(0.0, 1e-300, 1.0, b, EXP_XI, alpha=1.0) == pytest.approx(math.exp(-1.0), rel=1e-12)
    assert intensity_weibull(0.0, 1e-300, 1.0, b, EXP_XI, alpha=2.0) == pytest.approx(0.0, abs=1e-200)


@pytest.mark.parametrize("x", [0.5, 1.0, 2.0])
def test_gumbel_tail_mass_by_quadrature(x):
    b = scaling_bundle(GNEDENKO, 1.0, 1.0, 120.0, kappa=2.0)
    closed = tail_mass_gumbel(x, b)
    assert quadrature_tail_gumbel(x, b) == pytest.approx(closed, rel=5e-3)
    # closed form is the Frechet exceedance s^(lam/gam) x^(-lam/gam)
    assert closed == pytest.approx((b.frechet_scale / x) ** b.frechet_shape, rel=1e-10)


@pytest.mark.parametrize("x", [0.5, 1.0, 2.0])
def test_weibull_tail_mass_by_quadrature(x):
    b = scaling_bundle(make_model("weibull_alpha", alpha=1.0), 1.0, 1.0, 100.0)
    closed = tail_mass_weibull(x, b)
    assert quadrature_tail_weibull(x, b) == pytest.approx(closed, rel=5e-3)
    assert closed == pytest.approx((b.frechet_scale / x) ** b.frechet_shape, rel=1e-10)


def test_point_mass_xi_moment():
    assert POINT_MASS_XI.moment(2.5) == 1.0
    assert EXP_XI.moment(1.0) == pytest.approx(1.0)


def test_sanity_asymptotics_gnedenko():
    rep = sanity_asymptotics(GNEDENKO, 1.0, [1e2, 1e4, 1e6], kappa=2.0)
    assert 0.9 <= rep.derivative_ratio[-1] <= 1.1
    assert 0.9 <= rep.curvature_ratio[-1] <= 1.1
    assert rep.small_o[-1] <= 0.01
    assert rep.ok
