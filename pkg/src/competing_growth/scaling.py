"""Window centre sigma_t, scaling constants and limiting intensities."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.special import gamma as gamma_fn, roots_laguerre, roots_legendre

from .fitness import FitnessModel, kappa as kappa_of

__all__ = [
    "ScalingBundle",
    "SigmaInfo",
    "XiLaw",
    "EXP_XI",
    "POINT_MASS_XI",
    "solve_sigma",
    "sigma_weibull_leading",
    "frechet_scale_gumbel",
    "frechet_scale_weibull",
    "intensity_gumbel",
    "intensity_weibull",
    "tail_mass_gumbel",
    "tail_mass_weibull",
    "quadrature_tail_gumbel",
    "quadrature_tail_weibull",
    "sanity_asymptotics",
    "scaling_bundle",
]


@dataclass(frozen=True)
class XiLaw:
    """Law of the martingale limit xi of a single growth process."""

    name: str
    density: Optional[Callable[[np.ndarray], np.ndarray]]
    moment: Callable[[float], float]


EXP_XI = XiLaw("exp", lambda z: np.exp(-np.asarray(z, dtype=float)), lambda p: float(gamma_fn(1.0 + p)))
POINT_MASS_XI = XiLaw("delta1", None, lambda p: 1.0)


def _density(nu: Union[XiLaw, Callable, None]):
    if nu is None:
        return EXP_XI.density
    if isinstance(nu, XiLaw):
        if nu.density is None:
            raise ValueError(f"xi law {nu.name!r} has no density; use the tail-mass formulas instead")
        return nu.density
    return nu


@dataclass
class SigmaInfo:
    raw: float
    clamped: bool
    residual: float
    converged: bool
    iterations: int


def solve_sigma(model: FitnessModel, lam: float, t: float, full_output: bool = False):
    """Solve ``(log g)'(lam x) = 1 / (lam (t - x))`` for x, clamped below at 1.

    The left side minus the right side is strictly decreasing on
    ``(0, t)``, so bisection on ``[eps, t - eps]`` with ``eps = 1e-9 t`` is
    globally safe; a Newton polish follows.  When the bracket has no sign
    change the clamp value 1 is returned with ``info.converged = False``.
    """
    if not model.is_gumbel:
        raise ValueError("solve_sigma needs a Gumbel-class model")
    if lam <= 0 or t <= 0:
        raise ValueError("lam and t must be positive")
    lt = lam * t

    # work in y = lam * x
    def F(y):
        return float(model.g1(y) / model.g(y)) - 1.0 / (lt - y)

    def dF(y):
        gv, g1v, g2v = float(model.g(y)), float(model.g1(y)), float(model.g2(y))
        return g2v / gv - (g1v / gv) ** 2 - 1.0 / (lt - y) ** 2

    eps = 1e-9 * lt
    lo, hi = eps, lt - eps
    flo, fhi = F(lo), F(hi)
    if not (flo > 0 and fhi < 0):
        info = SigmaInfo(raw=float("nan"), clamped=True, residual=float("nan"), converged=False, iterations=0)
        return (1.0, info) if full_output else 1.0
    it = 0
    for it in range(1, 61):
        mid = 0.5 * (lo + hi)
        fm = F(mid)
        if fm > 0:
            lo = mid
        elif fm < 0:
            hi = mid
        else:
            lo = hi = mid
            break
        if hi - lo <= 4e-16 * hi:
            break
    y = 0.5 * (lo + hi)
    for _ in range(3):
        fy = F(y)
        d = dF(y)
        if d == 0 or not math.isfinite(d):
            break
        ny = y - fy / d
        if not lo <= ny <= hi or abs(F(ny)) >= abs(fy):
            break
        y = ny
    x = y / lam
    resid = abs(F(y)) * (lt - y)  # relative to the right-hand side
    clamped = x < 1.0
    info = SigmaInfo(raw=x, clamped=clamped, residual=resid, converged=resid <= 1e-12, iterations=it)
    value = max(x, 1.0)
    return (value, info) if full_output else value


def sigma_weibull_leading(alpha: float, ell: Optional[Callable[[float], float]], lam: float, t: float) -> float:
    """Deterministic part of sigma_t for Weibull-class fitness.

    ``(alpha / lam) log t - (1 / lam) log ell(1 / t)``; the random offset T
    is left to the caller.
    """
    val = alpha / lam * math.log(t)
    if ell is not None:
        val -= math.log(ell(1.0 / t)) / lam
    return val


def frechet_scale_gumbel(lam: float, gamma: float, kappa: float, xi_moment: float) -> float:
    if min(lam, gamma, kappa, xi_moment) <= 0:
        raise ValueError("all arguments must be positive")
    return (math.sqrt(2.0 * math.pi * lam / kappa) * xi_moment) ** (gamma / lam)


def frechet_scale_weibull(lam: float, gamma: float, alpha: float, xi_moment: float) -> float:
    if min(lam, gamma, alpha, xi_moment) <= 0:
        raise ValueError("all arguments must be positive")
    return (math.gamma(alpha + 1.0) * lam ** (-alpha) * xi_moment) ** (gamma / lam)


@dataclass
class ScalingBundle:
    """Constants for one experiment; ``kappa`` and ``a2`` are None in the Weibull case."""

    lam: float
    gamma: float
    kappa: Optional[float]
    sigma_t: float
    a1: float
    a2: Optional[float]
    a3: float
    frechet_shape: float
    frechet_scale: float
    xi_moment: float
    t: float
    case: str = "gumbel"
    alpha: Optional[float] = None
    T_estimate: Optional[float] = None
    sigma_clamped: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def scaling_bundle(
    model: FitnessModel,
    lam: float,
    gamma: float,
    t: float,
    xi_moment: Optional[float] = None,
    kappa: Optional[float] = None,
    T_estimate: Optional[float] = None,
) -> ScalingBundle:
    """Collect sigma_t, a1..a3 and the Frechet parameters for ``model``.

    ``xi_moment`` defaults to ``Gamma(1 + lam / gamma)``, the Yule value.
    """
    shape = lam / gamma
    if xi_moment is None:
        xi_moment = math.gamma(1.0 + shape)
    a1 = gamma / (2.0 * lam)
    a3 = gamma / lam
    if model.is_gumbel:
        k = float(kappa) if kappa is not None else kappa_of(model).value
        sigma, info = solve_sigma(model, lam, t, full_output=True)
        return ScalingBundle(
            lam=lam, gamma=gamma, kappa=k, sigma_t=sigma, a1=a1, a2=gamma * k / 2.0, a3=a3,
            frechet_shape=shape, frechet_scale=frechet_scale_gumbel(lam, gamma, k, xi_moment),
            xi_moment=xi_moment, t=t, case="gumbel", T_estimate=T_estimate, sigma_clamped=info.clamped,
        )
    sigma = sigma_weibull_leading(model.alpha, model.ell, lam, t)
    return ScalingBundle(
        lam=lam, gamma=gamma, kappa=None, sigma_t=sigma, a1=a1, a2=None, a3=a3,
        frechet_shape=shape, frechet_scale=frechet_scale_weibull(lam, gamma, model.alpha, xi_moment),
        xi_moment=xi_moment, t=t, case="weibull", alpha=model.alpha, T_estimate=T_estimate,
    )


def intensity_gumbel(s, f, z, bundle: ScalingBundle, nu=None):
    """Limit intensity ``lam e^-f e^(s^2 a2 - f a3) nu(z e^(s^2 a2 - f a3))``."""
    dens = _density(nu)
    s = np.asarray(s, dtype=float)
    f = np.asarray(f, dtype=float)
    z = np.asarray(z, dtype=float)
    c = s * s * bundle.a2 - f * bundle.a3
    with np.errstate(over="ignore", invalid="ignore"):
        ec = np.exp(c)
        out = bundle.lam * np.exp(-f) * ec * dens(z * ec)
    return np.where(np.isfinite(out), out, 0.0)


def intensity_weibull(s, f, z, bundle: ScalingBundle, nu=None, alpha: Optional[float] = None):
    """Limit intensity ``alpha f^(alpha-1) lam e^(lam s) e^(gam(s+f)) nu(z e^(gam(s+f)))``."""
    dens = _density(nu)
    alpha = bundle.alpha if alpha is None else alpha
    s = np.asarray(s, dtype=float)
    f = np.asarray(f, dtype=float)
    z = np.asarray(z, dtype=float)
    c = bundle.gamma * (s + f)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        ec = np.exp(c)
        pref = alpha * np.power(f, alpha - 1.0)
        out = pref * bundle.lam * np.exp(bundle.lam * s) * ec * dens(z * ec)
    return np.where(np.isfinite(out), out, 0.0)


def tail_mass_gumbel(x, bundle: ScalingBundle, nu: XiLaw = EXP_XI):
    """Closed-form mass of the Gumbel-case intensity above level x in the size coordinate."""
    a2, a3 = bundle.a2, bundle.a3
    return bundle.lam * math.sqrt(math.pi * a3 / a2) * nu.moment(1.0 / a3) * np.power(x, -1.0 / a3)


def tail_mass_weibull(x, bundle: ScalingBundle, nu: XiLaw = EXP_XI):
    """Closed-form mass of the Weibull-case intensity above level x."""
    return bundle.frechet_scale ** bundle.frechet_shape * np.power(x, -bundle.frechet_shape)


def _gl_nodes(a: float, b: float, panels: int, order: int = 32):
    u, w = roots_legendre(order)
    edges = np.linspace(a, b, panels + 1)
    h = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + h[:, None] * u[None, :]).ravel()
    weights = (h[:, None] * w[None, :]).ravel()
    return nodes, weights


def _z_tail_integral(intensity, s, f, x, rate, n_laguerre: int = 64):
    """Integral over z in [x, oo) of intensity(s, f, z) on a grid of (s, f).

    ``rate`` is the local decay rate of the integrand in z; the substitution
    ``z = x + v / rate`` followed by Gauss-Laguerre in v keeps the nodes in
    the support for every (s, f).
    """
    v, w = roots_laguerre(n_laguerre)
    acc = np.zeros(np.broadcast(s, f).shape)
    with np.errstate(over="ignore", invalid="ignore"):
        for vi, wi in zip(v, w):
            z = x + vi / rate
            acc += wi * math.exp(vi) * intensity(s, f, z) / rate
    return acc


def quadrature_tail_gumbel(x: float, bundle: ScalingBundle, nu=None, s_range=(-8.0, 8.0),
                           f_range=(-8.0, 12.0), panels: int = 8) -> float:
    """Numerical triple integral of intensity_gumbel over s, f and z >= x."""
    sn, sw = _gl_nodes(*s_range, panels)
    fn, fw = _gl_nodes(*f_range, panels)
    S, Fg = np.meshgrid(sn, fn, indexing="ij")
    rate = np.exp(S * S * bundle.a2 - Fg * bundle.a3)
    inner = _z_tail_integral(lambda s, f, z: intensity_gumbel(s, f, z, bundle, nu), S, Fg, x, rate)
    return float(sw @ inner @ fw)


def quadrature_tail_weibull(x: float, bundle: ScalingBundle, nu=None, s_range=(-12.0, 12.0),
                            f_range=(0.0, 40.0), panels: int = 8) -> float:
    """Numerical triple integral of intensity_weibull over s, f > 0 and z >= x."""
    sn, sw = _gl_nodes(*s_range, panels)
    fn, fw = _gl_nodes(*f_range, panels)
    S, Fg = np.meshgrid(sn, fn, indexing="ij")
    rate = np.exp(bundle.gamma * (S + Fg))
    inner = _z_tail_integral(lambda s, f, z: intensity_weibull(s, f, z, bundle, nu), S, Fg, x, rate)
    return float(sw @ inner @ fw)


@dataclass
class AsymptoticsReport:
    t: list
    sigma: list
    derivative_ratio: list  # lam t g'(lam sigma_t)            -> 1
    curvature_ratio: list   # sigma_t t g''(lam sigma_t) lam^2 / -kappa -> 1
    small_o: list           # sigma_t g'(lam sigma_t)           -> 0
    kappa: float
    passed: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.passed.values())


def sanity_asymptotics(model: FitnessModel, lam: float, t_grid: Sequence[float],
                       kappa: Optional[float] = None) -> AsymptoticsReport:
    """Evaluate the three sigma_t asymptotic ratios along ``t_grid``."""
    k = kappa if kappa is not None else kappa_of(model).value
    t_grid = [float(t) for t in t_grid]
    sig, r1, r2, r3 = [], [], [], []
    for t in t_grid:
        s = solve_sigma(model, lam, t)
        y = lam * s
        g1 = float(model.g1(y))
        g2 = float(model.g2(y))
        sig.append(s)
        r1.append(lam * t * g1)
        r2.append(s * t * g2 * lam**2 / (-k))
        r3.append(s * g1)
    passed = {
        "derivative_ratio": abs(r1[-1] - 1.0) <= 0.1,
        "curvature_ratio": abs(r2[-1] - 1.0) <= 0.1,
        "small_o": r3[-1] <= 0.1 * max(r3[0], 1e-300) or r3[-1] <= 0.01,
    }
    return AsymptoticsReport(t=t_grid, sigma=sig, derivative_ratio=r1, curvature_ratio=r2,
                             small_o=r3, kappa=k, passed=passed)
