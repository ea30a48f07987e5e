"""Fitness distributions on (0, 1) and their analytic transforms.

Two families are supported.  Gumbel-class laws are described by the
exponent ``m(x) = -log mu(x, 1]`` together with its inverse ``g``; Weibull-
class laws by a regularly varying tail ``mu(1 - eps, 1) = eps**alpha * ell(eps)``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

__all__ = [
    "FitnessClass",
    "FitnessModel",
    "A5Report",
    "KappaEstimate",
    "CATALOG_IDS",
    "catalog",
    "make_model",
    "tail_prob",
    "sample_fitness",
    "kappa",
    "check_a5",
    "expect",
    "numeric_inverse",
]

ArrayFn = Callable[[np.ndarray], np.ndarray]

# Grid approaching one used by kappa and check_a5: x = 1 - 10**-k.
_LIMIT_EXPONENTS = (4, 5, 6, 7, 8)


class FitnessClass(enum.Enum):
    GUMBEL = "gumbel"
    WEIBULL = "weibull"


@dataclass(frozen=True)
class FitnessModel:
    """An immutable fitness law.

    Gumbel-class models carry ``m, m1, m2`` and ``g, g1, g2`` (vectorised
    callables).  When no closed-form inverse is available ``g`` is computed
    numerically and ``g1, g2`` follow from the inverse-function identities.
    Weibull-class models carry ``alpha`` and the slowly varying ``ell``
    (``None`` means ``ell == 1``).
    """

    name: str
    kind: FitnessClass
    m: Optional[ArrayFn] = None
    m1: Optional[ArrayFn] = None
    m2: Optional[ArrayFn] = None
    g: Optional[ArrayFn] = None
    g1: Optional[ArrayFn] = None
    g2: Optional[ArrayFn] = None
    alpha: Optional[float] = None
    ell: Optional[Callable[[float], float]] = None
    params: dict = field(default_factory=dict)
    density_fn: Optional[ArrayFn] = field(default=None, repr=False)
    # log m, log m', log m'' for models whose m overflows near one
    log_m: Optional[ArrayFn] = field(default=None, repr=False)
    log_m1: Optional[ArrayFn] = field(default=None, repr=False)
    log_m2: Optional[ArrayFn] = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind is FitnessClass.GUMBEL:
            if self.m is None or self.m1 is None or self.m2 is None:
                raise ValueError("Gumbel-class model needs m, m1 and m2")
            if self.g is None:
                m, m1 = self.m, self.m1
                object.__setattr__(self, "g", lambda y: numeric_inverse(m, m1, y))
            if self.g1 is None:
                g, m1 = self.g, self.m1
                object.__setattr__(self, "g1", lambda y: 1.0 / m1(g(y)))
            if self.g2 is None:
                g, m1, m2 = self.g, self.m1, self.m2

                def _g2(y):
                    x = g(y)
                    return -m2(x) / m1(x) ** 3

                object.__setattr__(self, "g2", _g2)
        else:
            if self.alpha is None or not self.alpha > 0:
                raise ValueError("Weibull-class model needs alpha > 0")

    @property
    def is_gumbel(self) -> bool:
        return self.kind is FitnessClass.GUMBEL

    def log_derivatives(self, x):
        """(log m, log m', log m'') at x, overflow-safe where the model allows."""
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            lm = self.log_m(x) if self.log_m else np.log(self.m(x))
            l1 = self.log_m1(x) if self.log_m1 else np.log(self.m1(x))
            l2 = self.log_m2(x) if self.log_m2 else np.log(self.m2(x))
        return lm, l1, l2

    def tail(self, x):
        """mu(x, 1] evaluated elementwise (no domain checks)."""
        x = np.asarray(x, dtype=float)
        if self.is_gumbel:
            with np.errstate(over="ignore"):
                return np.exp(-self.m(x))  # underflows to 0 once m(x) > 745
        eps = 1.0 - x
        out = eps ** self.alpha
        if self.ell is not None:
            out = out * np.vectorize(self.ell, otypes=[float])(eps)
        return out

    def density(self, x):
        x = np.asarray(x, dtype=float)
        if self.density_fn is not None:
            return self.density_fn(x)
        if self.is_gumbel:
            return self.m1(x) * np.exp(-self.m(x))
        if self.ell is None:
            return self.alpha * (1.0 - x) ** (self.alpha - 1.0)
        h = 1e-6 * np.minimum(x, 1.0 - x)
        return (self.tail(x - h) - self.tail(x + h)) / (2.0 * h)

    def cdf(self, x):
        return 1.0 - self.tail(x)

    def quantile_of_tail(self, u):
        """Return x with mu(x, 1] = u, for u in (0, 1]."""
        u = np.asarray(u, dtype=float)
        if self.is_gumbel:
            return self.g(-np.log(u))
        if self.ell is None:
            return 1.0 - u ** (1.0 / self.alpha)
        return _bisect_tail(self.tail, u)


def numeric_inverse(m: ArrayFn, m1: ArrayFn, y, tol: float = 1e-12, maxiter: int = 200):
    """Invert an increasing ``m`` on [0, 1) by safeguarded Newton.

    Each iterate keeps a bracket ``[lo, hi]`` with ``m(lo) <= y <= m(hi)``;
    Newton steps leaving the bracket are replaced by bisection.
    """
    shape = np.shape(y)
    y = np.atleast_1d(np.asarray(y, dtype=float)).ravel()
    lo = np.zeros_like(y)
    hi = np.ones_like(y)
    x = np.full_like(y, 0.5)
    active = y > 0
    x[~active] = 0.0
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for _ in range(maxiter):
            if not active.any():
                break
            xa = x[active]
            fa = m(xa) - y[active]
            neg = fa < 0
            lo_a, hi_a = lo[active], hi[active]
            lo_a = np.where(neg, xa, lo_a)
            hi_a = np.where(neg, hi_a, xa)
            d = m1(xa)
            step = xa - fa / d
            bad = ~np.isfinite(step) | (step <= lo_a) | (step >= hi_a)
            new = np.where(bad, 0.5 * (lo_a + hi_a), step)
            new = np.where(fa == 0, xa, new)
            # tolerance relative to the distance from one: m is steep there
            scale = np.minimum(1.0, 1.0 - xa)
            done = (np.abs(new - xa) <= tol * scale) | (hi_a - lo_a <= 4e-16) | (fa == 0)
            lo[active], hi[active] = lo_a, hi_a
            x[active] = new
            idx = np.flatnonzero(active)
            active[idx[done]] = False
    return float(x[0]) if shape == () else x.reshape(shape)


def _bisect_tail(tail: ArrayFn, u, tol: float = 1e-12):
    shape = np.shape(u)
    u = np.atleast_1d(np.asarray(u, dtype=float)).ravel()
    lo = np.zeros_like(u)
    hi = np.ones_like(u)
    while np.max(hi - lo) > tol:
        mid = 0.5 * (lo + hi)
        above = tail(mid) > u
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    out = 0.5 * (lo + hi)
    return float(out[0]) if shape == () else out.reshape(shape)


# ---------------------------------------------------------------------------
# catalog
# ---------------------------------------------------------------------------

def _power_rho(rho: float = 0.5) -> FitnessModel:
    if not rho > 0:
        raise ValueError("rho must be positive")
    r = rho
    return FitnessModel(
        name="power_rho",
        kind=FitnessClass.GUMBEL,
        m=lambda x: (1.0 - x) ** (-r) - 1.0,
        m1=lambda x: r * (1.0 - x) ** (-r - 1.0),
        m2=lambda x: r * (r + 1.0) * (1.0 - x) ** (-r - 2.0),
        g=lambda y: 1.0 - (np.asarray(y, dtype=float) + 1.0) ** (-1.0 / r),
        g1=lambda y: (np.asarray(y, dtype=float) + 1.0) ** (-1.0 / r - 1.0) / r,
        g2=lambda y: -(1.0 / r) * (1.0 / r + 1.0) * (np.asarray(y, dtype=float) + 1.0) ** (-1.0 / r - 2.0),
        params={"rho": r},
    )


def _exp_inv() -> FitnessModel:
    def g(y):
        L = np.log(np.asarray(y, dtype=float) + math.e)
        return 1.0 - 1.0 / L

    def g1(y):
        y = np.asarray(y, dtype=float)
        L = np.log(y + math.e)
        return 1.0 / ((y + math.e) * L**2)

    def g2(y):
        y = np.asarray(y, dtype=float)
        L = np.log(y + math.e)
        return -(L + 2.0) / ((y + math.e) ** 2 * L**3)

    def m1(x):
        u = 1.0 / (1.0 - x)
        return np.exp(u) * u**2

    def m2(x):
        u = 1.0 / (1.0 - x)
        return np.exp(u) * (u**4 + 2.0 * u**3)

    def log_m(x):
        u = 1.0 / (1.0 - x)
        return u + np.log1p(-np.exp(1.0 - u))

    return FitnessModel(
        name="exp_inv",
        kind=FitnessClass.GUMBEL,
        m=lambda x: np.exp(1.0 / (1.0 - x)) - math.e,
        m1=m1,
        m2=m2,
        g=g,
        g1=g1,
        g2=g2,
        log_m=log_m,
        log_m1=lambda x: 1.0 / (1.0 - x) + 2.0 * np.log(1.0 / (1.0 - x)),
        log_m2=lambda x: 1.0 / (1.0 - x) + np.log((1.0 - x) ** -4.0 + 2.0 * (1.0 - x) ** -3.0),
    )


def _gnedenko() -> FitnessModel:
    return FitnessModel(
        name="gnedenko",
        kind=FitnessClass.GUMBEL,
        m=lambda x: x / (1.0 - x),
        m1=lambda x: (1.0 - x) ** -2.0,
        m2=lambda x: 2.0 * (1.0 - x) ** -3.0,
        g=lambda y: np.asarray(y, dtype=float) / (1.0 + np.asarray(y, dtype=float)),
        g1=lambda y: (1.0 + np.asarray(y, dtype=float)) ** -2.0,
        g2=lambda y: -2.0 * (1.0 + np.asarray(y, dtype=float)) ** -3.0,
    )


def _exp_sqrt() -> FitnessModel:
    # with v = (1 - x)**-1/2:  m = e**v - e,  dv/dx = v**3 / 2
    def m1(x):
        v = (1.0 - x) ** -0.5
        return 0.5 * np.exp(v) * v**3

    def m2(x):
        v = (1.0 - x) ** -0.5
        return np.exp(v) * (0.25 * v**6 + 0.75 * v**5)

    def g(y):
        L = np.log(np.asarray(y, dtype=float) + math.e)
        return 1.0 - L**-2.0

    def g1(y):
        y = np.asarray(y, dtype=float)
        L = np.log(y + math.e)
        return 2.0 / ((y + math.e) * L**3)

    def g2(y):
        y = np.asarray(y, dtype=float)
        L = np.log(y + math.e)
        return -(2.0 * L + 6.0) / ((y + math.e) ** 2 * L**4)

    def log_m(x):
        v = (1.0 - x) ** -0.5
        return v + np.log1p(-np.exp(1.0 - v))

    def log_m1(x):
        v = (1.0 - x) ** -0.5
        return v + np.log(0.5 * v**3)

    def log_m2(x):
        v = (1.0 - x) ** -0.5
        return v + np.log(0.25 * v**6 + 0.75 * v**5)

    return FitnessModel(
        name="exp_sqrt",
        kind=FitnessClass.GUMBEL,
        m=lambda x: np.exp((1.0 - x) ** -0.5) - math.e,
        m1=m1,
        m2=m2,
        g=g,
        g1=g1,
        g2=g2,
        log_m=log_m,
        log_m1=log_m1,
        log_m2=log_m2,
    )


def _tan() -> FitnessModel:
    h = 0.5 * math.pi
    return FitnessModel(
        name="tan",
        kind=FitnessClass.GUMBEL,
        m=lambda x: np.tan(h * x),
        m1=lambda x: h / np.cos(h * x) ** 2,
        m2=lambda x: 2.0 * h * h * np.tan(h * x) / np.cos(h * x) ** 2,
        g=lambda y: np.arctan(y) / h,
        g1=lambda y: 1.0 / (h * (1.0 + np.asarray(y, dtype=float) ** 2)),
        g2=lambda y: -2.0 * np.asarray(y, dtype=float) / (h * (1.0 + np.asarray(y, dtype=float) ** 2) ** 2),
    )


def _loglog_negative() -> FitnessModel:
    # L = log(e / (1 - x)) = 1 - log(1 - x);  m = L log L.  No closed-form g.
    def m(x):
        L = 1.0 - np.log1p(-x)
        return L * np.log(L)

    def m1(x):
        L = 1.0 - np.log1p(-x)
        return (np.log(L) + 1.0) / (1.0 - x)

    def m2(x):
        L = 1.0 - np.log1p(-x)
        return (np.log(L) + 1.0 + 1.0 / L) / (1.0 - x) ** 2

    return FitnessModel(name="loglog_negative", kind=FitnessClass.GUMBEL, m=m, m1=m1, m2=m2)


def _weibull_alpha(alpha: float = 1.0) -> FitnessModel:
    return FitnessModel(
        name="weibull_alpha",
        kind=FitnessClass.WEIBULL,
        alpha=float(alpha),
        params={"alpha": float(alpha)},
    )


_FACTORIES = {
    "power_rho": _power_rho,
    "exp_inv": _exp_inv,
    "gnedenko": _gnedenko,
    "exp_sqrt": _exp_sqrt,
    "tan": _tan,
    "loglog_negative": _loglog_negative,
    "weibull_alpha": _weibull_alpha,
}

CATALOG_IDS = tuple(_FACTORIES)


def make_model(model_id: str, **params) -> FitnessModel:
    """Build a catalog model by string id, e.g. ``make_model("power_rho", rho=0.5)``."""
    try:
        factory = _FACTORIES[model_id]
    except KeyError:
        raise KeyError(f"unknown fitness model {model_id!r}; known: {', '.join(CATALOG_IDS)}") from None
    return factory(**params)


def catalog() -> dict[str, FitnessModel]:
    """All catalog models with default parameters."""
    return {k: f() for k, f in _FACTORIES.items()}


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def tail_prob(model: FitnessModel, x):
    """mu(x, 1] for x in [0, 1)."""
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0) or np.any(xa >= 1) or np.any(np.isnan(xa)):
        raise ValueError("tail_prob needs x in [0, 1)")
    out = model.tail(xa)
    return float(out) if np.ndim(out) == 0 else out


def sample_fitness(model: FitnessModel, rng: np.random.Generator, size=None):
    """Draw fitness values by inverse-CDF sampling.

    Gumbel class: ``g(E)`` with ``E ~ Exp(1)``.  Weibull class: invert the
    tail at a uniform level (closed form when ``ell == 1``, bisection
    otherwise).
    """
    if model.is_gumbel:
        e = rng.standard_exponential(size)
        return model.g(e)
    u = 1.0 - rng.random(size)  # in (0, 1]
    return model.quantile_of_tail(u)


def expect(model: FitnessModel, h: Callable[[np.ndarray], np.ndarray], upper: float = 1.0) -> float:
    """Integral of ``h`` against ``mu`` restricted to ``[0, upper)``.

    Gumbel-class laws are integrated in the exponential variable
    ``y = m(x)`` so no density is needed.
    """
    if model.is_gumbel:
        with np.errstate(over="ignore"):
            ymax = float(model.m(upper)) if upper < 1.0 else np.inf
        ymax = min(ymax, 745.0)

        def integrand(y):
            return h(model.g(y)) * math.exp(-y)

        pts = [p for p in (1.0, 5.0, 20.0) if p < ymax]
        val, _ = integrate.quad(integrand, 0.0, ymax, points=pts or None, limit=400, epsabs=1e-13, epsrel=1e-12)
        return val

    def integrand_w(x):
        return h(x) * model.density(x)

    a = model.alpha
    if model.ell is None and upper >= 1.0 and a < 1.0:
        # integrable singularity of the density at one
        val, _ = integrate.quad(lambda x: h(x) * a, 0.0, 1.0, weight="alg", wvar=(0.0, a - 1.0), limit=400)
        return val
    if model.ell is None:
        # x = 1 - exp(-s/alpha) turns mu into the Exp(1) law in s
        def integrand_s(s):
            return h(-math.expm1(-s / a)) * math.exp(-s)

        smax = -a * math.log1p(-upper) if upper < 1.0 else math.inf
        val = 0.0
        edges = (0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0, math.inf)
        for lo, hi in zip(edges[:-1], edges[1:]):
            hi = min(hi, smax)
            if hi > lo:
                val += integrate.quad(integrand_s, lo, hi, limit=400, epsabs=1e-14, epsrel=1e-12)[0]
        return val
    val, _ = integrate.quad(integrand_w, 0.0, upper, limit=400, epsabs=1e-13, epsrel=1e-12)
    return val


@dataclass(frozen=True)
class KappaEstimate:
    value: float
    residual: float
    raw: tuple
    ok: bool

    def __float__(self):
        return self.value


def _kappa_ratio(model: FitnessModel, x):
    lm, l1, l2 = model.log_derivatives(x)
    return np.exp(l2 + lm - 2.0 * l1) * x


def _limit_values(fn, exponents=_LIMIT_EXPONENTS):
    xs = 1.0 - 10.0 ** -np.asarray(exponents, dtype=float)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return np.array([float(fn(x)) for x in xs])


def _extrapolate(seq):
    """Richardson extrapolation with an estimated geometric rate.

    Returns the limit estimate from the last three terms together with the
    change relative to the previous estimate.
    """
    seq = np.asarray(seq, dtype=float)
    ests = []
    for i in range(len(seq) - 2):
        a, b, c = seq[i:i + 3]
        d1, d2 = b - a, c - b
        if d1 == 0 or d2 == 0 or not np.isfinite(d1 * d2):
            ests.append(c)
            continue
        q = d2 / d1
        if not 0 < q < 1:
            ests.append(c)
            continue
        ests.append(c + d2 * q / (1.0 - q))
    last = ests[-1]
    resid = abs(ests[-1] - ests[-2]) if len(ests) > 1 else abs(seq[-1] - seq[-2])
    return last, resid


def kappa(model: FitnessModel) -> KappaEstimate:
    """Limit of ``m''(x) m(x) x / m'(x)**2`` as ``x -> 1``.

    Evaluated at ``x = 1 - 10**-k`` for ``k = 4..8`` and extrapolated.  The
    estimate is flagged ``ok=False`` when the raw values at ``k = 7, 8``
    differ by more than 10%.
    """
    if not model.is_gumbel:
        raise ValueError("kappa is defined for Gumbel-class models only")
    raw = _limit_values(lambda x: _kappa_ratio(model, x))
    value, resid = _extrapolate(raw)
    a, b = raw[-2], raw[-1]
    ok = bool(np.all(np.isfinite(raw)) and abs(b - a) <= 0.1 * abs(b) and value > 0)
    return KappaEstimate(value=float(value), residual=float(resid), raw=tuple(raw), ok=ok)


@dataclass
class A5Report:
    """Per-condition outcome of the numerical (A5) check."""

    model: str
    passed: dict
    values: dict
    kappa: Optional[KappaEstimate] = None

    @property
    def ok(self) -> bool:
        return all(self.passed.values())

    @property
    def failures(self) -> list[str]:
        return [k for k, v in self.passed.items() if not v]


def _tends_to_zero(vals) -> bool:
    vals = np.asarray(vals)
    if not np.all(np.isfinite(vals)) or np.any(vals < 0):
        return False
    decreasing = bool(np.all(np.diff(vals) <= 0))
    return decreasing and vals[-1] <= 0.1 * vals[0]


def check_a5(model: FitnessModel) -> A5Report:
    """Numerically test (A5.1)-(A5.4) on grids approaching one."""
    if not model.is_gumbel:
        raise ValueError("check_a5 applies to Gumbel-class models only")
    grid = np.concatenate([np.linspace(0.0, 0.99, 100), 1.0 - 10.0 ** -np.arange(3, 9, dtype=float)])
    _, l1, l2 = model.log_derivatives(grid)
    # m''(0) = 0 is allowed: strict convexity only needs m'' > 0 off a null set
    convex = np.isfinite(l2) | (grid == 0.0)
    bad = grid[~(np.isfinite(l1) & convex)]
    passed, values = {}, {}
    passed["A5.1"] = bad.size == 0
    values["A5.1"] = bad.tolist()

    def ratio2(x):
        _, a, b = model.log_derivatives(x)
        return np.exp(b - 2.0 * a)

    def ratio4(x):
        a, b, _ = model.log_derivatives(x)
        return np.exp(a - b)

    v2 = _limit_values(ratio2)
    passed["A5.2"] = bool(_tends_to_zero(v2))
    values["A5.2"] = v2.tolist()

    k = kappa(model)
    passed["A5.3"] = k.ok
    values["A5.3"] = list(k.raw)

    v4 = _limit_values(ratio4)
    passed["A5.4"] = bool(_tends_to_zero(v4))
    values["A5.4"] = v4.tolist()
    return A5Report(model=model.name, passed=passed, values=values, kappa=k)
