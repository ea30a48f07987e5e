"""Rescaling into point-process coordinates, extremal observables and limit-law checks."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, asdict
from typing import Callable, Iterable, Mapping, NamedTuple, Optional, Sequence

import numpy as np
from numba import njit
from scipy import special

from .engines import simulate_ct_gw
from .fitness import FitnessModel
from .scaling import ScalingBundle

__all__ = [
    "RescaledPoint",
    "RescaledCloud",
    "ReplicateSummary",
    "InsufficientReplicates",
    "gumbel_log_prefactor",
    "weibull_log_prefactor",
    "rescale_gumbel",
    "rescale_weibull",
    "extract_extremes",
    "toy_model_oracle",
    "ToySample",
    "frechet_cdf",
    "frechet_quantile",
    "gaussian_cdf",
    "gamma_cdf",
    "exp_cdf",
    "gumbel_cdf",
    "ks_distance",
    "validate_limits",
    "estimate_xi_moment",
]


class RescaledPoint(NamedTuple):
    s: float
    f: float
    z: float


@dataclass
class RescaledCloud:
    """Columns of rescaled points, one row per family in birth order."""

    s: np.ndarray
    f: np.ndarray
    z: np.ndarray

    def __len__(self):
        return len(self.s)

    def __getitem__(self, k) -> RescaledPoint:
        return RescaledPoint(float(self.s[k]), float(self.f[k]), float(self.z[k]))

    def __iter__(self):
        return (self[k] for k in range(len(self)))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "f", "z"])
            for k in range(len(self.s)):
                w.writerow([repr(float(self.s[k])), repr(float(self.f[k])), repr(float(self.z[k]))])


def _columns(snapshot):
    tau = np.asarray(snapshot.tau, dtype=float)
    fit = np.asarray(snapshot.fitness, dtype=float)
    size = np.asarray(snapshot.size, dtype=float)
    return tau, fit, size


def gumbel_log_prefactor(model: FitnessModel, bundle: ScalingBundle, t: float, T_hat: float) -> float:
    """``-gamma g(lam sigma)(t - sigma) - a1 g(lam sigma) log sigma + gamma T``."""
    sig = bundle.sigma_t
    gs = float(model.g(bundle.lam * sig))
    return -bundle.gamma * gs * (t - sig) - bundle.a1 * gs * math.log(sig) + bundle.gamma * T_hat


def weibull_log_prefactor(gamma: float, sigma_t: float, t: float) -> float:
    return -gamma * (t - sigma_t)


def rescale_gumbel(snapshot, model: FitnessModel, bundle: ScalingBundle, T_hat: float,
                   t: Optional[float] = None) -> RescaledCloud:
    """Gumbel-case coordinates of every family.

    ``s = (tau_n - sigma)/sqrt(sigma)``, ``f = (F_n - g(y_n))/g'(y_n)`` with
    ``y_n = log(n sqrt(sigma))``, and ``z`` is the size times the common
    prefactor from :func:`gumbel_log_prefactor`.
    """
    t = float(snapshot.clock if t is None else t)
    tau, fit, size = _columns(snapshot)
    sig = bundle.sigma_t
    n = np.arange(1, len(tau) + 1, dtype=float)
    y = np.log(n * math.sqrt(sig))
    s = (tau - sig) / math.sqrt(sig)
    f = (fit - model.g(y)) / model.g1(y)
    z = size * math.exp(gumbel_log_prefactor(model, bundle, t, T_hat))
    return RescaledCloud(s, np.asarray(f, dtype=float), z)


def rescale_weibull(snapshot, alpha: float, gamma: float, sigma_t: float, t: Optional[float] = None) -> RescaledCloud:
    """Weibull-case coordinates ``(tau_n - sigma, t(1 - F_n), e^(-gamma(t - sigma)) Z_n)``.

    ``sigma_t`` should already include the random offset T.  ``alpha`` is
    carried for provenance; the map itself does not depend on it.
    """
    t = float(snapshot.clock if t is None else t)
    tau, fit, size = _columns(snapshot)
    return RescaledCloud(tau - sigma_t, t * (1.0 - fit), size * math.exp(weibull_log_prefactor(gamma, sigma_t, t)))


def extract_extremes(snapshot_or_sizes) -> tuple[int, float]:
    """1-based index of the largest family and the ratio of the two largest sizes.

    Ties go to the smaller index.
    """
    obj = snapshot_or_sizes
    if not isinstance(obj, (np.ndarray, list, tuple)):
        obj = obj.size
    size = np.asarray(obj, dtype=float)
    if size.ndim != 1 or len(size) < 2:
        raise ValueError("need at least two families")
    k = int(np.argmax(size))  # first occurrence
    top = size[k]
    rest = np.delete(size, k)
    second = rest.max()
    ratio = float(top / second) if second > 0 else math.inf
    return k + 1, ratio


# ---------------------------------------------------------------------------
# toy model


@njit(cache=True)
def _toy_kernel(alpha, lam, t, nmax, rng):
    # returns best, best_n, best_f, second, scanned, exact
    best = -np.inf
    second = -np.inf
    best_n = 0
    best_f = np.nan
    n = 1
    while n <= nmax:
        room = t - math.log(n) / lam
        if room <= second:
            # F <= 1, so no later family can overtake either of the top two
            return best, best_n, best_f, second, n - 1, True
        u = 1.0 - rng.random()
        f = 1.0 - u ** (1.0 / alpha)
        v = room * f
        if v > best:
            second = best
            best = v
            best_n = n
            best_f = f
        elif v > second:
            second = v
        n += 1
    room = t - math.log(n) / lam
    return best, best_n, best_f, second, nmax, room <= second


@dataclass
class ToySample:
    """Rescaled log-maxima of the warm-up model.

    ``log_max`` holds ``log(W)`` for the rescaled maximum W; ``exact`` marks
    replicates whose maximum provably does not depend on the truncation.
    """

    log_max: np.ndarray
    argmax: np.ndarray
    argmax_fitness: np.ndarray
    log_ratio: np.ndarray
    scanned: np.ndarray
    exact: np.ndarray
    truncation: int
    bound: float

    @property
    def rescaled_max(self) -> np.ndarray:
        return np.exp(self.log_max)

    @property
    def top_ratio(self) -> np.ndarray:
        return np.exp(self.log_ratio)


def toy_model_oracle(alpha: float, lam: float, t: float, c: float, rng: np.random.Generator,
                     replicates: int = 1) -> ToySample:
    """Sample the rescaled maximum of ``Z_n(t) = exp((t - tau_n) F_n)``, ``tau_n = log(n)/lam``.

    Fitness is ``F = 1 - U^(1/alpha)``, so ``P(F > 1 - x) = x^alpha``.
    Families with ``n > t^(c alpha)`` are never drawn.  The scan also stops
    as soon as ``t - log(n)/lam`` drops below the running second-largest
    log-size, since no later family can then enter the top two; such
    replicates are flagged exact.

    ``bound`` is ``t - c (alpha/lam) log t``, the largest log-size any
    excluded family could reach.
    """
    if c < 3:
        raise ValueError("truncation multiplier c must be at least 3")
    nmax = int(min(math.floor(t ** (c * alpha)), np.iinfo(np.int64).max // 2))
    shift = -t + (alpha * math.log(lam * t) - math.lgamma(alpha + 1.0)) / lam
    out = np.empty(replicates)
    arg = np.empty(replicates, dtype=np.int64)
    fit = np.empty(replicates)
    lr = np.empty(replicates)
    scanned = np.empty(replicates, dtype=np.int64)
    exact = np.empty(replicates, dtype=bool)
    for r in range(replicates):
        best, bn, bf, sec, sc, ex = _toy_kernel(float(alpha), float(lam), float(t), nmax, rng)
        out[r] = best + shift
        arg[r], fit[r], lr[r], scanned[r], exact[r] = bn, bf, best - sec, sc, ex
    return ToySample(out, arg, fit, lr, scanned, exact, nmax, t - c * alpha / lam * math.log(t))


# ---------------------------------------------------------------------------
# reference laws


def _check_pos(**kw):
    for k, v in kw.items():
        if not v > 0:
            raise ValueError(f"{k} must be positive, got {v!r}")


def frechet_cdf(x, shape: float, scale: float):
    _check_pos(shape=shape, scale=scale)
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(x > 0, np.exp(-np.power(np.maximum(x, 0.0) / scale, -shape)), 0.0)


def frechet_quantile(p, shape: float, scale: float):
    _check_pos(shape=shape, scale=scale)
    p = np.asarray(p, dtype=float)
    return scale * np.power(-np.log(p), -1.0 / shape)


def gumbel_cdf(y, loc: float = 0.0, scale: float = 1.0):
    """``exp(-exp(-(y - loc)/scale))``; ``log W`` for W Frechet(shape, s) has loc log s, scale 1/shape."""
    _check_pos(scale=scale)
    y = np.asarray(y, dtype=float)
    return np.exp(-np.exp(-(y - loc) / scale))


def gaussian_cdf(x, mean: float = 0.0, var: float = 1.0):
    _check_pos(var=var)
    return special.ndtr((np.asarray(x, dtype=float) - mean) / math.sqrt(var))


def gamma_cdf(x, shape: float, rate: float):
    _check_pos(shape=shape, rate=rate)
    x = np.asarray(x, dtype=float)
    return special.gammainc(shape, rate * np.maximum(x, 0.0))


def exp_cdf(x, rate: float = 1.0):
    _check_pos(rate=rate)
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, -np.expm1(-rate * np.maximum(x, 0.0)), 0.0)


def ks_distance(samples, cdf: Callable, cdf_left: Optional[Callable] = None) -> float:
    """Exact Kolmogorov distance between the empirical law of ``samples`` and ``cdf``.

    Ties are handled by evaluating at distinct values; ``cdf_left`` gives
    ``F(x-)`` for a reference law with atoms (defaults to ``cdf``).
    """
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = len(x)
    if n == 0:
        raise ValueError("empty sample")
    vals, first = np.unique(x, return_index=True)
    last = np.append(first[1:], n)  # ECDF(v) = last/n, ECDF(v-) = first/n
    F = np.asarray(cdf(vals), dtype=float)
    Fl = F if cdf_left is None else np.asarray(cdf_left(vals), dtype=float)
    return float(max(np.max(last / n - F), np.max(Fl - first / n), 0.0))


# ---------------------------------------------------------------------------
# replicate summaries and validation


@dataclass
class ReplicateSummary:
    max_size_rescaled: float
    argmax_fitness: float
    argmax_birth_rescaled: float
    top_ratio: float
    t: float
    T_hat: float
    n: float = float("nan")  # arrival count for discrete-step models

    def __post_init__(self):
        # NaN marks an observable the model does not define (e.g. no birth times)
        if not (self.top_ratio >= 1.0 or math.isnan(self.top_ratio)):
            raise ValueError("top_ratio must be at least 1")
        if not (self.max_size_rescaled > 0 or math.isnan(self.max_size_rescaled)):
            raise ValueError("max_size_rescaled must be positive")


class InsufficientReplicates(ValueError):
    pass


def _entry(law, n, ks, threshold, params):
    return {"law": law, "n_replicates": int(n), "ks": float(ks), "threshold": float(threshold),
            "pass": bool(ks <= threshold), "params": params}


def validate_limits(summaries: Sequence[ReplicateSummary], bundle: ScalingBundle, case: str,
                    threshold: float = 0.05, ratio_grid: Iterable[float] = (1.5, 2.0, 3.0, 4.0),
                    ratio_tolerance: float = 0.05, min_replicates: int = 100,
                    laws: Optional[Sequence[str]] = None) -> list[dict]:
    """Compare replicate summaries with the predicted limit laws.

    Entries: the rescaled maximum against Frechet(lam/gam, s) on the log
    scale; in the Gumbel case the rescaled birth time of the maximal family
    against N(0, 1/(lam kappa)); in the Weibull case ``t(1 - V)`` against
    Gamma(alpha, rate lam); and the ratio law ``P(R >= x) = 1/x``.  ``laws``
    restricts the list by name.
    """
    if case not in ("gumbel", "weibull"):
        raise ValueError("case must be 'gumbel' or 'weibull'")
    n = len(summaries)
    if n < min_replicates:
        raise InsufficientReplicates(f"{n} replicates, need at least {min_replicates}")
    mx = np.array([r.max_size_rescaled for r in summaries])
    out = []
    want = set(laws) if laws is not None else None

    def use(name):
        return want is None or name in want

    shape, scale = bundle.frechet_shape, bundle.frechet_scale
    if use("frechet"):
        ks = ks_distance(np.log(mx), lambda y: gumbel_cdf(y, math.log(scale), 1.0 / shape))
        out.append(_entry("frechet", n, ks, threshold, {"shape": shape, "scale": scale, "scale_space": "log"}))
    if case == "gumbel" and use("gaussian"):
        var = 1.0 / (bundle.lam * bundle.kappa)
        s = np.array([r.argmax_birth_rescaled for r in summaries])
        ks = ks_distance(s, lambda x: gaussian_cdf(x, 0.0, var))
        out.append(_entry("gaussian", n, ks, threshold, {"mean": 0.0, "var": var}))
    if case == "weibull" and use("gamma"):
        v = np.array([r.t * (1.0 - r.argmax_fitness) for r in summaries])
        ks = ks_distance(v, lambda x: gamma_cdf(x, bundle.alpha, bundle.lam))
        out.append(_entry("gamma", n, ks, threshold, {"shape": bundle.alpha, "rate": bundle.lam}))
    if use("ratio"):
        r = np.array([s.top_ratio for s in summaries])
        grid = [float(x) for x in ratio_grid]
        emp = {x: float(np.mean(r >= x)) for x in grid}
        dev = max(abs(emp[x] - 1.0 / x) for x in grid)
        out.append(_entry("ratio", n, dev, ratio_tolerance,
                          {"x": grid, "empirical": [emp[x] for x in grid], "target": [1.0 / x for x in grid]}))
    return out


def estimate_xi_moment(offspring: Mapping[int, float], gamma_rate: float, p: float, rng: np.random.Generator,
                       u: float = 8.0, replicates: int = 10_000) -> float:
    """Monte Carlo ``E[xi^p]`` with ``xi ~ e^(-gam s) Y(s)`` for a Galton-Watson clock.

    ``gam = gamma_rate * sum_k k p_k`` is the mean growth rate and each path
    runs until ``gam s = u``; the martingale is then within about
    ``e^(-u/2)`` of its limit.  The pure Yule case has the closed form
    ``Gamma(1 + p)`` and should use it instead.
    """
    m = sum(k * q for k, q in offspring.items())
    if m <= 0:
        raise ValueError("offspring law has zero mean")
    gam = gamma_rate * m
    vals = np.empty(replicates)
    for r in range(replicates):
        _, sizes = simulate_ct_gw(offspring, gamma_rate, u / gam, rng)
        vals[r] = sizes[-1] * math.exp(-u)
    return float(np.mean(vals**p))
