"""Malthusian parameters for the reinforced branching family of models."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np
from scipy.integrate import IntegrationWarning
from scipy.optimize import brentq
from scipy.special import comb, roots_legendre

from .fitness import FitnessModel, expect

__all__ = [
    "OffspringLaw",
    "NoMalthusianRoot",
    "MalthusResult",
    "thinned_law",
    "malthusian_rbp",
    "malthusian_selection_mutation",
    "malthusian_bb",
    "malthusian_crp",
    "rbp_integral",
    "reference_integral",
]

EXISTENCE_CUTOFF = 1.0 - 1e-10


class NoMalthusianRoot(ValueError):
    """The existence condition fails, so the defining equation has no root."""


@dataclass(frozen=True)
class OffspringLaw:
    """Joint law of (same-family offspring i, new families j) per event.

    ``table`` maps ``(i, j)`` to a probability.  Either marginal mean may be
    zero; the degenerate cases are used as test reductions.
    """

    table: Mapping[tuple[int, int], float]

    def __post_init__(self):
        tab = {}
        for (i, j), p in dict(self.table).items():
            i, j, p = int(i), int(j), float(p)
            if i < 0 or j < 0:
                raise ValueError("offspring counts must be nonnegative")
            if p < 0:
                raise ValueError("probabilities must be nonnegative")
            if p > 0:
                tab[(i, j)] = tab.get((i, j), 0.0) + p
        if tab.get((0, 0), 0.0) > 0:
            raise ValueError("p_00 must be zero")
        if abs(sum(tab.values()) - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {sum(tab.values())!r}, not 1")
        object.__setattr__(self, "table", tab)

    @classmethod
    def single(cls, i: int, j: int) -> "OffspringLaw":
        return cls({(i, j): 1.0})

    @property
    def m1(self) -> float:
        return sum(i * p for (i, _), p in self.table.items())

    @property
    def m2(self) -> float:
        return sum(j * p for (_, j), p in self.table.items())

    def arrays(self):
        """``(i, j, cumulative p)`` arrays in a fixed order, for samplers."""
        keys = sorted(self.table)
        i = np.array([k[0] for k in keys], dtype=np.int64)
        j = np.array([k[1] for k in keys], dtype=np.int64)
        cp = np.cumsum([self.table[k] for k in keys])
        cp[-1] = 1.0
        return i, j, cp

    def first_marginal(self) -> dict[int, float]:
        out: dict[int, float] = {}
        for (i, _), p in self.table.items():
            out[i] = out.get(i, 0.0) + p
        return out


def thinned_law(offspring: Mapping[int, float], beta: float) -> OffspringLaw:
    """Each of k offspring independently founds a new family with probability beta.

    ``p_ij = p_(i+j) C(i+j, i) (1 - beta)^i beta^j``.
    """
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    tab = {}
    for k, pk in offspring.items():
        k = int(k)
        if k <= 0 and pk > 0:
            raise ValueError("offspring counts must be positive")
        for i in range(k + 1):
            j = k - i
            p = pk * comb(k, i, exact=True) * (1.0 - beta) ** i * beta**j
            if p > 0:
                tab[(i, j)] = p
    s = sum(tab.values())
    return OffspringLaw({key: p / s for key, p in tab.items()})


def rbp_integral(model: FitnessModel, lam: float, m1: float, m2: float) -> float:
    """``m2 * integral f / (lam - m1 f) dmu(f)``."""
    return m2 * expect(model, lambda f: f / (lam - m1 * f))


def reference_integral(model: FitnessModel, lam: float, m1: float, m2: float, panels: int = 64,
                       order: int = 20) -> float:
    """Same integral by an independent route: composite Gauss-Legendre over the tail quantile.

    With ``U`` uniform, ``quantile_of_tail(U)`` has law mu, so the integral
    equals the mean of a bounded function on (0, 1).
    """
    u, w = roots_legendre(order)
    # quantiles approach 1 only logarithmically as U -> 0, so grade the mesh there
    graded = np.geomspace(1e-18, 1.0 / panels, 40)[:-1]
    edges = np.concatenate(([0.0], graded, np.linspace(1.0 / panels, 1.0, panels)))
    h = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + h[:, None] * u[None, :]).ravel()
    weights = (h[:, None] * w[None, :]).ravel()
    f = np.asarray(model.quantile_of_tail(nodes), dtype=float)
    return float(m2 * np.sum(weights * f / (lam - m1 * f)))


@dataclass(frozen=True)
class MalthusResult:
    lam: float
    residual: float
    condition_value: float
    condition_diverges: bool

    def __float__(self):
        return self.lam


def _existence_value(model: FitnessModel) -> tuple[float, bool]:
    """Truncated ``integral f/(1-f) dmu`` and whether it looks divergent.

    The integral is taken up to ``1 - 1e-6``, ``1 - 1e-8`` and ``1 - 1e-10``.
    A convergent tail gains geometrically less per two decades; a gain
    that does not shrink flags divergence.
    """
    vals = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        for cut in (1.0 - 1e-6, 1.0 - 1e-8, EXISTENCE_CUTOFF):
            vals.append(expect(model, lambda f: f / (1.0 - f), upper=cut))
    g1, g2 = vals[1] - vals[0], vals[2] - vals[1]
    diverges = g2 > 0.8 * g1 and g2 > 1e-9 * max(vals[2], 1.0)
    return vals[2], diverges


def _solve(model: FitnessModel, m1: float, m2: float, full_output: bool):
    if m2 <= 0:
        raise NoMalthusianRoot("m2 = 0: no new families are ever created")
    cond, diverges = _existence_value(model)
    if m1 > 0 and not diverges and not m2 * cond > m1:
        raise NoMalthusianRoot(
            f"existence condition fails: m2 * integral f/(1-f) dmu = {m2 * cond:.12g} <= m1 = {m1:.12g}"
        )
    lo = m1 * (1.0 + 1e-9) if m1 > 0 else 1e-12
    phi = lambda lam: rbp_integral(model, lam, m1, m2) - 1.0
    with warnings.catch_warnings():
        # near lam = m1 the integrand is a steep step; quad may flag roundoff while still
        # meeting the residual bound checked below
        warnings.simplefilter("ignore", IntegrationWarning)
        flo = phi(lo)
        # a divergent condition integral can put the root closer to m1 than the default bracket
        for rel in (1e-12, 1e-15):
            if flo > 0 or not diverges or m1 <= 0:
                break
            lo = m1 * (1.0 + rel)
            flo = phi(lo)
        if not flo > 0:
            raise NoMalthusianRoot(f"integral at the lower bracket is {flo + 1.0:.12g} <= 1")
        # integrand bounded by 1/(lam - m1), so lam = m1 + m2 already brackets the root
        hi = m1 + max(m2, 1e-12)
        while phi(hi) > 0:
            hi = m1 + 2.0 * (hi - m1)
        lam = brentq(phi, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
        res = abs(phi(lam))
    if res > 1e-8:
        raise RuntimeError(f"root residual {res:.3g} exceeds 1e-8; lam - m1 = {lam - m1:.3g} is below "
                           "what double precision resolves")
    if full_output:
        return MalthusResult(lam=lam, residual=res, condition_value=m2 * cond, condition_diverges=diverges)
    return lam


def malthusian_rbp(model: FitnessModel, law: OffspringLaw, full_output: bool = False):
    """Root of ``m2 * integral f / (lam - f m1) dmu(f) = 1`` with ``lam > m1``."""
    return _solve(model, law.m1, law.m2, full_output)


def malthusian_selection_mutation(model: FitnessModel, beta: float, mean_offspring: float,
                                  full_output: bool = False):
    """Root of ``beta m integral x / (lam - (1 - beta) m x) dmu(x) = 1``."""
    if not 0.0 < beta <= 1.0:
        raise ValueError("beta must lie in (0, 1]")
    if mean_offspring <= 0:
        raise ValueError("mean_offspring must be positive")
    return _solve(model, (1.0 - beta) * mean_offspring, beta * mean_offspring, full_output)


def malthusian_bb(model: FitnessModel, full_output: bool = False):
    """Root of ``integral x / (lam - x) dmu(x) = 1`` with ``lam > 1``."""
    return _solve(model, 1.0, 1.0, full_output)


def malthusian_crp(model: Optional[FitnessModel] = None, full_output: bool = False):
    """Returns 1; with a model, also checks ``integral (1 - w)/(1 - w) dmu = 1``."""
    if model is None:
        return (1.0, 0.0) if full_output else 1.0

    def ratio(w):
        d = 1.0 - np.asarray(w, dtype=float)
        # w rounds to 1 far in the tail; the ratio is 1 there by continuity
        return np.divide(d, d, out=np.ones_like(d), where=d > 0)

    val = expect(model, ratio)
    res = abs(val - 1.0)
    if res > 1e-10:
        raise RuntimeError(f"identity residual {res:.3g} exceeds 1e-10")
    return (1.0, res) if full_output else 1.0
