"""Preferential attachment with fitness and the disordered Chinese restaurant process."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numba import njit

from .engines import FamilyRecord, REBUILD_EVERY, _rebuild, simulate_rbp
from .fenwick import fw_add, fw_search
from .fitness import FitnessModel, sample_fitness
from .malthusian import OffspringLaw

__all__ = [
    "NetworkState",
    "CRPState",
    "simulate_bb_tree",
    "simulate_dereich",
    "dereich_step",
    "dereich_embedding_times",
    "simulate_crp",
    "bb_attachment_trials",
]


@dataclass
class NetworkState:
    """Vertices in arrival order; ``size`` is the degree (BB) or indegree (Dereich).

    Edges are stored aggregated as ``(source, target, multiplicity)`` with
    1-based vertex labels.
    """

    fitness: np.ndarray
    size: np.ndarray
    step: int
    edge_src: np.ndarray
    edge_dst: np.ndarray
    edge_mult: np.ndarray
    tau: Optional[np.ndarray] = None
    kind: str = "bb"
    meta: dict = field(default_factory=dict)

    @property
    def edge_count(self) -> int:
        return int(self.edge_mult.sum())

    @property
    def vertices(self) -> Sequence[FamilyRecord]:
        tau = self.tau if self.tau is not None else np.full(len(self.size), np.nan)
        return [FamilyRecord(k + 1, float(tau[k]), float(self.fitness[k]), int(self.size[k]))
                for k in range(len(self.size))]

    def edges_to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["from", "to", "multiplicity"])
            for a, b, c in zip(self.edge_src, self.edge_dst, self.edge_mult):
                w.writerow([int(a), int(b), int(c)])

    def vertices_to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["vertex_index", "tau", "fitness", "size"])
            tau = self.tau if self.tau is not None else [None] * len(self.size)
            for k in range(len(self.size)):
                tk = "" if tau[k] is None else repr(float(tau[k]))
                w.writerow([k + 1, tk, repr(float(self.fitness[k])), int(self.size[k])])


# ---------------------------------------------------------------------------
# Bianconi-Barabasi tree


@njit(cache=True)
def _bb_kernel(F, deg, parent, tree, rng, rebuild_every):
    n = F.shape[0]
    deg[0] = 1
    deg[1] = 1
    parent[1] = 0
    tree[:] = 0.0
    fw_add(tree, 0, F[0])
    fw_add(tree, 1, F[1])
    total = F[0] + F[1]
    since = 0
    for v in range(2, n):
        p = fw_search(tree, rng.random() * total, v)
        parent[v] = p
        deg[p] += 1
        fw_add(tree, p, F[p])
        deg[v] = 1
        fw_add(tree, v, F[v])
        total += F[p] + F[v]
        since += 1
        if since >= rebuild_every:
            total = _rebuild(deg, F, tree, v + 1)
            since = 0


def simulate_bb_tree(model: FitnessModel, n_vertices: int, rng: np.random.Generator, embed: bool = False,
                     capacity: int = 1024) -> NetworkState:
    """Bianconi-Barabasi tree on ``n_vertices`` vertices.

    The discrete chain starts from two joined vertices; vertex ``v`` attaches
    to ``p`` with probability proportional to ``F_p deg_p``.  With
    ``embed=True`` the tree is read off the reinforced branching process with
    ``p_11 = 1``, which also yields continuous birth times.  In that
    embedding the root family counts one more member than its degree, so the
    root attracts with weight ``F_1 (deg_1 + 1)``.
    """
    if n_vertices < 2:
        raise ValueError("n_vertices must be at least 2")
    if embed:
        snap, log = simulate_rbp(model, OffspringLaw.single(1, 1), rng, max_families=n_vertices,
                                 log_events=True, capacity=capacity)
        parent_of_new = log.family[: n_vertices - 1]  # event k founds vertex k + 2
        deg = snap.size.copy()
        deg[0] -= 1
        src = np.arange(2, n_vertices + 1, dtype=np.int64)
        return NetworkState(snap.fitness.copy(), deg, n_vertices, src, parent_of_new.astype(np.int64),
                            np.ones(n_vertices - 1, dtype=np.int64), tau=snap.tau.copy(), kind="bb",
                            meta={"embedded": True, "clock": snap.clock})
    F = np.asarray(sample_fitness(model, rng, n_vertices), dtype=float)
    deg = np.zeros(n_vertices, dtype=np.int64)
    parent = np.zeros(n_vertices, dtype=np.int64)
    tree = np.zeros(n_vertices + 1)
    _bb_kernel(F, deg, parent, tree, rng, REBUILD_EVERY)
    src = np.arange(2, n_vertices + 1, dtype=np.int64)
    return NetworkState(F, deg, n_vertices, src, parent[1:] + 1, np.ones(n_vertices - 1, dtype=np.int64),
                        kind="bb", meta={"embedded": False})


def bb_attachment_trials(fitness, degree, trials: int, rng: np.random.Generator) -> np.ndarray:
    """Parent chosen by one BB step from a frozen state, repeated ``trials`` times (0-based)."""
    F = np.asarray(fitness, dtype=float)
    d = np.asarray(degree, dtype=np.int64)
    tree = np.zeros(len(F) + 1)
    total = _rebuild(d, F, tree, len(F))
    return _frozen_trials(tree, total, len(F), trials, rng)


@njit(cache=True)
def _frozen_trials(tree, total, n, trials, rng):
    out = np.empty(trials, dtype=np.int64)
    for k in range(trials):
        out[k] = fw_search(tree, rng.random() * total, n)
    return out


# ---------------------------------------------------------------------------
# Dereich's network


@njit(cache=True)
def _grow(a, need):
    if need <= a.shape[0]:
        return a
    b = np.empty(max(need, 2 * a.shape[0]), dtype=a.dtype)
    b[: a.shape[0]] = a
    return b


@njit(cache=True)
def _dereich_draw(tree, W, m, beta, rng, targets, naive, F, Zp):
    """Edges from vertex m + 1 into the frozen graph on m vertices.

    Returns the edge count and the (possibly reallocated) target buffer.
    """
    if naive:
        K = 0
        for n in range(m):
            k = rng.poisson(beta * F[n] * Zp[n] / m)
            targets = _grow(targets, K + k)
            for _ in range(k):
                targets[K] = n
                K += 1
        return K, targets
    K = rng.poisson(beta * W / m)
    targets = _grow(targets, K)
    for k in range(K):
        targets[k] = fw_search(tree, rng.random() * W, m)
    return K, targets


@njit(cache=True)
def _dereich_kernel(F, Zp, tree, beta, rng, naive, rebuild_every):
    n = F.shape[0]
    tree[:] = 0.0
    Zp[0] = 1
    fw_add(tree, 0, F[0])
    W = F[0]
    E = 0
    since = 0
    targets = np.empty(64, dtype=np.int64)
    src = np.empty(1024, dtype=np.int64)
    dst = np.empty(1024, dtype=np.int64)
    for m in range(1, n):
        K, targets = _dereich_draw(tree, W, m, beta, rng, targets, naive, F, Zp)
        src = _grow(src, E + K)
        dst = _grow(dst, E + K)
        for k in range(K):
            v = targets[k]
            Zp[v] += 1
            fw_add(tree, v, F[v])
            W += F[v]
            src[E] = m
            dst[E] = v
            E += 1
        Zp[m] = 1
        fw_add(tree, m, F[m])
        W += F[m]
        since += K + 1
        if since >= rebuild_every:
            W = _rebuild(Zp, F, tree, m + 1)
            since = 0
    return src[:E], dst[:E]


def dereich_embedding_times(n_vertices: int, lam: float = 1.0) -> np.ndarray:
    """Deterministic birth times ``tau_n = (1/lam) sum_{i<n} 1/i``."""
    h = np.concatenate([[0.0], np.cumsum(1.0 / np.arange(1, n_vertices))])
    return h / lam


def simulate_dereich(model: FitnessModel, beta: float, n_vertices: int, rng: np.random.Generator,
                     method: str = "multinomial", lam: float = 1.0) -> NetworkState:
    """Dereich's multigraph after ``n_vertices`` arrivals.

    Vertex ``m + 1`` sends ``Poisson(beta F_n (1 + indeg_n) / m)`` edges to
    each earlier vertex n.  ``method="multinomial"`` draws the Poisson total
    ``beta W_m / m`` once and splits it over a frozen Fenwick tree;
    ``method="naive"`` draws one Poisson per vertex and serves as the oracle.
    """
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")
    if n_vertices < 1:
        raise ValueError("n_vertices must be positive")
    if method not in ("multinomial", "naive"):
        raise ValueError(f"unknown method {method!r}")
    F = np.asarray(sample_fitness(model, rng, n_vertices), dtype=float)
    Zp = np.zeros(n_vertices, dtype=np.int64)
    tree = np.zeros(n_vertices + 1)
    src, dst = _dereich_kernel(F, Zp, tree, float(beta), rng, method == "naive", REBUILD_EVERY)
    pairs = np.stack([src + 1, dst + 1], axis=1)
    if len(src):
        uniq, mult = np.unique(pairs, axis=0, return_counts=True)
    else:
        uniq, mult = np.zeros((0, 2), dtype=np.int64), np.zeros(0, dtype=np.int64)
    return NetworkState(F, Zp - 1, n_vertices, uniq[:, 0], uniq[:, 1], mult,
                        tau=dereich_embedding_times(n_vertices, lam), kind="dereich",
                        meta={"beta": beta, "method": method, "lam": lam})


@njit(cache=True)
def _dereich_step_trials(F, Zp, m, beta, trials, naive, rng):
    tree = np.zeros(m + 1)
    W = _rebuild(Zp, F, tree, m)
    counts = np.zeros((trials, m), dtype=np.int64)
    targets = np.empty(1024, dtype=np.int64)
    for r in range(trials):
        K, targets = _dereich_draw(tree, W, m, beta, rng, targets, naive, F, Zp)
        for k in range(K):
            counts[r, targets[k]] += 1
    return counts


def dereich_step(fitness, indegree, beta: float, trials: int, rng: np.random.Generator,
                 method: str = "multinomial") -> np.ndarray:
    """Per-vertex edge counts of one step from a frozen graph, ``trials`` times.

    The graph has ``m = len(fitness)`` vertices; the result has shape
    ``(trials, m)``.
    """
    F = np.asarray(fitness, dtype=float)
    Zp = np.asarray(indegree, dtype=np.int64) + 1
    return _dereich_step_trials(F, Zp, len(F), float(beta), int(trials), method == "naive", rng)


# ---------------------------------------------------------------------------
# disordered Chinese restaurant process


@dataclass
class CRPState:
    """Tables in opening order after ``n_customers`` arrivals."""

    weight: np.ndarray
    size: np.ndarray
    n_customers: int
    theta: float
    tau: Optional[np.ndarray] = None
    checkpoints: Optional[np.ndarray] = None
    checkpoint_ratio: Optional[np.ndarray] = None
    clock: Optional[float] = None  # arrival time of the last customer when embedded

    @property
    def table_count(self) -> int:
        return len(self.size)

    def top_ratio(self) -> float:
        if len(self.size) < 2:
            raise ValueError("need at least two tables")
        a, b = np.sort(self.size)[-2:]
        return float(b / a)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["table_index", "weight", "size", "tau_if_embedded"])
            for k in range(len(self.size)):
                tk = "" if self.tau is None else repr(float(self.tau[k]))
                w.writerow([k + 1, repr(float(self.weight[k])), int(self.size[k]), tk])


@njit(cache=True)
def _crp_kernel(Wpool, Z, W, tau, tree, n_customers, theta, embed, checkpoints, cp_ratio, rng, rebuild_every):
    W[0] = Wpool[0]
    Z[0] = 1
    tau[0] = 0.0
    k = 1
    pos = 1
    tree[:] = 0.0
    fw_add(tree, 0, W[0])
    S = W[0]
    clock = 0.0
    top1 = 1
    top2 = 0
    ci = 0
    since = 0
    ncp = checkpoints.shape[0]
    while ci < ncp and checkpoints[ci] <= 1:
        cp_ratio[ci] = np.inf
        ci += 1
    for n in range(1, n_customers):
        if embed:
            clock += rng.standard_exponential() / (n + theta)
        u = rng.random() * (n + theta)
        if u < S:
            j = fw_search(tree, u, k)
            Z[j] += 1
            fw_add(tree, j, W[j])
            S += W[j]
            z = Z[j]
        else:
            j = k
            W[j] = Wpool[pos]
            pos += 1
            Z[j] = 1
            tau[j] = clock
            fw_add(tree, j, W[j])
            S += W[j]
            k += 1
            z = 1
        # one table grows from z - 1 to z, so the two largest values move by at most one
        if z - 1 == top1:
            top1 = z
        elif z - 1 == top2:
            top2 = z
        since += 1
        if since >= rebuild_every:
            S = _rebuild(Z, W, tree, k)
            since = 0
        while ci < ncp and checkpoints[ci] == n + 1:
            cp_ratio[ci] = top1 / top2 if top2 > 0 else np.inf
            ci += 1
    return k, clock


def simulate_crp(model: FitnessModel, theta: float, n_customers: int, rng: np.random.Generator,
                 embed: bool = False, fixed_weight: Optional[float] = None,
                 checkpoints: Optional[Sequence[int]] = None) -> CRPState:
    """Disordered Chinese restaurant process.

    Customer ``n + 1`` joins table j with probability ``Z_j W_j / (n + theta)``
    and otherwise opens a table with a fresh weight from ``model``.  With
    ``embed=True`` arrival times ``T_(n+1) - T_n ~ Exp(n + theta)`` are drawn
    too and ``tau`` holds the table opening times.  ``fixed_weight`` replaces
    every weight by a constant (1 gives the classical process).
    ``checkpoints`` lists customer counts at which the ratio of the two
    largest tables is recorded.
    """
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    if n_customers < 1:
        raise ValueError("n_customers must be positive")
    if fixed_weight is None:
        Wpool = np.asarray(sample_fitness(model, rng, n_customers), dtype=float)
        if np.any((Wpool <= 0) | (Wpool >= 1)):
            raise ValueError("table weights must lie in (0, 1)")
    else:
        if not 0.0 < fixed_weight <= 1.0:
            raise ValueError("fixed_weight must lie in (0, 1]")
        Wpool = np.full(n_customers, float(fixed_weight))
    Z = np.zeros(n_customers, dtype=np.int64)
    W = np.zeros(n_customers)
    tau = np.zeros(n_customers)
    tree = np.zeros(n_customers + 1)
    cps = np.sort(np.asarray(checkpoints if checkpoints is not None else [], dtype=np.int64))
    if len(cps) and (cps[0] < 1 or cps[-1] > n_customers):
        raise ValueError("checkpoints must lie in [1, n_customers]")
    cp_ratio = np.full(len(cps), np.nan)
    k, clock = _crp_kernel(Wpool, Z, W, tau, tree, int(n_customers), float(theta), bool(embed), cps, cp_ratio, rng,
                    REBUILD_EVERY)
    return CRPState(W[:k].copy(), Z[:k].copy(), int(n_customers), float(theta),
                    tau=tau[:k].copy() if embed else None,
                    checkpoints=cps if len(cps) else None,
                    checkpoint_ratio=cp_ratio if len(cps) else None,
                    clock=float(clock) if embed else None)
