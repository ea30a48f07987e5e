"""Event-driven samplers for Yule, Galton-Watson and reinforced branching populations.

All kernels take a :class:`numpy.random.Generator` and are compiled with
numba.  Every kernel checks its buffers *before* touching the generator, so
when it returns to Python to grow an array the random stream is unaffected
and a run is reproducible from its seed alone.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

import numpy as np
from numba import njit

from .fenwick import fw_add, fw_search
from .fitness import FitnessModel, sample_fitness
from .malthusian import OffspringLaw, thinned_law

__all__ = [
    "SizeCapExceeded",
    "RateUnderflow",
    "FamilyRecord",
    "PopulationSnapshot",
    "EventLog",
    "ExtremeSummary",
    "simulate_yule",
    "simulate_ct_gw",
    "simulate_rbp",
    "simulate_selection_mutation",
    "rbp_extremes",
    "estimate_T",
    "DEFAULT_MAX_POPULATION",
    "REBUILD_EVERY",
]

DEFAULT_MAX_POPULATION = 10**7
DEFAULT_SIZE_CAP = 10**8
REBUILD_EVERY = 1 << 20
POOL_CHUNK = 1 << 16

# kernel status codes
_STOP_T, _STOP_POP, _STOP_FAM, _NEED_CAP, _NEED_POOL, _NEED_LOG, _ZERO_RATE, _STOP_EVENTS = range(8)
_STOP_NAMES = {_STOP_T: "t_end", _STOP_POP: "max_population", _STOP_FAM: "max_families",
               _STOP_EVENTS: "max_events"}


class SizeCapExceeded(RuntimeError):
    pass


class RateUnderflow(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# single processes


@njit(cache=True)
def _ct_gw_kernel(rate, jumps, cum, t_end, cap, rng):
    times = np.empty(1024)
    sizes = np.empty(1024, dtype=np.int64)
    times[0] = 0.0
    sizes[0] = 1
    n = 1
    k = 1
    t = 0.0
    nj = cum.shape[0]
    while True:
        t += rng.standard_exponential() / (k * rate)
        if t > t_end:
            break
        u = rng.random()
        c = 0
        while c < nj - 1 and cum[c] <= u:
            c += 1
        k += jumps[c]
        if k > cap:
            return times[:n], sizes[:n], False
        if n == times.shape[0]:
            t2 = np.empty(2 * n)
            s2 = np.empty(2 * n, dtype=np.int64)
            t2[:n] = times
            s2[:n] = sizes
            times = t2
            sizes = s2
        times[n] = t
        sizes[n] = k
        n += 1
    return times[:n], sizes[:n], True


def simulate_ct_gw(law: Mapping[int, float], gamma_rate: float, t_end: float, rng: np.random.Generator,
                   size_cap: int = DEFAULT_SIZE_CAP):
    """Continuous-time Galton-Watson path started from one individual.

    In state k the next event comes at rate ``k * gamma_rate`` and adds J
    individuals, J drawn from ``law`` (J = 0 allowed).

    Returns
    -------
    times, sizes : ndarray
        Event times (starting with 0) and the size just after each event.
    """
    if gamma_rate <= 0 or t_end <= 0:
        raise ValueError("gamma_rate and t_end must be positive")
    keys = sorted(int(k) for k in law)
    if keys[0] < 0:
        raise ValueError("offspring counts must be nonnegative")
    probs = np.array([law[k] for k in keys], dtype=float)
    if abs(probs.sum() - 1.0) > 1e-12:
        raise ValueError("offspring law does not sum to one")
    cum = np.cumsum(probs)
    cum[-1] = 1.0
    times, sizes, ok = _ct_gw_kernel(float(gamma_rate), np.array(keys, dtype=np.int64), cum,
                                     float(t_end), int(size_cap), rng)
    if not ok:
        raise SizeCapExceeded(f"size exceeded {size_cap}")
    return times, sizes


def simulate_yule(gamma: float, t_end: float, rng: np.random.Generator, size_cap: int = DEFAULT_SIZE_CAP):
    """Yule process of rate ``gamma`` on ``[0, t_end]`` started from one individual.

    Returns the jump times (with 0 prepended) and the sizes after each jump,
    so ``sizes[-1]`` is ``Y(t_end)``.
    """
    return simulate_ct_gw({1: 1.0}, gamma, t_end, rng, size_cap)


# ---------------------------------------------------------------------------
# reinforced branching process


@njit(cache=True)
def _rebuild(Z, F, tree, n):
    size = tree.shape[0] - 1
    for k in range(size + 1):
        tree[k] = 0.0
    total = 0.0
    for k in range(n):
        w = Z[k] * F[k]
        tree[k + 1] = w
        total += w
    for k in range(1, size + 1):
        parent = k + (k & -k)
        if parent <= size:
            tree[parent] += tree[k]
    return total


@njit(cache=True)
def _rbp_kernel(fstate, istate, Z, F, tau, tree, pool, law_i, law_j, law_cp, max_j,
                log_t, log_fam, log_i, log_j, log_on, rng, rebuild_every):
    # fstate: clock, total_rate, t_end
    # istate: M, N, events, pool_pos, log_len, max_pop, max_fam, since_rebuild, max_events
    clock = fstate[0]
    total = fstate[1]
    t_end = fstate[2]
    M = istate[0]
    N = istate[1]
    events = istate[2]
    pos = istate[3]
    log_len = istate[4]
    max_pop = istate[5]
    max_fam = istate[6]
    since = istate[7]
    max_events = istate[8]
    cap = Z.shape[0]
    npool = pool.shape[0]
    nlaw = law_cp.shape[0]
    status = _STOP_T
    while True:
        if N >= max_pop:
            status = _STOP_POP
            break
        if M >= max_fam:
            status = _STOP_FAM
            break
        if events >= max_events:
            status = _STOP_EVENTS
            break
        if M + max_j > cap:
            status = _NEED_CAP
            break
        if pos + max_j > npool:
            status = _NEED_POOL
            break
        if log_on and log_len >= log_t.shape[0]:
            status = _NEED_LOG
            break
        if not total > 0.0:
            status = _ZERO_RATE
            break
        dt = rng.standard_exponential() / total
        if clock + dt > t_end:
            clock = t_end
            status = _STOP_T
            break
        clock += dt
        n = fw_search(tree, rng.random() * total, M)
        v = rng.random()
        c = 0
        while c < nlaw - 1 and law_cp[c] <= v:
            c += 1
        di = law_i[c]
        dj = law_j[c]
        if di > 0:
            Z[n] += di
            w = di * F[n]
            fw_add(tree, n, w)
            total += w
            N += di
        for _ in range(dj):
            f = pool[pos]
            pos += 1
            F[M] = f
            Z[M] = 1
            tau[M] = clock
            fw_add(tree, M, f)
            total += f
            M += 1
            N += 1
        if log_on:
            log_t[log_len] = clock
            log_fam[log_len] = n
            log_i[log_len] = di
            log_j[log_len] = dj
            log_len += 1
        events += 1
        since += 1
        if since >= rebuild_every:
            total = _rebuild(Z, F, tree, M)
            since = 0
    fstate[0] = clock
    fstate[1] = total
    istate[0] = M
    istate[1] = N
    istate[2] = events
    istate[3] = pos
    istate[4] = log_len
    istate[7] = since
    return status


@dataclass(frozen=True)
class FamilyRecord:
    index: int
    tau: float
    fitness: float
    size: int


@dataclass
class EventLog:
    """One row per event; ``family`` is the 1-based index of the chosen family."""

    time: np.ndarray
    family: np.ndarray
    delta_same_family: np.ndarray
    new_families: np.ndarray

    def __len__(self):
        return len(self.time)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["event_index", "time", "family_index", "delta_same_family", "new_families"])
            for k in range(len(self.time)):
                w.writerow([k + 1, repr(float(self.time[k])), int(self.family[k]),
                            int(self.delta_same_family[k]), int(self.new_families[k])])


@dataclass
class PopulationSnapshot:
    """Immutable view of a population at ``clock``.

    Family data live in the arrays ``tau``, ``fitness`` and ``size`` (birth
    order); ``families`` materialises :class:`FamilyRecord` objects on demand.
    """

    clock: float
    tau: np.ndarray
    fitness: np.ndarray
    size: np.ndarray
    total_size: int
    total_rate: float
    stop_reason: str = "t_end"
    events: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for a in (self.tau, self.fitness, self.size):
            a.setflags(write=False)

    @property
    def family_count(self) -> int:
        return len(self.tau)

    @property
    def families(self) -> Sequence[FamilyRecord]:
        return [FamilyRecord(k + 1, float(self.tau[k]), float(self.fitness[k]), int(self.size[k]))
                for k in range(len(self.tau))]

    def family(self, index: int) -> FamilyRecord:
        k = index - 1
        return FamilyRecord(index, float(self.tau[k]), float(self.fitness[k]), int(self.size[k]))

    def recompute_rate(self) -> float:
        return float(np.sum(self.size * self.fitness))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["family_index", "tau", "fitness", "size"])
            for k in range(len(self.tau)):
                w.writerow([k + 1, repr(float(self.tau[k])), repr(float(self.fitness[k])), int(self.size[k])])


class _Buffers:
    """Growable state arrays for the compiled RBP loop."""

    def __init__(self, capacity: int, log_on: bool):
        self.Z = np.zeros(capacity, dtype=np.int64)
        self.F = np.zeros(capacity)
        self.tau = np.zeros(capacity)
        self.tree = np.zeros(capacity + 1)
        n = 4096 if log_on else 1
        self.log_t = np.zeros(n)
        self.log_fam = np.zeros(n, dtype=np.int64)
        self.log_i = np.zeros(n, dtype=np.int64)
        self.log_j = np.zeros(n, dtype=np.int64)

    def grow_families(self, M: int) -> float:
        cap = 2 * len(self.Z)
        for name in ("Z", "F", "tau"):
            old = getattr(self, name)
            new = np.zeros(cap, dtype=old.dtype)
            new[:M] = old[:M]
            setattr(self, name, new)
        self.tree = np.zeros(cap + 1)
        return _rebuild(self.Z, self.F, self.tree, M)

    def grow_log(self) -> None:
        for name in ("log_t", "log_fam", "log_i", "log_j"):
            old = getattr(self, name)
            new = np.zeros(2 * len(old), dtype=old.dtype)
            new[: len(old)] = old
            setattr(self, name, new)


def _stop_values(t_end, max_population, max_families, max_events):
    if t_end is None and max_population is None and max_families is None:
        max_population = DEFAULT_MAX_POPULATION
    big = np.iinfo(np.int64).max
    return (math.inf if t_end is None else float(t_end),
            big if max_population is None else int(max_population),
            big if max_families is None else int(max_families),
            big if max_events is None else int(max_events))


def simulate_rbp(
    model: FitnessModel,
    law: OffspringLaw,
    rng: np.random.Generator,
    t_end: Optional[float] = None,
    max_population: Optional[int] = None,
    max_families: Optional[int] = None,
    max_events: Optional[int] = None,
    log_events: bool = False,
    capacity: int = 1024,
    rebuild_every: int = REBUILD_EVERY,
):
    """Gillespie simulation of a reinforced branching process.

    Each family n fires at rate ``Z_n F_n``; a firing draws ``(i, j)`` from
    ``law``, adds i to ``Z_n`` and founds j families with fresh fitness at the
    event time.  Family choice uses a Fenwick tree over ``Z_n F_n``, rebuilt
    from scratch every ``rebuild_every`` events to shed rounding drift.

    Stops at the first of ``t_end``, ``max_population`` (total size),
    ``max_families`` or ``max_events``; with none given the population cap
    defaults to ``DEFAULT_MAX_POPULATION``.

    Returns
    -------
    snapshot : PopulationSnapshot
    log : EventLog or None
    """
    t_end, max_pop, max_fam, max_ev = _stop_values(t_end, max_population, max_families, max_events)
    law_i, law_j, law_cp = law.arrays()
    max_j = int(max(1, law_j.max()))
    buf = _Buffers(max(int(capacity), max_j + 1), log_events)
    pool = np.asarray(sample_fitness(model, rng, POOL_CHUNK), dtype=float)
    buf.F[0] = pool[0]
    buf.Z[0] = 1
    fstate = np.array([0.0, 0.0, t_end])
    istate = np.array([1, 1, 0, 1, 0, max_pop, max_fam, 0, max_ev], dtype=np.int64)
    fstate[1] = _rebuild(buf.Z, buf.F, buf.tree, 1)
    while True:
        status = _rbp_kernel(fstate, istate, buf.Z, buf.F, buf.tau, buf.tree, pool, law_i, law_j, law_cp, max_j,
                             buf.log_t, buf.log_fam, buf.log_i, buf.log_j, log_events, rng, rebuild_every)
        if status == _NEED_CAP:
            fstate[1] = buf.grow_families(int(istate[0]))
        elif status == _NEED_POOL:
            pool = np.concatenate([pool[istate[3]:], sample_fitness(model, rng, POOL_CHUNK)])
            istate[3] = 0
        elif status == _NEED_LOG:
            buf.grow_log()
        elif status == _ZERO_RATE:
            raise RateUnderflow("total rate vanished; every live family has zero weight")
        else:
            break
    M, N = int(istate[0]), int(istate[1])
    snap = PopulationSnapshot(
        clock=float(fstate[0]),
        tau=buf.tau[:M].copy(),
        fitness=buf.F[:M].copy(),
        size=buf.Z[:M].copy(),
        total_size=N,
        total_rate=float(fstate[1]),
        stop_reason=_STOP_NAMES[status],
        events=int(istate[2]),
    )
    log = None
    if log_events:
        L = int(istate[4])
        log = EventLog(buf.log_t[:L].copy(), buf.log_fam[:L] + 1, buf.log_i[:L].copy(), buf.log_j[:L].copy())
    return snap, log


def simulate_selection_mutation(model: FitnessModel, beta: float, offspring: Mapping[int, float],
                                rng: np.random.Generator, **stop):
    """Selection-mutation population: each offspring is a mutant with probability beta.

    Runs :func:`simulate_rbp` on the binomially thinned offspring law.
    """
    return simulate_rbp(model, thinned_law(offspring, beta), rng, **stop)


def estimate_T(tau: np.ndarray, lam: float) -> float:
    """Median of ``tau_n - log(n) / lam`` over the last half of the families."""
    tau = np.asarray(tau, dtype=float)
    M = len(tau)
    if M < 2:
        raise ValueError("need at least two families")
    n = np.arange(M // 2 + 1, M + 1)
    return float(np.median(tau[n - 1] - np.log(n) / lam))


# ---------------------------------------------------------------------------
# family-by-family sampler for extremal statistics at a fixed time


@njit(cache=True)
def _extremes_kernel(state, fstate, st_tau, pool, law_i, law_j, law_cp, max_j, t_end, rec_on,
                     rec_tau, rec_f, rec_z, rng):
    # state: sp, pos, M, N, events, max_events, rec_len, best_z, second_z, active, cur_z
    # fstate: best_tau, best_f, second_tau, second_f, cur_s, cur_born, cur_f
    sp = state[0]
    pos = state[1]
    M = state[2]
    N = state[3]
    events = state[4]
    max_events = state[5]
    rec_len = state[6]
    best_z = state[7]
    second_z = state[8]
    active = state[9]
    z = state[10]
    best_tau = fstate[0]
    best_f = fstate[1]
    second_tau = fstate[2]
    second_f = fstate[3]
    s = fstate[4]
    born = fstate[5]
    f = fstate[6]
    nlaw = law_cp.shape[0]
    cap = st_tau.shape[0]
    status = _STOP_T
    while active == 1 or sp > 0:
        if active == 0:
            if pos >= pool.shape[0]:
                status = _NEED_POOL
                break
            if rec_on and rec_len >= rec_tau.shape[0]:
                status = _NEED_LOG
                break
            sp -= 1
            s = st_tau[sp]
            born = s
            f = pool[pos]
            pos += 1
            z = 1
            active = 1
        done = False
        while True:
            if sp + max_j > cap:
                status = _NEED_CAP
                break
            if events >= max_events:
                status = _STOP_EVENTS
                break
            s += rng.standard_exponential() / (z * f)
            if s > t_end:
                done = True
                break
            v = rng.random()
            c = 0
            while c < nlaw - 1 and law_cp[c] <= v:
                c += 1
            z += law_i[c]
            for _ in range(law_j[c]):
                st_tau[sp] = s
                sp += 1
            events += 1
        if not done:
            break
        active = 0
        M += 1
        N += z
        if rec_on:
            rec_tau[rec_len] = born
            if rec_f.shape[0] == rec_tau.shape[0]:
                rec_f[rec_len] = f
                rec_z[rec_len] = z
            rec_len += 1
        # ties in size go to the earlier birth
        if z > best_z or (z == best_z and born < best_tau):
            second_z, second_tau, second_f = best_z, best_tau, best_f
            best_z, best_tau, best_f = z, born, f
        elif z > second_z or (z == second_z and born < second_tau):
            second_z, second_tau, second_f = z, born, f
    state[0] = sp
    state[1] = pos
    state[2] = M
    state[3] = N
    state[4] = events
    state[6] = rec_len
    state[7] = best_z
    state[8] = second_z
    state[9] = active
    state[10] = z
    fstate[0] = best_tau
    fstate[1] = best_f
    fstate[2] = second_tau
    fstate[3] = second_f
    fstate[4] = s
    fstate[5] = born
    fstate[6] = f
    return status


@dataclass
class ExtremeSummary:
    """Largest and second-largest family of an RBP at time ``t``."""

    t: float
    max_size: int
    max_tau: float
    max_fitness: float
    second_size: int
    second_tau: float
    second_fitness: float
    total_size: int
    family_count: int
    events: int
    complete: bool
    families: Optional[tuple] = None  # (tau, fitness, size) in birth order when recorded


def rbp_extremes(model: FitnessModel, law: OffspringLaw, t: float, rng: np.random.Generator,
                 max_events: Optional[int] = None, record: Union[bool, str] = False) -> ExtremeSummary:
    """Exact extremal statistics of an RBP at time ``t`` without a global event queue.

    Given its birth time and fitness, a family evolves independently of the
    rest: it is a continuous-time Galton-Watson process at rate ``F`` whose
    events found children at the event times.  The sampler therefore pops a
    pending family, runs its own path to ``t``, pushes the children it
    founds, and keeps only running maxima.  The law of the population at
    ``t`` is the same as under :func:`simulate_rbp`; the random stream is
    consumed differently, so individual samples differ.

    ``record=True`` keeps ``(tau, fitness, size)`` of every family;
    ``record="tau"`` keeps only the sorted birth times, as
    ``(tau, None, None)``, at a third of the memory.  Recording does not
    change the random stream.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    law_i, law_j, law_cp = law.arrays()
    max_j = int(max(1, law_j.max()))
    st_tau = np.zeros(4096)
    st_tau[0] = 0.0
    pool = np.asarray(sample_fitness(model, rng, POOL_CHUNK), dtype=float)
    max_ev = np.iinfo(np.int64).max if max_events is None else int(max_events)
    state = np.array([1, 0, 0, 0, 0, max_ev, 0, 0, 0, 0, 0], dtype=np.int64)
    fstate = np.array([math.inf, math.nan, math.inf, math.nan, 0.0, 0.0, 0.0])
    if record not in (False, True, "tau"):
        raise ValueError("record must be a bool or 'tau'")
    full = record is True
    nrec = 4096 if record else 1
    rec_tau = np.zeros(nrec)
    rec_f, rec_z = (np.zeros(nrec), np.zeros(nrec, dtype=np.int64)) if full else (np.zeros(1), np.zeros(1, np.int64))
    while True:
        status = _extremes_kernel(state, fstate, st_tau, pool, law_i, law_j, law_cp, max_j, float(t), bool(record),
                                  rec_tau, rec_f, rec_z, rng)
        if status == _NEED_POOL:
            pool = sample_fitness(model, rng, POOL_CHUNK)
            state[1] = 0
        elif status == _NEED_CAP:
            st_tau = np.concatenate([st_tau, np.zeros(len(st_tau))])
        elif status == _NEED_LOG:
            rec_tau = np.concatenate([rec_tau, np.zeros(len(rec_tau))])
            if full:
                rec_f = np.concatenate([rec_f, np.zeros(len(rec_f))])
                rec_z = np.concatenate([rec_z, np.zeros(len(rec_z), dtype=np.int64)])
        else:
            break
    fams = None
    if full:
        L = int(state[6])
        order = np.argsort(rec_tau[:L], kind="stable")
        fams = (rec_tau[:L][order], rec_f[:L][order], rec_z[:L][order])
    elif record:
        tau = rec_tau[: int(state[6])]
        tau.sort()
        fams = (tau, None, None)
    return ExtremeSummary(
        t=float(t), max_size=int(state[7]), max_tau=float(fstate[0]), max_fitness=float(fstate[1]),
        second_size=int(state[8]), second_tau=float(fstate[2]), second_fitness=float(fstate[3]),
        total_size=int(state[3]), family_count=int(state[2]), events=int(state[4]),
        complete=status == _STOP_T, families=fams,
    )
