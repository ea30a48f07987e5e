"""Experiment configuration, replicate orchestration and output files."""
from __future__ import annotations

import csv
import json
import math
import multiprocessing as mp
import os
import sys
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Any, Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .engines import estimate_T, simulate_rbp
from .extremal import (
    ReplicateSummary,
    RescaledCloud,
    extract_extremes,
    gumbel_log_prefactor,
    rescale_gumbel,
    rescale_weibull,
    toy_model_oracle,
    validate_limits,
    estimate_xi_moment,
)
from .fitness import CATALOG_IDS, FitnessModel, make_model
from .malthusian import NoMalthusianRoot, OffspringLaw, malthusian_rbp, thinned_law
from .scaling import ScalingBundle, scaling_bundle, sigma_weibull_leading
from .zoo import simulate_bb_tree, simulate_crp, simulate_dereich

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "run_experiment", "replicate_rng", "MODELS",
           "default_workers", "validate_experiment", "ExperimentResult",
           "SEED_ENV"]

MODELS = ("toy", "rbp", "selection_mutation", "bb_tree", "dereich", "crp")
SEED_ENV = "EXTREMAL_SEED"
REPLICATE_COLUMNS = ["replicate", "t_or_n", "max_size_rescaled", "argmax_fitness", "argmax_birth_rescaled",
                     "top_ratio", "T_hat"]


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


def default_workers() -> int:
    """Available parallelism for this process."""
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def replicate_rng(seed: int, k: int) -> np.random.Generator:
    """Independent stream for replicate k, derived from ``(seed, k)`` only."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k,)))


@dataclass
class ExperimentConfig:
    model: str
    fitness: dict
    dynamics: dict = field(default_factory=dict)
    stop: dict = field(default_factory=dict)
    replicates: int = 1
    seed: int = 0
    workers: int = 1
    output: dict = field(default_factory=dict)
    validate: dict = field(default_factory=dict)

    # -- construction -------------------------------------------------------

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {"model", "fitness", "dynamics", "stop", "replicates", "seed", "workers", "output", "validate"}
        extra = set(raw) - known
        if extra:
            raise ConfigError(f"unknown top-level field(s): {', '.join(sorted(extra))}")
        if "model" not in raw:
            raise ConfigError("model: required")
        cfg = cls(
            model=raw["model"],
            fitness=dict(raw.get("fitness", {})),
            dynamics=dict(raw.get("dynamics", {})),
            stop=dict(raw.get("stop", {})),
            replicates=raw.get("replicates", 1),
            seed=raw.get("seed", 0),
            workers=raw.get("workers", default_workers()),
            output=dict(raw.get("output", {})),
            validate=dict(raw.get("validate", {})),
        )
        cfg.resolve()
        return cfg

    def resolve(self) -> None:
        """Validate every field and fill in defaults in place."""
        if self.model not in MODELS:
            raise ConfigError(f"model: must be one of {', '.join(MODELS)}, got {self.model!r}")
        _int_field(self, "replicates", lo=1)
        _int_field(self, "seed", lo=0, hi=2**64 - 1)
        _int_field(self, "workers", lo=1)

        fit = self.fitness
        if self.model == "toy":
            fit.setdefault("id", "weibull_alpha")
            fit.setdefault("alpha", 1.0)
        if "id" not in fit:
            raise ConfigError("fitness.id: required")
        if fit["id"] not in CATALOG_IDS:
            raise ConfigError(f"fitness.id: unknown model {fit['id']!r}")
        try:
            self.fitness_model()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"fitness: {exc}") from None

        d, s = self.dynamics, self.stop
        if self.model == "toy":
            if fit["id"] != "weibull_alpha":
                raise ConfigError("fitness.id: the toy model needs weibull_alpha")
            _pos(d, "dynamics.lambda", d.setdefault("lambda", 1.0))
            d.setdefault("c", 3.0)
            if not d["c"] >= 3:
                raise ConfigError("dynamics.c: must be at least 3")
            _pos(s, "stop.t_end", s.get("t_end"))
        elif self.model in ("rbp", "selection_mutation"):
            if self.model == "rbp":
                table = d.get("p_ij", [[1, 1, 1.0]])
                try:
                    OffspringLaw({(int(i), int(j)): float(p) for i, j, p in table})
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"dynamics.p_ij: {exc}") from None
                d["p_ij"] = [[int(i), int(j), float(p)] for i, j, p in table]
            else:
                beta = d.get("beta")
                if beta is None or not 0.0 < beta < 1.0:
                    raise ConfigError(f"dynamics.beta: must lie in (0, 1), got {beta!r}")
                off = d.get("offspring", {"1": 1.0})
                try:
                    off = {int(k): float(v) for k, v in off.items()}
                    thinned_law(off, beta)
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"dynamics.offspring: {exc}") from None
                d["offspring"] = {str(k): v for k, v in sorted(off.items())}
            if not any(k in s for k in ("t_end", "max_population", "max_families")):
                s["max_population"] = 10**6
            for k in ("t_end", "max_population", "max_families"):
                if k in s:
                    _pos(s, f"stop.{k}", s[k])
            d.setdefault("log_events", False)
        elif self.model == "bb_tree":
            _int_field(s, "n_vertices", lo=2, prefix="stop.")
            d.setdefault("embed", True)
        elif self.model == "dereich":
            beta = d.get("beta")
            if beta is None or not 0.0 < beta < 1.0:
                raise ConfigError(f"dynamics.beta: must lie in (0, 1), got {beta!r}")
            _pos(d, "dynamics.lambda", d.setdefault("lambda", 1.0))
            d.setdefault("method", "multinomial")
            if d["method"] not in ("multinomial", "naive"):
                raise ConfigError("dynamics.method: must be 'multinomial' or 'naive'")
            _int_field(s, "n_vertices", lo=2, prefix="stop.")
        elif self.model == "crp":
            theta = d.setdefault("theta", 1.0)
            if not theta >= 0:
                raise ConfigError(f"dynamics.theta: must be nonnegative, got {theta!r}")
            d.setdefault("embed", True)
            _int_field(s, "n_customers", lo=1, prefix="stop.")
        o = self.output
        o.setdefault("dir", "experiment_output")
        o.setdefault("details", "first")
        if o["details"] not in ("none", "first", "all"):
            raise ConfigError("output.details: must be 'none', 'first' or 'all'")
        o.setdefault("point_cloud", False)
        v = self.validate
        v.setdefault("threshold", 0.05)
        v.setdefault("ratio_tolerance", 0.05)
        v.setdefault("laws", None)

    # -- helpers ------------------------------------------------------------

    def fitness_model(self) -> FitnessModel:
        params = {k: v for k, v in self.fitness.items() if k != "id"}
        return make_model(self.fitness["id"], **params)

    def to_dict(self) -> dict:
        return asdict(self)


def _int_field(obj, name, lo=None, hi=None, prefix=""):
    holder = obj if isinstance(obj, dict) else obj.__dict__
    val = holder.get(name)
    if isinstance(val, bool) or not isinstance(val, (int, np.integer)):
        raise ConfigError(f"{prefix}{name}: must be an integer, got {val!r}")
    if lo is not None and val < lo:
        raise ConfigError(f"{prefix}{name}: must be at least {lo}, got {val}")
    if hi is not None and val > hi:
        raise ConfigError(f"{prefix}{name}: must be at most {hi}, got {val}")


def _pos(_, name, val):
    if not isinstance(val, (int, float)) or isinstance(val, bool) or not val > 0:
        raise ConfigError(f"{name}: must be a positive number, got {val!r}")


def load_config(path, overrides: Optional[dict] = None, seed: Optional[int] = None) -> ExperimentConfig:
    """Read a TOML config; ``seed`` (an explicit flag) beats ``EXTREMAL_SEED`` beats the file."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from None
    for dotted, value in (overrides or {}).items():
        node = raw
        *head, last = dotted.split(".")
        for key in head:
            node = node.setdefault(key, {})
        node[last] = value
    env = os.environ.get(SEED_ENV)
    if seed is not None:
        raw["seed"] = seed
    elif env is not None:
        try:
            raw["seed"] = int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV}: not an integer: {env!r}") from None
    return ExperimentConfig.from_dict(raw)


# ---------------------------------------------------------------------------
# per-model analysis


@dataclass
class _Context:
    """Quantities shared by every replicate, computed once up front."""

    model: FitnessModel
    lam: float
    gamma: float
    xi_moment: float
    law: Optional[OffspringLaw] = None


def _context(cfg: ExperimentConfig) -> _Context:
    try:
        return _context_inner(cfg)
    except NoMalthusianRoot as exc:
        raise ConfigError(f"dynamics: no Malthusian parameter for this fitness law ({exc})") from None


def _context_inner(cfg: ExperimentConfig) -> _Context:
    fm = cfg.fitness_model()
    d = cfg.dynamics
    if cfg.model == "toy":
        return _Context(fm, float(d["lambda"]), 1.0, 1.0)
    if cfg.model in ("rbp", "selection_mutation"):
        if cfg.model == "rbp":
            law = OffspringLaw({(i, j): p for i, j, p in d["p_ij"]})
        else:
            law = thinned_law({int(k): v for k, v in d["offspring"].items()}, d["beta"])
        lam = malthusian_rbp(fm, law)
        gamma = law.m1
        marg = law.first_marginal()
        if gamma > 0 and all(i in (0, 1) for i in marg):
            # only unit jumps: each family is a Yule process of rate gamma, xi ~ Exp(1)
            xi = math.gamma(1.0 + lam / gamma)
        elif gamma > 0:
            xi = estimate_xi_moment(marg, 1.0, lam / gamma, replicate_rng(cfg.seed, 2**32))
        else:
            xi = float("nan")
        return _Context(fm, lam, gamma, xi, law)
    if cfg.model == "bb_tree":
        lam = malthusian_rbp(fm, OffspringLaw.single(1, 1))
        return _Context(fm, lam, 1.0, math.gamma(1.0 + lam), OffspringLaw.single(1, 1))
    if cfg.model == "dereich":
        lam = float(d["lambda"])
        gamma = lam * d["beta"]
        return _Context(fm, lam, gamma, math.gamma(1.0 + lam / gamma))
    return _Context(fm, 1.0, 1.0, 2.0)  # crp: lam = gam = 1, xi ~ Exp(1)


def _bundle(ctx: _Context, t: float, T_hat: Optional[float]) -> ScalingBundle:
    return scaling_bundle(ctx.model, ctx.lam, ctx.gamma, t, xi_moment=ctx.xi_moment, T_estimate=T_hat)


class _Families:
    """Minimal snapshot interface for the rescaling functions."""

    def __init__(self, tau, fitness, size, clock):
        self.tau, self.fitness, self.size, self.clock = tau, fitness, size, clock


def _summarize(ctx: _Context, fam: _Families, t: float, n: float = float("nan")):
    """ReplicateSummary plus the rescaled cloud, for one population with birth times."""
    if len(fam.size) < 2:
        return ReplicateSummary(float("nan"), float("nan"), float("nan"), float("nan"), t, float("nan"), n), None
    k, ratio = extract_extremes(fam.size)
    T_hat = estimate_T(fam.tau, ctx.lam)
    if ctx.gamma <= 0:
        return ReplicateSummary(float("nan"), float(fam.fitness[k - 1]), float("nan"), ratio, t, T_hat, n), None
    bundle = _bundle(ctx, t, T_hat)
    if ctx.model.is_gumbel:
        cloud = rescale_gumbel(fam, ctx.model, bundle, T_hat, t=t)
    else:
        sigma = sigma_weibull_leading(ctx.model.alpha, ctx.model.ell, ctx.lam, t) + T_hat
        cloud = rescale_weibull(fam, ctx.model.alpha, ctx.gamma, sigma, t=t)
    summary = ReplicateSummary(float(cloud.z[k - 1]), float(fam.fitness[k - 1]), float(cloud.s[k - 1]), ratio,
                               t, T_hat, n)
    return summary, cloud


def _run_replicate(args):
    cfg_dict, k, want_details = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    ctx = _context_cached(cfg)
    rng = replicate_rng(cfg.seed, k)
    d, s = cfg.dynamics, cfg.stop
    details = {}
    cloud = None
    if cfg.model == "toy":
        t = float(s["t_end"])
        ts = toy_model_oracle(cfg.fitness["alpha"], ctx.lam, t, d["c"], rng, replicates=1)
        sig = sigma_weibull_leading(cfg.fitness["alpha"], None, ctx.lam, t)
        # oracle maxima use the toy normalisation; convert to e^(-(t - sigma_t)) Z like every other model
        alpha = cfg.fitness["alpha"]
        z = math.exp(ts.log_max[0] + (math.lgamma(alpha + 1.0) - alpha * math.log(ctx.lam)) / ctx.lam)
        summary = ReplicateSummary(z, float(ts.argmax_fitness[0]),
                                   float(math.log(ts.argmax[0]) / ctx.lam - sig), float(ts.top_ratio[0]), t, 0.0)
    elif cfg.model in ("rbp", "selection_mutation"):
        stop = {k2: s[k2] for k2 in ("t_end", "max_population", "max_families") if k2 in s}
        snap, log = simulate_rbp(ctx.model, ctx.law, rng, log_events=bool(d["log_events"]) and want_details, **stop)
        summary, cloud = _summarize(ctx, snap, snap.clock)
        if want_details:
            details["families.csv"] = snap.to_csv
            if log is not None:
                details["events.csv"] = log.to_csv
    elif cfg.model == "bb_tree":
        net = simulate_bb_tree(ctx.model, int(s["n_vertices"]), rng, embed=bool(d["embed"]))
        if net.tau is not None:
            summary, cloud = _summarize(ctx, _Families(net.tau, net.fitness, net.size, net.meta["clock"]),
                                        net.meta["clock"], net.step)
        else:
            k_, ratio = extract_extremes(net.size)
            summary = ReplicateSummary(float("nan"), float(net.fitness[k_ - 1]), float("nan"), ratio,
                                       float("nan"), float("nan"), net.step)
        if want_details:
            details["vertices.csv"] = net.vertices_to_csv
            details["edges.csv"] = net.edges_to_csv
    elif cfg.model == "dereich":
        net = simulate_dereich(ctx.model, d["beta"], int(s["n_vertices"]), rng, method=d["method"], lam=ctx.lam)
        t = float(net.tau[-1])
        # 1 + indegree is the family size of the general framework
        summary, cloud = _summarize(ctx, _Families(net.tau, net.fitness, net.size + 1, t), t, net.step)
        if want_details:
            details["vertices.csv"] = net.vertices_to_csv
            details["edges.csv"] = net.edges_to_csv
    else:
        crp = simulate_crp(ctx.model, d["theta"], int(s["n_customers"]), rng, embed=bool(d["embed"]))
        if crp.tau is not None:
            t = crp.clock
            summary, cloud = _summarize(ctx, _Families(crp.tau, crp.weight, crp.size, t), t, crp.n_customers)
        else:
            if crp.table_count >= 2:
                k_, ratio = extract_extremes(crp.size)
                fit = float(crp.weight[k_ - 1])
            else:
                ratio, fit = float("inf"), float(crp.weight[0])
            summary = ReplicateSummary(float("nan"), fit, float("nan"), ratio, float("nan"), float("nan"),
                                       crp.n_customers)
        if want_details:
            details["tables.csv"] = crp.to_csv
    return k, summary, details, cloud if want_details else None


_CTX_CACHE: dict = {}


def _context_cached(cfg: ExperimentConfig) -> _Context:
    key = json.dumps(cfg.to_dict(), sort_keys=True, default=str)
    if key not in _CTX_CACHE:
        _CTX_CACHE.clear()
        _CTX_CACHE[key] = _context(cfg)
    return _CTX_CACHE[key]


# ---------------------------------------------------------------------------
# orchestration


def _fmt(x) -> str:
    x = float(x)
    return repr(x) if math.isfinite(x) else ("nan" if math.isnan(x) else ("inf" if x > 0 else "-inf"))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    summaries: list
    report: list
    out_dir: Path
    lam: float
    gamma: float

    @property
    def passed(self) -> bool:
        return all(e["pass"] for e in self.report)


def run_experiment(cfg: ExperimentConfig, out_dir=None, validate: bool = False,
                   workers: Optional[int] = None) -> ExperimentResult:
    """Run all replicates of ``cfg`` and write the experiment directory.

    Replicate k draws from ``replicate_rng(cfg.seed, k)`` and results are
    written in replicate order, so the files do not depend on ``workers``.
    Files: ``config.resolved.json``, ``replicates.csv``, ``summary.json``,
    detail CSVs under ``details/`` and, if requested, ``point_cloud.csv``.
    """
    out = Path(out_dir if out_dir is not None else cfg.output["dir"])
    out.mkdir(parents=True, exist_ok=True)
    nworkers = int(workers if workers is not None else cfg.workers)
    mode = cfg.output["details"]
    raw = cfg.to_dict()
    jobs = [(raw, k, mode == "all" or (mode == "first" and k == 0)) for k in range(cfg.replicates)]
    ctx = _context_cached(cfg)

    results = [None] * cfg.replicates
    if nworkers > 1 and cfg.replicates > 1:
        with mp.get_context("fork").Pool(min(nworkers, cfg.replicates)) as pool:
            for k, summary, _, _ in pool.imap_unordered(_run_replicate_light, jobs):
                results[k] = summary
        # detail files hold bound writers that cannot cross processes; regenerate them here
        for job in jobs:
            if job[2]:
                k, summary, details, cloud = _run_replicate(job)
                _write_details(out, k, details, cloud, cfg)
    else:
        for job in jobs:
            k, summary, details, cloud = _run_replicate(job)
            results[k] = summary
            if job[2]:
                _write_details(out, k, details, cloud, cfg)

    with open(out / "config.resolved.json", "w") as fh:
        json.dump(_jsonable(raw), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out / "replicates.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPLICATE_COLUMNS)
        for k, r in enumerate(results):
            t_or_n = str(int(r.n)) if math.isfinite(r.n) else _fmt(r.t)
            w.writerow([k, t_or_n, _fmt(r.max_size_rescaled), _fmt(r.argmax_fitness),
                        _fmt(r.argmax_birth_rescaled), _fmt(r.top_ratio), _fmt(r.T_hat)])

    report = []
    if validate:
        report = validate_experiment(cfg, results, ctx)
    summary = {
        "config": raw,
        "n_replicates": cfg.replicates,
        "lambda": ctx.lam,
        "gamma": ctx.gamma,
        "xi_moment": ctx.xi_moment,
        "validation": report,
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(_jsonable(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return ExperimentResult(cfg, results, report, out, ctx.lam, ctx.gamma)


def _run_replicate_light(job):
    raw, k, _ = job
    k, summary, _, _ = _run_replicate((raw, k, False))
    return k, summary, None, None


def _write_details(out: Path, k: int, details: dict, cloud: Optional[RescaledCloud], cfg: ExperimentConfig):
    ddir = out / "details"
    ddir.mkdir(exist_ok=True)
    for name, writer in details.items():
        writer(ddir / f"replicate_{k:04d}_{name}")
    if cloud is not None and cfg.output["point_cloud"] and k == 0:
        cloud.to_csv(out / "point_cloud.csv")


def validate_experiment(cfg: ExperimentConfig, summaries: list, ctx: Optional[_Context] = None) -> list:
    """Limit-law report for a finished experiment (see :func:`validate_limits`)."""
    ctx = ctx or _context_cached(cfg)
    usable = [r for r in summaries if math.isfinite(r.max_size_rescaled) and math.isfinite(r.top_ratio)]
    if not usable:
        raise ConfigError("validate: this configuration produces no rescaled maxima to validate")
    # the limit laws do not depend on t; the median only keeps sigma_t well defined
    t = max(float(np.median([r.t for r in usable])), 2.0)
    bundle = _bundle(ctx, t, None)
    case = "gumbel" if ctx.model.is_gumbel else "weibull"
    v = cfg.validate
    laws = v.get("laws")
    return validate_limits(usable, bundle, case, threshold=v["threshold"], ratio_tolerance=v["ratio_tolerance"],
                           laws=laws)
