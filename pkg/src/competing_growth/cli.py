"""Command line: ``competing-growth {simulate,validate,sigma,malthus,kappa,catalog}``.

Exit codes: 0 success (and every requested validation passed), 1 a
validation failed, 2 bad usage or configuration.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from typing import Optional, Sequence

from .harness import ConfigError, load_config, run_experiment

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; keep that but let tests catch it."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


class _UsageError(Exception):
    pass


def _model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", required=True, help="fitness model id (see `catalog`)")
    p.add_argument("--rho", type=float, help="parameter of power_rho")
    p.add_argument("--alpha", type=float, help="parameter of weibull_alpha")


def _model(args):
    from .fitness import make_model

    params = {}
    if args.rho is not None:
        params["rho"] = args.rho
    if args.alpha is not None:
        params["alpha"] = args.alpha
    try:
        return make_model(args.model, **params)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"--model: {exc.args[0] if exc.args else exc}") from None


def _parse_set(items: Sequence[str]) -> dict:
    """``key.sub=value`` pairs; values are read as TOML scalars or arrays, else kept as strings."""
    from .harness import tomllib

    out = {}
    for item in items:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set: expected KEY=VALUE, got {item!r}")
        try:
            out[key.strip()] = tomllib.loads(f"v = {raw}")["v"]
        except tomllib.TOMLDecodeError:
            out[key.strip()] = raw
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="competing-growth", description="Extremal statistics of competing growth processes.")
    sub = ap.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("simulate", help="run an experiment from a TOML config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, help="overrides the config and EXTREMAL_SEED")
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="output directory (default: output.dir from the config)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config value, e.g. --set stop.n_customers=1000")
    p.add_argument("--validate", action="store_true", help="also test the limit laws; exit 1 on failure")

    p = sub.add_parser("validate", help="run an acceptance scenario, or validate a config's experiment")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--scenario", help="number or name; `all` runs every scenario")
    g.add_argument("--config")
    g.add_argument("--list", action="store_true", help="list the scenarios")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out")
    p.add_argument("--json", action="store_true", help="print scenario details as JSON")

    p = sub.add_parser("sigma", help="window centre sigma_t and its asymptotic sanity ratios")
    _model_args(p)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--t", type=float, required=True)

    p = sub.add_parser("malthus", help="Malthusian parameter")
    p.add_argument("--equation", required=True, choices=["rbp", "bb", "selection_mutation", "crp"])
    _model_args(p)
    p.add_argument("--beta", type=float, help="mutation probability (selection_mutation)")
    p.add_argument("--mean-offspring", type=float, default=1.0, help="mean offspring count (selection_mutation)")
    p.add_argument("--p-ij", default="1,1,1.0", help="offspring law for rbp as 'i,j,p;i,j,p;...'")

    p = sub.add_parser("kappa", help="curvature constant kappa with extrapolation diagnostics")
    _model_args(p)

    sub.add_parser("catalog", help="list fitness models and their (A5) status")
    return ap


# ---------------------------------------------------------------------------


def _cmd_simulate(args) -> int:
    cfg = load_config(args.config, overrides=_parse_set(args.set), seed=args.seed)
    if args.workers is not None and args.workers < 1:
        raise ConfigError("--workers: must be at least 1")
    res = run_experiment(cfg, out_dir=args.out, validate=args.validate, workers=args.workers)
    print(f"{cfg.replicates} replicate(s) of {cfg.model} written to {res.out_dir}")
    return _report(res.report)


def _report(report) -> int:
    for e in report:
        verdict = "PASS" if e["pass"] else "FAIL"
        print(f"[{verdict}] {e['law']}: {e['ks']:.4f} (threshold {e['threshold']:g}, n={e['n_replicates']})")
    return EXIT_OK if all(e["pass"] for e in report) else EXIT_FAIL


def _cmd_validate(args) -> int:
    from . import acceptance

    if args.list:
        for sc in acceptance.SCENARIOS:
            print(f"{sc.number:2d} {sc.name:20s} {sc.limit:6g}s  {(sc.__doc__ or '').strip().splitlines()[0]}")
        return EXIT_OK
    if args.config:
        cfg = load_config(args.config, seed=args.seed)
        res = run_experiment(cfg, out_dir=args.out, validate=True, workers=args.workers)
        return _report(res.report)
    try:
        chosen = acceptance.SCENARIOS if args.scenario == "all" else [acceptance.find_scenario(args.scenario)]
    except KeyError as exc:
        raise ConfigError(f"--scenario: {exc.args[0]}") from None
    seed = args.seed if args.seed is not None else acceptance.BASE_SEED
    ok = True
    for sc in chosen:
        res = sc(seed)
        print(res.line())
        if args.json:
            print(json.dumps({"checks": res.checks, "details": res.details}, indent=2, default=_json_default))
        ok = ok and res.passed
    return EXIT_OK if ok else EXIT_FAIL


def _json_default(o):
    if hasattr(o, "tolist"):
        return o.tolist()
    if hasattr(o, "item"):
        return o.item()
    return str(o)


def _cmd_sigma(args) -> int:
    from .scaling import sanity_asymptotics, sigma_weibull_leading, solve_sigma

    model = _model(args)
    if not (args.lam > 0 and args.t > 0):
        raise ConfigError("--lambda and --t must be positive")
    if not model.is_gumbel:
        s = sigma_weibull_leading(model.alpha, model.ell, args.lam, args.t)
        print(f"sigma_t = {s!r}")
        print("(Weibull class: leading term (alpha/lam) log t - (1/lam) log ell(1/t); add T for a realisation)")
        return EXIT_OK
    s, info = solve_sigma(model, args.lam, args.t, full_output=True)
    print(f"sigma_t = {s!r}")
    if info.clamped:
        print("note: the root lies below 1 and was clamped to 1")
    grid = [args.t * 10.0**k for k in (-4, -3, -2, -1, 0) if args.t * 10.0**k >= 10.0] or [args.t]
    rep = sanity_asymptotics(model, args.lam, grid)
    print(f"{'t':>12} {'sigma_t':>14} {'lam t g1':>10} {'curv/kappa':>10} {'sigma g1':>10}")
    for row in zip(rep.t, rep.sigma, rep.derivative_ratio, rep.curvature_ratio, rep.small_o):
        print(f"{row[0]:12.4g} {row[1]:14.8g} {row[2]:10.5f} {row[3]:10.5f} {row[4]:10.3g}")
    print("asymptotics: " + ", ".join(f"{k} {'ok' if v else 'not yet'}" for k, v in rep.passed.items()))
    return EXIT_OK


def _parse_pij(text: str) -> dict:
    table = {}
    try:
        for chunk in text.split(";"):
            if chunk.strip():
                i, j, p = chunk.split(",")
                table[(int(i), int(j))] = float(p)
    except ValueError:
        raise ConfigError(f"--p-ij: expected 'i,j,p;i,j,p', got {text!r}") from None
    return table


def _cmd_malthus(args) -> int:
    from .malthusian import (
        NoMalthusianRoot,
        OffspringLaw,
        malthusian_bb,
        malthusian_crp,
        malthusian_rbp,
        malthusian_selection_mutation,
    )

    model = _model(args)
    try:
        if args.equation == "bb":
            r = malthusian_bb(model, full_output=True)
        elif args.equation == "rbp":
            try:
                law = OffspringLaw(_parse_pij(args.p_ij))
            except ValueError as exc:
                raise ConfigError(f"--p-ij: {exc}") from None
            r = malthusian_rbp(model, law, full_output=True)
        elif args.equation == "selection_mutation":
            if args.beta is None or not 0.0 < args.beta <= 1.0:
                raise ConfigError("--beta: required, in (0, 1]")
            r = malthusian_selection_mutation(model, args.beta, args.mean_offspring, full_output=True)
        else:
            lam, res = malthusian_crp(model, full_output=True)
            print(f"lambda = {lam!r}")
            print(f"residual = {res:.3g}")
            return EXIT_OK
    except NoMalthusianRoot as exc:
        print(f"no Malthusian parameter: {exc}", file=sys.stderr)
        return EXIT_FAIL
    print(f"lambda = {r.lam!r}")
    print(f"residual = {r.residual:.3g}")
    cond = "diverges" if r.condition_diverges else f"{r.condition_value:.6g}"
    print(f"existence integral m2 * int f/(1-f) dmu = {cond}")
    return EXIT_OK


def _cmd_kappa(args) -> int:
    from .fitness import kappa

    model = _model(args)
    if not model.is_gumbel:
        raise ConfigError(f"--model: {args.model} is in the Weibull class; kappa is defined for the Gumbel class")
    k = kappa(model)
    print(f"kappa = {k.value!r}")
    print(f"converged = {k.ok}  extrapolation residual = {k.residual:.3g}")
    print("raw ratios m'' m x / m'^2 at x = 1 - 10^-k:")
    for e, v in zip(_exponents(), k.raw):
        print(f"  k={e}: {v:.10g}")
    return EXIT_OK


def _exponents():
    from .fitness import _LIMIT_EXPONENTS

    return _LIMIT_EXPONENTS


def _cmd_catalog(args) -> int:
    from .fitness import catalog, check_a5

    print(f"{'id':18s} {'class':8s} {'A5':5s} notes")
    for name, model in catalog().items():
        cls = "gumbel" if model.is_gumbel else "weibull"
        if model.is_gumbel:
            rep = check_a5(model)
            status = "ok" if rep.ok else "fails"
            notes = "; ".join(rep.failures)
        else:
            status, notes = "n/a", f"alpha = {model.alpha:g}"
        print(f"{name:18s} {cls:8s} {status:5s} {notes}")
    return EXIT_OK


_COMMANDS = {
    "simulate": _cmd_simulate,
    "validate": _cmd_validate,
    "sigma": _cmd_sigma,
    "malthus": _cmd_malthus,
    "kappa": _cmd_kappa,
    "catalog": _cmd_catalog,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
