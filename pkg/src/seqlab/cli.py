"""``seqlab`` command line: fit a prior, tabulate boundaries, solve, simulate, compare.

Exit codes: 0 success, 1 unexpected runtime failure, 2 configuration error,
3 numerical nonconvergence.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from seqlab import __version__
from seqlab._core import BACKEND
from seqlab.boundaries import BoundarySeries, heuristic_series, array_to_list
from seqlab.dp import NormalGrid, PolicyTable, TruncatedProblem, solve_optimal
from seqlab.errors import ConfigError, DomainError, ExhaustionError, NonConvergenceError
from seqlab.models import BetaBernoulli, DiscoveryCriterion, NormalKnownVariance, model_from_dict
from seqlab.policies import (
    BayesSequential,
    FixedN,
    FixedNEarlyStop,
    Heuristic,
    Optimal,
    make_policy,
)
from seqlab.prior import fit_prior, ingest_csv
from seqlab.sim import EmpiricalList, PriorSampled, SimulationConfig, compare_policies, reports_to_csv, simulate

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_NONCONVERGENCE = 3

ALL_POLICIES = ("optimal", "heuristic", "bayes_sequential", "fixed_early", "fixed")

DEFAULTS_EPILOG = """\
defaults and where they come from:
  --alpha 0.05            significance level of the baseball study
  --s 0.27                threshold within the studied sweep 0.25..0.32
  --k 5000                truncation horizon of the optimal policy in the study
  --c 0                   no per-experiment cost (pure time-to-discovery objective)
  --tol 1e-6              library choice: relative bisection tolerance on kappa
  --min-trials 200        at-bats filter of the baseball study
  --replications 1000     repetition count of the study
  --seed 0                library choice; SEQLAB_SEED is used when the flag is absent
  heuristic               lookahead T_h=2000, beta=0.2, as in the study
  fixed, fixed_early      N=1000 samples per test, as in the study
  bayes_sequential        beta_reject = 0.9 * P0(mu > s), cap 4000 samples, as in the study
  --grid-points 4001      library choice: Normal grid resolution over s +- 8 prior sd

policy syntax:  NAME[:key=value,...]   e.g. heuristic:lookahead=1500,beta=0.1
                optimal:PATH            reuse a table written by `seqlab solve`
model syntax:   PATH.json | beta:A,B | normal:MU0,SIGMA0,SIGMA
truth syntax:   prior | prior:MODEL | csv:PATH (id,trials,successes) | json:PATH (list of effects)
"""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


# ---- parsing helpers ----------------------------------------------------

def parse_model(text: str):
    if text.startswith("beta:") or text.startswith("normal:"):
        kind, _, rest = text.partition(":")
        try:
            vals = [float(v) for v in rest.split(",")]
        except ValueError:
            raise ConfigError(f"bad model parameters in {text!r}") from None
        if kind == "beta":
            if len(vals) != 2:
                raise ConfigError("beta model needs two shapes, e.g. beta:45,130")
            return BetaBernoulli(*vals)
        if len(vals) != 3:
            raise ConfigError("normal model needs mu0,sigma0,sigma")
        return NormalKnownVariance(*vals)
    path = Path(text)
    if not path.exists():
        raise ConfigError(f"model file {text!r} not found")
    with path.open() as fh:
        d = json.load(fh)
    if "model" in d and isinstance(d["model"], dict):
        d = d["model"]
    return model_from_dict(d)


def _kv(text: str) -> dict:
    out = {}
    for item in filter(None, text.split(",")):
        key, eq, val = item.partition("=")
        if not eq:
            raise ConfigError(f"expected key=value, got {item!r}")
        out[key.strip()] = val.strip()
    return out


def parse_policy(text: str, k: int):
    name, _, rest = text.partition(":")
    name = name.strip().replace("-", "_")
    try:
        if name == "optimal":
            if rest:
                return Optimal(table=PolicyTable.load(rest), table_path=rest)
            return Optimal()
        kv = _kv(rest)
        if name == "heuristic":
            spec = Heuristic(int(kv.pop("lookahead", 2000)), float(kv.pop("beta", 0.2)), int(kv.pop("k", k)))
        elif name in ("fixed", "fixed_n"):
            spec = FixedN(int(kv.pop("N", kv.pop("n", 1000))))
        elif name in ("fixed_early", "fixed_n_early"):
            spec = FixedNEarlyStop(int(kv.pop("N", kv.pop("n", 1000))))
        elif name in ("bayes_sequential", "sequential"):
            br = kv.pop("beta_reject", None)
            spec = BayesSequential(
                None if br is None else float(br),
                int(kv.pop("cap", 4000)),
                float(kv.pop("prior_fraction", 0.9)),
            )
        else:
            raise ConfigError(f"unknown policy {name!r}; choose from {', '.join(ALL_POLICIES)}")
    except (ValueError, OSError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad policy {text!r}: {exc}") from None
    if kv:
        raise ConfigError(f"unknown options for {name}: {', '.join(kv)}")
    return spec


def parse_truth(text: str, model, min_trials: int, shuffle: bool):
    kind, _, rest = text.partition(":")
    if kind == "prior":
        return PriorSampled(parse_model(rest) if rest else model)
    if kind == "csv":
        with open(rest, newline="", encoding="utf-8") as fh:
            recs = ingest_csv(fh, min_trials)
        if not recs:
            raise ConfigError(f"no records with trials >= {min_trials} in {rest}")
        return EmpiricalList(np.array([r.rate for r in recs]), shuffle=shuffle)
    if kind == "json":
        with open(rest) as fh:
            d = json.load(fh)
        effects = d["effects"] if isinstance(d, dict) else d
        return EmpiricalList(np.asarray(effects, dtype=float), shuffle=shuffle)
    raise ConfigError(f"unknown truth source {text!r}")


def resolve_seed(flag: Optional[int]) -> int:
    if flag is not None:
        return flag
    env = os.environ.get("SEQLAB_SEED")
    if env is None or env == "":
        return 0
    try:
        return int(env)
    except ValueError:
        raise ConfigError(f"SEQLAB_SEED must be an integer, got {env!r}") from None


def _emit(text: str, out: Optional[str]):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def _dump(obj) -> str:
    return json.dumps(obj, indent=1) + "\n"


def _grid(model, crit, points):
    if isinstance(model, NormalKnownVariance):
        return NormalGrid.default(model, crit, points)
    return None


def _solve(model, crit, args) -> PolicyTable:
    problem = TruncatedProblem(model, crit, args.k, args.c, _grid(model, crit, args.grid_points))
    return solve_optimal(problem, tol=args.tol)


# ---- subcommands ----------------------------------------------------------

def cmd_fit_prior(args) -> int:
    with open(args.data, newline="", encoding="utf-8") as fh:
        recs = ingest_csv(fh, args.min_trials)
    model, meta = fit_prior(recs)
    meta.update({"source": str(args.data), "min_trials": args.min_trials})
    _emit(_dump({**model.to_dict(), "fit": meta}), args.out)
    return EXIT_OK


def cmd_boundaries(args) -> int:
    model = parse_model(args.model)
    series = []
    for s in args.s:
        crit = DiscoveryCriterion(s, args.alpha).validate(model)
        bs = BoundarySeries.compute(model, crit, args.horizon)
        d = bs.to_dict()
        if args.heuristic:
            h = heuristic_series(model, crit, args.horizon, args.lookahead, args.beta)
            d["heuristic"] = {
                "lookahead": args.lookahead,
                "beta": args.beta,
                "r": array_to_list(h[1:], model.discrete),
            }
        series.append(d)
    _emit(_dump(series[0] if len(series) == 1 else series), args.out)
    return EXIT_OK


def cmd_solve(args) -> int:
    model = parse_model(args.model)
    tables = []
    for s in args.s:
        crit = DiscoveryCriterion(s, args.alpha).validate(model)
        tables.append(_solve(model, crit, args).to_dict())
    _emit(_dump(tables[0] if len(tables) == 1 else tables), args.out)
    return EXIT_OK


def _spec_meta(spec, table: Optional[PolicyTable]) -> dict:
    if isinstance(spec, Optimal):
        d = {"variant": "optimal"}
        if spec.table_path:
            d["table_path"] = spec.table_path
        if table is not None:
            d.update({"k": table.k, "c": table.c, "tol": table.tol, "kappa_star": table.kappa_star})
        return d
    return spec.to_dict()


def _run(args, policy_texts: Sequence[str], compare: bool) -> int:
    seed = resolve_seed(args.seed)
    fit_meta = None
    if args.model:
        model = parse_model(args.model)
    elif args.truth.startswith("csv:"):
        with open(args.truth[4:], newline="", encoding="utf-8") as fh:
            model, fit_meta = fit_prior(ingest_csv(fh, args.min_trials))
    else:
        raise ConfigError("--model is required unless --truth is a csv file to fit the prior from")
    truth = parse_truth(args.truth, model, args.min_trials, args.shuffle)

    reports = []
    resolved = []
    for s in args.s:
        crit = DiscoveryCriterion(s, args.alpha).validate(model)
        configs = []
        for text in policy_texts:
            spec = parse_policy(text, args.k)
            table = None
            if isinstance(spec, Optimal):
                table = spec.table
                if table is None:
                    table = _solve(model, crit, args)
                elif table.criterion != crit or table.model != model:
                    raise ConfigError(f"table {spec.table_path} was solved for a different model or criterion")
            policy = make_policy(spec, model, crit, table)
            resolved.append({"s": s, "policy": policy.name, "spec": _spec_meta(policy.spec, table)})
            configs.append(SimulationConfig(
                policy, truth, replications=args.replications, seed=seed,
                discoveries_per_replication=args.discoveries, threads=args.threads, c=args.c,
            ))
        if compare:
            reports.extend(compare_policies(configs, seed).values())
        else:
            reports.extend(simulate(cfg) for cfg in configs)

    overall = {}
    for rep in reports:
        o = overall.setdefault(rep.policy, {"n_discoveries": 0, "n_false_discoveries": 0})
        o["n_discoveries"] += rep.n_discoveries
        o["n_false_discoveries"] += rep.n_false_discoveries
    for o in overall.values():
        o["fdp"] = o["n_false_discoveries"] / o["n_discoveries"] if o["n_discoveries"] else 0.0

    if isinstance(truth, PriorSampled):
        truth_meta = {"variant": "prior_sampled", "model": truth.model.to_dict()}
    else:
        truth_meta = {"variant": "empirical_list", "source": args.truth, "size": int(truth.effects.size), "shuffle": truth.shuffle}
    metadata = {
        "command": "compare" if compare else "simulate",
        "version": __version__,
        "backend": BACKEND,
        "model": model.to_dict(),
        "prior_fit": fit_meta,
        "alpha": args.alpha,
        "s": list(args.s),
        "k": args.k,
        "c": args.c,
        "tol": args.tol,
        "grid_points": args.grid_points,
        "truth": truth_meta,
        "replications": args.replications,
        "discoveries_per_replication": args.discoveries,
        "seed": seed,
        "threads": args.threads,
        "min_trials": args.min_trials,
        "policies": resolved,
        "overall": overall,
    }
    csv_text = reports_to_csv(reports)
    doc = {"metadata": metadata, "reports": [r.to_dict() for r in reports]}
    if args.out:
        base = Path(args.out)
        if base.suffix in (".csv", ".json"):
            base = base.with_suffix("")
        base.with_suffix(".csv").write_text(csv_text)
        base.with_suffix(".json").write_text(_dump(doc))
    else:
        sys.stdout.write(csv_text)
    if args.json_summary:
        sys.stderr.write(json.dumps(overall) + "\n")
    return EXIT_OK


def cmd_simulate(args) -> int:
    return _run(args, args.policy or ["optimal"], compare=False)


def cmd_compare(args) -> int:
    return _run(args, args.policy or list(ALL_POLICIES), compare=True)


# ---- argument parser ------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.RawDescriptionHelpFormatter
    p = _Parser(prog="seqlab", description="Optimal sequential discovery over a stream of experiments.",
                epilog=DEFAULTS_EPILOG, formatter_class=fmt)
    p.add_argument("--version", action="version", version=f"seqlab {__version__} ({BACKEND} kernels)")
    p.add_argument("--json-errors", action="store_true", help="report failures as a JSON object on stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, sweep=True):
        sp.add_argument("--model", help="model JSON file or inline beta:A,B / normal:MU0,SIGMA0,SIGMA")
        if sweep:
            sp.add_argument("--s", type=float, action="extend", nargs="+", default=None,
                            help="discovery threshold(s); repeat or list several for a sweep (default 0.27)")
        sp.add_argument("--alpha", type=float, default=0.05, help="discovery level (default 0.05, study setting)")
        sp.add_argument("--out", help="output path (stdout when omitted)")
        sp.add_argument("--json-errors", action="store_true", default=argparse.SUPPRESS,
                        help="report failures as a JSON object on stderr")

    def solver(sp):
        sp.add_argument("--k", type=int, default=5000, help="truncation horizon (default 5000, study setting)")
        sp.add_argument("--c", type=float, default=0.0, help="cost per experiment started (default 0)")
        sp.add_argument("--tol", type=float, default=1e-6, help="relative tolerance on kappa* (default 1e-6)")
        sp.add_argument("--grid-points", type=int, default=4001, help="Normal model grid size (default 4001)")

    sp = sub.add_parser("fit-prior", help="fit a beta prior to id,trials,successes CSV data",
                        epilog=DEFAULTS_EPILOG, formatter_class=fmt)
    sp.add_argument("data", help="CSV with header id,trials,successes")
    sp.add_argument("--min-trials", type=int, default=200, help="keep rows with trials >= this (default 200, study setting)")
    sp.add_argument("--out", help="output path (stdout when omitted)")
    sp.add_argument("--json-errors", action="store_true", default=argparse.SUPPRESS)
    sp.set_defaults(func=cmd_fit_prior)

    sp = sub.add_parser("boundaries", help="tabulate acceptance (and optional heuristic) boundaries",
                        epilog=DEFAULTS_EPILOG, formatter_class=fmt)
    common(sp)
    sp.add_argument("--horizon", type=int, default=5000, help="largest n tabulated (default 5000)")
    sp.add_argument("--heuristic", action="store_true", help="also tabulate heuristic rejection thresholds")
    sp.add_argument("--lookahead", type=int, default=2000, help="heuristic lookahead T_h (default 2000, study setting)")
    sp.add_argument("--beta", type=float, default=0.2, help="heuristic level (default 0.2, study setting)")
    sp.set_defaults(func=cmd_boundaries)

    sp = sub.add_parser("solve", help="solve the truncated optimal stopping problem",
                        epilog=DEFAULTS_EPILOG, formatter_class=fmt)
    common(sp)
    solver(sp)
    sp.set_defaults(func=cmd_solve)

    for name, func, hp in (
        ("simulate", cmd_simulate, "simulate policies one at a time (default policy: optimal)"),
        ("compare", cmd_compare, "simulate policies on common truth streams (default: all five)"),
    ):
        sp = sub.add_parser(name, help=hp, epilog=DEFAULTS_EPILOG, formatter_class=fmt)
        common(sp)
        solver(sp)
        sp.add_argument("--policy", action="append", help="policy spec, repeatable")
        sp.add_argument("--truth", default="prior", help="truth source (default prior)")
        sp.add_argument("--replications", type=int, default=1000, help="replications (default 1000, study setting)")
        sp.add_argument("--discoveries", type=int, default=1,
                        help="discoveries per replication for prior-sampled truths (default 1)")
        sp.add_argument("--seed", type=int, default=None, help="master seed (default: SEQLAB_SEED or 0)")
        sp.add_argument("--threads", type=int, default=1, help="worker threads over replications (default 1)")
        sp.add_argument("--min-trials", type=int, default=200, help="CSV truth filter (default 200, study setting)")
        sp.add_argument("--shuffle", action=argparse.BooleanOptionalAction, default=True,
                        help="shuffle empirical truths per replication (default on)")
        sp.add_argument("--json-summary", action="store_true", help="print overall FDP per policy as JSON on stderr")
        sp.set_defaults(func=func)
    return p


def _validate(args):
    if getattr(args, "s", 1) is None:
        args.s = [0.27]
    for name in ("k", "replications", "threads", "horizon", "discoveries", "grid_points"):
        v = getattr(args, name, None)
        if v is not None and v < 1:
            raise ConfigError(f"--{name.replace('_', '-')} must be >= 1")
    if getattr(args, "command", None) in ("boundaries", "solve") and not args.model:
        raise ConfigError("--model is required")


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    json_errors = "--json-errors" in argv
    try:
        args = build_parser().parse_args(argv)
        _validate(args)
        return args.func(args)
    except (ConfigError, DomainError, OSError, json.JSONDecodeError, KeyError) as exc:
        code, kind, err = EXIT_CONFIG, "config_error", exc
    except NonConvergenceError as exc:
        code, kind, err = EXIT_NONCONVERGENCE, "nonconvergence", exc
    except ExhaustionError as exc:
        code, kind, err = EXIT_RUNTIME, "exhaustion", exc
    msg = f"missing field {err}" if isinstance(err, KeyError) else str(err)
    exc = err
    if json_errors:
        sys.stderr.write(json.dumps({"error": kind, "type": type(exc).__name__, "message": msg, "exit_code": code}) + "\n")
    else:
        sys.stderr.write(f"seqlab: error: {msg}\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
