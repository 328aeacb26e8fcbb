"""Command-line entry point: ``aosq <subcommand> [flags]``.

A ``--config FILE`` of ``key = value`` lines overrides flags (keys use the
flag names without dashes, e.g. ``eps_r = 0.1``). ``AOSQ_SEED`` sets the
default seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Optional, Sequence

from .. import coreset
from ..core import (
    MissingGroundTruthError,
    OracleLedger,
    Query,
    QueryKind,
    ValidationError,
    core_set,
    ground_truth_oracle,
    read_dataset,
)
from ..pbd import phi_from_noise
from ..pqa import pqa
from ..pqe import DEFAULT_SIGMA0, NoiseModel, pqe
from . import experiments as ex
from .report import SchemaError, report
from .synth import Scenario, synth_generate

ALGOS = ("pqa", "pqe", "csc", "cse")


def _default_seed() -> int:
    raw = os.environ.get("AOSQ_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"AOSQ_SEED must be an integer, got {raw!r}")


def _csv_floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _csv_words(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def _core_size(text: str):
    return text if text == "truth" else int(text)


def _add_query_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--gamma", type=float, default=ex.DEFAULT_GAMMA)
    p.add_argument("--delta", type=float, default=ex.DEFAULT_DELTA)
    p.add_argument("--radius", type=float, default=ex.DEFAULT_RADIUS)
    p.add_argument("--seed", type=int, default=_default_seed())


def _add_scenario_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", type=int, default=2000, help="objects per synthetic dataset")
    p.add_argument("--sigma", type=float, default=0.1, help="std of the proxy-to-oracle noise")
    p.add_argument("--proxy-file", default=None, help="take proxy distances from this dataset file")


def _add_cse_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--eps-r", type=float, default=coreset.DEFAULT_EPS_R)
    p.add_argument("--delta-r", type=float, default=coreset.DEFAULT_DELTA_R)
    p.add_argument("--b-prime", type=int, default=coreset.DEFAULT_B_PRIME)
    p.add_argument("--eps-p", type=float, default=coreset.DEFAULT_EPS_P)


def _add_run_flags(p: argparse.ArgumentParser, trials: int, repeats: Optional[int]) -> None:
    p.add_argument("--trials", type=int, default=trials, help="number of query objects (dataset draws)")
    if repeats is not None:
        p.add_argument("--repeats", type=int, default=repeats, help="runs per query object")
    p.add_argument("--kinds", type=_csv_words, default=["RT", "PT"])
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=None, help="directory for records.jsonl and summary.json")
    p.add_argument("--config", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aosq", description="Proxy/oracle PT and RT query engine.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a synthetic dataset file")
    _add_scenario_flags(p)
    p.add_argument("--radius", type=float, default=ex.DEFAULT_RADIUS)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--config", default=None)

    p = sub.add_parser("query", help="answer one query over a dataset file")
    p.add_argument("dataset")
    p.add_argument("--kind", choices=["PT", "RT"], default="RT")
    _add_query_flags(p)
    p.add_argument("--algo", choices=ALGOS, default="pqa")
    p.add_argument("--sigma", type=float, default=None, help="known noise std (pqa)")
    p.add_argument("--c", type=_core_size, default=None, help="core set size, or 'truth' (csc)")
    p.add_argument("--mode", choices=coreset.MODES, default=None)
    p.add_argument("--b", type=int, default=100)
    p.add_argument("--sigma0", type=float, default=DEFAULT_SIGMA0)
    _add_cse_flags(p)
    p.add_argument("--no-validate", dest="validate", action="store_false",
                   help="skip scoring against oracle_dist")
    p.add_argument("--members", action="store_true", help="include returned ids")
    p.add_argument("--out", default=None, help="write the JSON record here instead of stdout")
    p.add_argument("--config", default=None)

    p = sub.add_parser("plan", help="compute a sample plan")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--c", type=int, required=True)
    p.add_argument("--delta", type=float, default=ex.DEFAULT_DELTA)
    p.add_argument("--mode", choices=coreset.MODES, default="exact")
    p.add_argument("--config", default=None)

    p = sub.add_parser("exp-pqa-perturb", help="PQA answer-size perturbation study")
    _add_scenario_flags(p)
    _add_query_flags(p)
    p.add_argument("--perturbs", type=_csv_floats, default=list(ex.DEFAULT_PERTURBS))
    _add_run_flags(p, trials=200, repeats=None)

    p = sub.add_parser("exp-csc", help="CSC under each planning mode with the true core set size")
    _add_scenario_flags(p)
    _add_query_flags(p)
    p.add_argument("--modes", type=_csv_words, default=list(ex.CSC_MODES))
    p.add_argument("--allow-open", action="store_true", help="keep datasets whose core set is not closed")
    p.add_argument("--timing", action="store_true", help="record plan CPU time (not reproducible)")
    _add_run_flags(p, trials=50, repeats=10)

    p = sub.add_parser("exp-cse", help="CSE (and optionally PQE) with unknown core set size")
    _add_scenario_flags(p)
    _add_query_flags(p)
    _add_cse_flags(p)
    p.add_argument("--algos", type=_csv_words, default=["cse"])
    p.add_argument("--mode", choices=coreset.MODES, default="m1")
    p.add_argument("--b", type=int, default=100)
    p.add_argument("--sigma0", type=float, default=DEFAULT_SIGMA0)
    p.add_argument("--closed", action="store_true", help="only use datasets with closed core sets")
    _add_run_flags(p, trials=50, repeats=10)

    p = sub.add_parser("report", help="aggregate run files")
    p.add_argument("files", nargs="*")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--out", default=None)
    return parser


# --- config files ----------------------------------------------------------

def read_config(path: str) -> dict[str, str]:
    out = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise SystemExit(f"cannot read config {path}: {exc}")
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SystemExit(f"{path}:{lineno}: expected key = value")
        key, value = (x.strip() for x in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def apply_config(parser: argparse.ArgumentParser, args: argparse.Namespace) -> argparse.Namespace:
    if not getattr(args, "config", None):
        return args
    sub = parser._subparsers._group_actions[0].choices[args.command]
    actions = {a.dest: a for a in sub._actions}
    for key, raw in read_config(args.config).items():
        action = actions.get(key)
        if action is None or key in ("config", "help"):
            raise SystemExit(f"{args.config}: unknown key {key!r} for {args.command}")
        if action.nargs == 0:
            value = raw.lower() in ("1", "true", "yes", "on")
            if isinstance(action, argparse._StoreFalseAction):
                value = not value
        else:
            try:
                value = action.type(raw) if action.type else raw
            except ValueError as exc:
                raise SystemExit(f"{args.config}: bad value for {key}: {exc}")
            if action.choices is not None and value not in action.choices:
                raise SystemExit(f"{args.config}: {key} must be one of {list(action.choices)}")
        setattr(args, key, value)
    return args


# --- subcommands -------------------------------------------------------------

def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=True)


def _scenario(args) -> Scenario:
    law = "file" if args.proxy_file else "uniform"
    return Scenario(n=args.n, proxy_law=law, noise_sigma=args.sigma, radius=args.radius,
                    seed=args.seed, proxy_file=args.proxy_file)


def cmd_gen(args) -> int:
    path = synth_generate(_scenario(args), args.out)
    print(_dumps({"path": str(path), "n": args.n, "sigma": args.sigma, "seed": args.seed}))
    return 0


def run_query(args) -> dict:
    ds = read_dataset(args.dataset)
    q = Query(QueryKind(args.kind), args.gamma, args.delta, args.radius)
    truth_needed = args.validate or args.algo in ("pqe", "csc", "cse") or args.c == "truth"
    if truth_needed and not ds.has_ground_truth:
        raise MissingGroundTruthError(f"{args.dataset}: no oracle_dist column, needed for "
                                      f"{'validation' if args.validate else args.algo}")
    truth = ex.Truth(ds, q.radius) if ds.has_ground_truth else None
    oracle = ground_truth_oracle(ds) if ds.has_ground_truth else None
    ledger = OracleLedger()
    if args.algo == "pqa":
        if args.sigma is None or args.sigma <= 0:
            raise ValidationError("pqa needs --sigma > 0 (the known noise std)")
        ans = pqa(ds, q, phi_from_noise(ds, q.radius, NoiseModel(args.sigma).cdf))
    elif args.algo == "pqe":
        ans = pqe(ds, q, args.b, args.sigma0, oracle, ledger, args.seed)
    elif args.algo == "csc":
        if args.c is None:
            raise ValidationError("csc needs --c (an integer or 'truth')")
        c = core_set(ds, q, truth.neighbors)[1] if args.c == "truth" else args.c
        if c < 1:
            raise ValidationError("csc needs a core set size >= 1")
        ans = coreset.csc(ds, q, c, q.delta, args.mode or "exact", oracle, ledger, args.seed)
    else:
        ans = coreset.cse(ds, q, oracle, ledger, args.seed, delta_r=args.delta_r,
                          epsilon_r=args.eps_r, b_prime=args.b_prime, epsilon_p=args.eps_p,
                          mode=args.mode or "m1")
    rec = {"algorithm": ans.algorithm, "kind": q.kind.value, "gamma": q.gamma, "delta": q.delta,
           "radius": q.radius, "seed": args.seed, "size": len(ans), "k": ans.prefix_k,
           "oracle_calls": ans.oracle_calls, "diagnostics": ans.diagnostics}
    if args.validate:
        rec.update(truth.evaluate(ans, q.kind, q.gamma))
    if args.members:
        rec["members"] = sorted(ans.member_ids)
    return rec


def cmd_query(args) -> int:
    text = _dumps(run_query(args)) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_plan(args) -> int:
    plan = coreset.make_plan(args.n, args.c, args.delta, args.mode)
    opt = coreset.plan_exact(args.n, args.c, args.delta)
    out = {**asdict(plan), "success_prob": coreset.success_prob_f(args.n, plan.s, plan.m, args.c),
           "savings_ratio": coreset.savings_ratio(args.n, plan, opt)}
    print(_dumps(out))
    return 0


def _emit(report_obj: ex.RunReport, out: Optional[str]) -> int:
    summary = json.dumps(report_obj.summary(), indent=2, sort_keys=True) + "\n"
    if out:
        d = Path(out)
        d.mkdir(parents=True, exist_ok=True)
        with (d / "records.jsonl").open("w", encoding="utf-8") as fh:
            for r in report_obj.records:
                fh.write(_dumps(r) + "\n")
        (d / "summary.json").write_text(summary, encoding="utf-8")
    sys.stdout.write(summary)
    return 0


def cmd_exp_pqa(args) -> int:
    rep = ex.experiment_pqa_perturb(_scenario(args), args.gamma, args.delta, args.perturbs,
                                    args.kinds, args.trials, args.seed, args.workers)
    return _emit(rep, args.out)


def cmd_exp_csc(args) -> int:
    rep = ex.experiment_csc(_scenario(args), args.gamma, args.delta, args.modes, args.kinds,
                            args.trials, args.repeats, args.seed, not args.allow_open,
                            args.timing, args.workers)
    return _emit(rep, args.out)


def cmd_exp_cse(args) -> int:
    params = ex.CSEParams(args.delta_r, args.eps_r, args.b_prime, args.eps_p, args.mode,
                          args.b, args.sigma0)
    rep = ex.experiment_cse(_scenario(args), args.gamma, args.delta, args.kinds, args.algos,
                            params, args.trials, args.repeats, args.seed, args.closed, args.workers)
    return _emit(rep, args.out)


def cmd_report(args) -> int:
    text = report(args.files, args.format)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


COMMANDS = {"gen": cmd_gen, "query": cmd_query, "plan": cmd_plan,
            "exp-pqa-perturb": cmd_exp_pqa, "exp-csc": cmd_exp_csc,
            "exp-cse": cmd_exp_cse, "report": cmd_report}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = apply_config(parser, parser.parse_args(argv))
    try:
        return COMMANDS[args.command](args)
    except (ValidationError, SchemaError, ValueError, OSError) as exc:
        print(f"aosq: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
