"""Command-line interface.

Subcommands:
  run          execute an experiment spec, writing per-seed + aggregate CSVs
  verify       run assumption/definition checkers on an environment
  equilibrium  test a (policy, mean field) pair for approximate equilibrium
  list-envs    list the available environment families

Log verbosity is controlled by the HERD_MFG_LOG environment variable
(DEBUG/INFO/WARNING/ERROR; default WARNING).

Exit codes: 0 success, 2 invalid spec or arguments (with a field
diagnostic), 3 solver abort (naming the seed).  ``verify`` exits 0 even
when checks fail; failures are recorded in the report.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .core import MeanField, PolicyTable
from .environments import env_from_descriptor, list_families
from .harness import (
    SpecError,
    equilibrium_check,
    load_spec,
    run_experiment,
    verify_environment,
)
from .oracle import OracleError
from .solvers import SolverAbort

log = logging.getLogger("herdmfg")


def _setup_logging():
    level = os.environ.get("HERD_MFG_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))


def _load_descriptor(arg: str) -> dict:
    """Accept either a path to a descriptor JSON file or inline JSON."""
    path = Path(arg)
    if path.exists():
        return json.loads(path.read_text())
    try:
        return json.loads(arg)
    except json.JSONDecodeError as exc:
        raise SpecError(f"--env is neither a file nor valid JSON: {exc}", "env") from exc


def _cmd_run(args) -> int:
    try:
        spec = load_spec(args.spec)
    except SpecError as exc:
        field = f" (field: {exc.field_name})" if exc.field_name else ""
        print(f"invalid spec: {exc}{field}", file=sys.stderr)
        return 2
    try:
        manifest = run_experiment(
            spec, jobs=args.jobs, seed_offset=args.seed_offset, out=args.out
        )
    except SolverAbort as exc:
        print(f"solver aborted: {exc} {exc.diagnostics}", file=sys.stderr)
        return 3
    print(json.dumps(manifest, indent=2))
    return 0


def _cmd_verify(args) -> int:
    try:
        env = env_from_descriptor(_load_descriptor(args.env))
    except (SpecError, ValueError) as exc:
        print(f"invalid environment descriptor: {exc}", file=sys.stderr)
        return 2
    checks = [c.strip() for c in args.checks.split(",") if c.strip()]
    report = verify_environment(
        env,
        checks,
        rho=args.rho,
        n_pairs=args.pairs,
        mixing_c=args.mixing_c,
        seed=args.seed,
    )
    text = json.dumps(_round_floats(report), indent=2, sort_keys=True)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n")
    print(text)
    for name, entry in report["checks"].items():
        status = "PASS" if entry.get("passed") else "FAIL"
        print(f"check {name}: {status}")
    return 0


def _round_floats(obj):
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int, bool)) or obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return str(obj)


def _cmd_equilibrium(args) -> int:
    try:
        env = env_from_descriptor(_load_descriptor(args.env))
        policy = PolicyTable(np.asarray(json.loads(Path(args.policy).read_text()), float))
        mu = MeanField(np.asarray(json.loads(Path(args.mu).read_text()), float))
    except (SpecError, ValueError, json.JSONDecodeError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 2
    try:
        result = equilibrium_check(env, policy, mu, args.epsilon)
    except OracleError as exc:
        print(json.dumps({"verdict": "ERROR", "error": str(exc)}, indent=2))
        return 0
    print(json.dumps(result, indent=2))
    return 0


def _cmd_list_envs(_args) -> int:
    for family in list_families():
        print(family)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="herdmfg", description="Tabular mean-field-game toolkit"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute an experiment spec")
    run_p.add_argument("--spec", required=True, help="path to an experiment spec JSON")
    run_p.add_argument("--out", default=None, help="override the spec's output directory")
    run_p.add_argument("--jobs", type=int, default=1, help="concurrent seed runs")
    run_p.add_argument(
        "--seed-offset", type=int, default=0, help="added to every seed in the spec"
    )
    run_p.set_defaults(func=_cmd_run)

    verify_p = sub.add_parser("verify", help="run environment checkers")
    verify_p.add_argument("--env", required=True, help="descriptor JSON (path or inline)")
    verify_p.add_argument(
        "--checks",
        default="herding,delta,mixing,fisher,oracle",
        help="comma-separated subset of herding,delta,mixing,fisher,oracle",
    )
    verify_p.add_argument("--rho", type=float, default=2.0, help="herding constant rho")
    verify_p.add_argument("--pairs", type=int, default=200, help="herding sample pairs")
    verify_p.add_argument("--mixing-c", type=float, default=0.01, dest="mixing_c")
    verify_p.add_argument("--seed", type=int, default=0)
    verify_p.add_argument("--out", default=None, help="write the report JSON here")
    verify_p.set_defaults(func=_cmd_verify)

    eq_p = sub.add_parser("equilibrium", help="test a (policy, mean field) pair")
    eq_p.add_argument("--env", required=True, help="descriptor JSON (path or inline)")
    eq_p.add_argument("--policy", required=True, help="policy table JSON file")
    eq_p.add_argument("--mu", required=True, help="mean field JSON file")
    eq_p.add_argument("--epsilon", type=float, default=1e-6)
    eq_p.set_defaults(func=_cmd_equilibrium)

    list_p = sub.add_parser("list-envs", help="list environment families")
    list_p.set_defaults(func=_cmd_list_envs)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
