"""Experiment orchestration: spec files, multi-seed runs, CSV persistence.

An experiment spec is a flat JSON document naming an environment
descriptor, a solver, its configuration and a list of seeds.  Running it
produces one CSV per seed plus an aggregate CSV with per-iteration mean
and population standard deviation across seeds, and a ``runlog.json``
header echoing the spec, the package version and the schedule.

All floats are serialized with 17 significant digits, so reruns with
identical seeds are bitwise-identical and determinism is checkable with a
plain file compare.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .core import SolverConfig, StepSchedule
from .environments import env_from_descriptor
from .oracle import MetricRecord, best_response_gap, induced_mean_field
from .solvers import BaselineConfig, asac_run, baseline_run, mdp_ac_run

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
METRIC_COLUMNS = (
    "eps_pi",
    "eps_mu",
    "eps_v",
    "eps_j",
    "grad_proxy",
    "mu_residual_proxy",
    "j_hat",
)
CSV_COLUMNS = ("k", "seed") + METRIC_COLUMNS
SOLVERS = ("asac", "mdp_ac", "baseline")


class SpecError(ValueError):
    """Invalid experiment spec; ``field`` names the offending entry."""

    def __init__(self, message: str, field_name: str = ""):
        super().__init__(message)
        self.field_name = field_name


@dataclass(frozen=True)
class ExperimentSpec:
    """One reproducible experiment: environment, solver, seeds, output."""

    env: dict
    solver: str
    schedule: StepSchedule
    seeds: tuple[int, ...]
    max_iters: int = 100_000
    metric_every: int = 100
    b_v: float | None = None
    c_j: float = 10.0
    baseline: BaselineConfig | None = None
    out: str = "runs/experiment"

    def __post_init__(self):
        if self.solver not in SOLVERS:
            raise SpecError(f"unknown solver {self.solver!r}", "solver")
        if not self.seeds:
            raise SpecError("at least one seed is required", "seeds")
        if self.solver == "baseline" and self.baseline is None:
            raise SpecError("baseline solver requires a 'baseline' section", "baseline")
        # Fail early if the descriptor cannot rebuild the environment.
        try:
            env_from_descriptor(self.env)
        except ValueError as exc:
            raise SpecError(str(exc), "env") from exc

    def solver_config(self, seed: int) -> SolverConfig:
        return SolverConfig(
            schedule=self.schedule,
            b_v=self.b_v,
            c_j=self.c_j,
            max_iters=self.max_iters,
            metric_every=self.metric_every,
            seed=seed,
        )


def parse_spec(data: dict) -> ExperimentSpec:
    """Validate a raw spec dict, naming the offending field on failure."""

    def require(name, types):
        if name not in data:
            raise SpecError(f"missing required field {name!r}", name)
        value = data[name]
        if not isinstance(value, types):
            raise SpecError(
                f"field {name!r} has type {type(value).__name__}, "
                f"expected {'/'.join(t.__name__ for t in types)}",
                name,
            )
        return value

    env = require("env", (dict,))
    solver = require("solver", (str,))
    sched_raw = require("schedule", (dict,))
    try:
        schedule = StepSchedule(
            lambda0=sched_raw["lambda0"],
            alpha0=sched_raw["alpha0"],
            beta0=sched_raw["beta0"],
            xi0=sched_raw["xi0"],
            mode=sched_raw.get("mode", "practical"),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise SpecError(f"invalid schedule: {exc}", "schedule") from exc
    seeds_raw = require("seeds", (list,))
    if not all(isinstance(s, int) and 0 <= s < 2**64 for s in seeds_raw):
        raise SpecError("seeds must be 64-bit nonnegative integers", "seeds")
    baseline = None
    if "baseline" in data and data["baseline"] is not None:
        try:
            baseline = BaselineConfig(**data["baseline"])
        except (TypeError, ValueError) as exc:
            raise SpecError(f"invalid baseline section: {exc}", "baseline") from exc
    try:
        return ExperimentSpec(
            env=env,
            solver=solver,
            schedule=schedule,
            seeds=tuple(seeds_raw),
            max_iters=int(data.get("max_iters", 100_000)),
            metric_every=int(data.get("metric_every", 100)),
            b_v=data.get("b_v"),
            c_j=float(data.get("c_j", 10.0)),
            baseline=baseline,
            out=str(data.get("out", "runs/experiment")),
        )
    except (ValueError, TypeError) as exc:
        if isinstance(exc, SpecError):
            raise
        raise SpecError(str(exc)) from exc


def spec_to_dict(spec: ExperimentSpec) -> dict:
    """Canonical dict form; parse(serialize(spec)) round-trips identically."""
    out = {
        "env": spec.env,
        "solver": spec.solver,
        "schedule": {
            "mode": spec.schedule.mode,
            "lambda0": spec.schedule.lambda0,
            "alpha0": spec.schedule.alpha0,
            "beta0": spec.schedule.beta0,
            "xi0": spec.schedule.xi0,
        },
        "seeds": list(spec.seeds),
        "max_iters": spec.max_iters,
        "metric_every": spec.metric_every,
        "b_v": spec.b_v,
        "c_j": spec.c_j,
        "out": spec.out,
    }
    if spec.baseline is not None:
        out["baseline"] = {
            "tau": spec.baseline.tau,
            "inner_iters": spec.baseline.inner_iters,
            "outer_iters": spec.baseline.outer_iters,
            "q_step": spec.baseline.q_step,
            "mu_step": spec.baseline.mu_step,
        }
    return out


def load_spec(path: str | Path) -> ExperimentSpec:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SpecError(f"spec is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise SpecError("spec must be a JSON object")
    return parse_spec(data)


def save_spec(spec: ExperimentSpec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(spec_to_dict(spec), indent=2, sort_keys=True) + "\n")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _records_to_rows(records: list[MetricRecord], seed: int) -> list[tuple]:
    return [
        (
            r.k,
            seed,
            r.eps_pi,
            r.eps_mu,
            r.eps_v,
            r.eps_j,
            r.grad_proxy,
            r.mu_residual_proxy,
            r.j_hat,
        )
        for r in records
    ]


def run_single_seed(spec_dict: dict, seed: int) -> list[tuple]:
    """Execute one (solver, seed) run; importable so process pools can use it."""
    from .solvers import SolverAbort

    spec = parse_spec(spec_dict)
    env = env_from_descriptor(spec.env)
    try:
        if spec.solver == "asac":
            records = asac_run(env, spec.solver_config(seed))
        elif spec.solver == "mdp_ac":
            records = mdp_ac_run(env, spec.solver_config(seed))
        else:
            records = baseline_run(env, spec.baseline, seed=seed)
    except SolverAbort as exc:
        raise SolverAbort(f"seed {seed}: {exc}", seed=seed, **exc.diagnostics) from exc
    return _records_to_rows(records, seed)


def write_seed_csv(path: Path, rows: list[tuple]) -> None:
    lines = [",".join(CSV_COLUMNS)]
    for row in rows:
        k, seed, *values = row
        lines.append(",".join([str(int(k)), str(int(seed))] + [_fmt(v) for v in values]))
    path.write_text("\n".join(lines) + "\n")


def aggregate_rows(per_seed_rows: dict[int, list[tuple]]) -> list[tuple]:
    """Per-iteration mean and population std across seeds, sorted by k.

    All seeds of one experiment log at identical iteration indices; the
    aggregation is deterministic regardless of run completion order
    because seeds are processed in sorted order.
    """
    seeds = sorted(per_seed_rows)
    ks = [row[0] for row in per_seed_rows[seeds[0]]]
    for seed in seeds[1:]:
        if [row[0] for row in per_seed_rows[seed]] != ks:
            raise RuntimeError("seeds logged at different iteration indices")
    out = []
    for i, k in enumerate(ks):
        block = np.array([per_seed_rows[seed][i][2:] for seed in seeds], dtype=float)
        mean = block.mean(axis=0)
        std = block.std(axis=0)
        combined = []
        for col in range(mean.size):
            combined.extend((mean[col], std[col]))
        out.append((k, *combined))
    return out


def aggregate_columns() -> list[str]:
    cols = ["k"]
    for name in METRIC_COLUMNS:
        cols.extend((f"{name}_mean", f"{name}_std"))
    return cols


def write_aggregate_csv(path: Path, rows: list[tuple]) -> None:
    lines = [",".join(aggregate_columns())]
    for row in rows:
        k, *values = row
        lines.append(",".join([str(int(k))] + [_fmt(v) for v in values]))
    path.write_text("\n".join(lines) + "\n")


def run_experiment(
    spec: ExperimentSpec,
    jobs: int = 1,
    seed_offset: int = 0,
    out: str | Path | None = None,
) -> dict:
    """Run all seeds of a spec, write per-seed and aggregate CSVs.

    Returns a manifest mapping seeds to CSV paths.  With ``jobs > 1``, seed
    runs execute in separate processes; each rebuilds its environment from
    the descriptor, so results are identical to a sequential run.
    """
    out_dir = Path(out) if out is not None else Path(spec.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = [s + seed_offset for s in spec.seeds]
    spec_dict = spec_to_dict(spec)

    per_seed: dict[int, list[tuple]] = {}
    if jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {seed: pool.submit(run_single_seed, spec_dict, seed) for seed in seeds}
            for seed in seeds:
                per_seed[seed] = futures[seed].result()
    else:
        for seed in seeds:
            log.info("running seed %d", seed)
            per_seed[seed] = run_single_seed(spec_dict, seed)

    manifest = {"seeds": {}, "aggregate": str(out_dir / "aggregate.csv")}
    for seed in sorted(per_seed):
        path = out_dir / f"seed_{seed}.csv"
        write_seed_csv(path, per_seed[seed])
        manifest["seeds"][seed] = str(path)
    write_aggregate_csv(out_dir / "aggregate.csv", aggregate_rows(per_seed))

    runlog = {
        "schema_version": SCHEMA_VERSION,
        "code_version": __version__,
        "spec": spec_dict,
        "effective_seeds": seeds,
        "columns": list(CSV_COLUMNS),
        "aggregate_columns": aggregate_columns(),
    }
    (out_dir / "runlog.json").write_text(json.dumps(runlog, indent=2, sort_keys=True) + "\n")
    manifest["runlog"] = str(out_dir / "runlog.json")
    return manifest


def read_csv(path: str | Path) -> dict[str, np.ndarray]:
    """Read one of our CSVs into named columns."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        data = np.array(
            [[float(x) for x in line.strip().split(",")] for line in fh if line.strip()]
        )
    if data.size == 0:
        return {name: np.empty(0) for name in header}
    return {name: data[:, i] for i, name in enumerate(header)}


# ---------------------------------------------------------------------------
# Verification and equilibrium checking
# ---------------------------------------------------------------------------


def equilibrium_check(env, policy, mu, epsilon: float) -> dict:
    """Approximate-equilibrium test for a (policy, mean field) pair.

    PASS requires both halves: no policy improves the reward under the
    frozen mean field by more than epsilon, and the mean field is within
    epsilon of the one the policy induces.
    """
    gap = best_response_gap(env, policy, mu)
    mu_star = induced_mean_field(env, policy)
    consistency = float(np.linalg.norm(mu.probs - mu_star.probs))
    return {
        "best_response_gap": float(gap),
        "consistency_gap": consistency,
        "epsilon": float(epsilon),
        "verdict": "PASS" if (gap <= epsilon and consistency <= epsilon) else "FAIL",
    }


def verify_environment(
    env,
    checks: list[str],
    rho: float = 2.0,
    n_pairs: int = 200,
    herding_tol: float = 1e-9,
    mixing_c: float = 0.01,
    seed: int = 0,
) -> dict:
    """Run the selected assumption/definition checkers on an environment.

    Returns a report dict with one entry per check: measured constants and
    a PASS/FAIL flag.  Checker errors are recorded in-report rather than
    raised, so a failing environment still yields a complete report.
    """
    from . import oracle
    from .core import PolicyTable, SoftmaxPolicy

    report: dict = {"env": env.descriptor, "checks": {}}
    n, m = env.n_states, env.n_actions
    for check in checks:
        entry: dict = {}
        try:
            if check == "herding":
                rep = oracle.herding_check(env, rho=rho, n_pairs=n_pairs, rng=seed)
                entry.update(
                    rho=rep.rho,
                    kappa_hat=rep.kappa_hat,
                    n_pairs=rep.n_pairs,
                    n_failures=rep.n_failures,
                    passed=bool(rep.kappa_hat <= herding_tol),
                )
            elif check == "delta":
                delta_hat = oracle.estimate_contraction_delta(env, rng=seed)
                entry.update(delta_hat=delta_hat, passed=bool(delta_hat < 1.0))
            elif check == "mixing":
                uniform = PolicyTable.uniform(n, m)
                mu0 = induced_mean_field(env, uniform)
                t_mix = oracle.estimate_mixing_time(env, uniform, mu0, c=mixing_c)
                entry.update(mixing_time=t_mix, c=mixing_c, passed=True)
            elif check == "fisher":
                sigma_hat = oracle.fisher_min_eigenvalue(env, SoftmaxPolicy.zeros(n, m))
                entry.update(
                    restricted_min_eigenvalue=sigma_hat,
                    passed=bool(sigma_hat > 0.0),
                    note=(
                        "eigenvalue reported off the softmax structural "
                        "nullspace; the raw minimum is always 0"
                    ),
                )
            elif check == "oracle":
                entry.update(_oracle_self_check(env, seed))
            else:
                entry.update(error=f"unknown check {check!r}", passed=False)
        except oracle.OracleError as exc:
            entry.update(error=str(exc), passed=False)
        report["checks"][check] = entry
    report["passed"] = all(c.get("passed", False) for c in report["checks"].values())
    return report


def _oracle_self_check(env, seed: int) -> dict:
    """Internal-consistency battery: residuals and a gradient spot check."""
    from . import oracle
    from .core import SoftmaxPolicy, softmax_table
    from .environments import make_rng

    rng = make_rng(seed, stream=3)
    n, m = env.n_states, env.n_actions
    worst_stat = 0.0
    worst_bellman = 0.0
    worst_grad = 0.0
    for _ in range(5):
        theta = SoftmaxPolicy(rng.standard_normal((n, m)))
        pi = softmax_table(theta)
        mu = induced_mean_field(env, pi)
        res = oracle.stationary_for(env, pi, mu)
        worst_stat = max(worst_stat, res.residual)
        v = oracle.differential_value(env, pi, mu)
        p = oracle.transition_matrix(env, pi, mu)
        r_bar = (pi.probs * env.rewards(mu.probs)).sum(axis=1)
        gain = oracle.average_reward(env, pi, mu)
        worst_bellman = max(
            worst_bellman, float(np.abs(v - (r_bar - gain + p.T @ v)).max())
        )
        grad = oracle.exact_policy_gradient(env, theta, mu)
        fd = _fd_gradient(env, theta.theta, mu.probs, 1e-6)
        scale = max(float(np.linalg.norm(fd)), 1e-8)
        worst_grad = max(worst_grad, float(np.linalg.norm(grad - fd)) / scale)
    return {
        "stationary_residual": worst_stat,
        "bellman_residual": worst_bellman,
        "gradient_rel_error": worst_grad,
        "passed": bool(
            worst_stat <= 1e-10 and worst_bellman <= 1e-10 and worst_grad <= 1e-4
        ),
    }


def _fd_gradient(env, theta: np.ndarray, mu: np.ndarray, h: float) -> np.ndarray:
    """Central finite differences of the average reward in theta."""
    from . import oracle
    from .core import softmax_table

    flat = theta.ravel().copy()
    grad = np.zeros(flat.size)
    for i in range(flat.size):
        bumped = flat.copy()
        bumped[i] += h
        up = oracle.average_reward(env, softmax_table(bumped.reshape(theta.shape)), mu)
        bumped[i] -= 2 * h
        down = oracle.average_reward(env, softmax_table(bumped.reshape(theta.shape)), mu)
        grad[i] = (up - down) / (2 * h)
    return grad
