"""Learning algorithms: the single-loop mean-field actor-critic, its
average-reward-MDP specialization, and the regularized fixed-point baseline
used for comparisons.

A solver run is one sample path: every iteration draws exactly one
environment transition and advances all iterates once.  States are value
objects; each step returns a new bundle and never mutates its input, so
runs with different seeds can execute concurrently without locking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import (
    MeanField,
    OperatorEstimates,
    PolicyTable,
    SoftmaxPolicy,
    SolverConfig,
    ValueEstimate,
    clamp_unit,
    project_l2_ball,
    project_simplex_raw,
    softmax_row,
    softmax_table,
    step_sizes,
)
from .environments import TabularMFG, draw_index, make_rng
from .oracle import MetricRecord, compute_metrics
from .oracle import metrics as oracle_metrics


class SolverAbort(RuntimeError):
    """A run produced non-finite iterates (step sizes too aggressive)."""

    def __init__(self, message: str, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class AsacState:
    """Full iterate bundle of the single-loop solver at iteration k.

    Component invariants (simplex feasibility, critic ball, operator
    bounds) hold after every step; ``samples`` counts environment
    transitions and must always equal ``k``.
    """

    theta: SoftmaxPolicy
    mu_hat: MeanField
    value: ValueEstimate
    ops: OperatorEstimates
    current_state: int
    k: int
    rng: np.random.Generator = field(repr=False, compare=False)
    samples: int = 0

    def policy(self) -> PolicyTable:
        return softmax_table(self.theta)


@dataclass(frozen=True)
class BaselineConfig:
    """Nested fixed-point baseline: Q-learning inner loop, mean-field outer.

    ``tau`` is the entropy-regularization weight; tau = 0 recovers the
    (near-)greedy unregularized variant.
    """

    tau: float = 0.0
    inner_iters: int = 1000
    outer_iters: int = 100
    q_step: float = 0.1
    mu_step: float = 0.5

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError("tau must be nonnegative")
        if self.inner_iters < 0 or self.outer_iters < 1:
            raise ValueError("iteration counts out of range")
        if not (self.q_step > 0 and self.mu_step > 0):
            raise ValueError("learning rates must be positive")


TAU_FLOOR = 1e-8


def asac_init(env: TabularMFG, config: SolverConfig) -> AsacState:
    """Fresh iterate bundle: uniform policy and mean field, zero estimates.

    The average-reward tracker starts centered at 0.5; the initial state
    is drawn uniformly from the run's seeded stream.
    """
    n, m = env.n_states, env.n_actions
    rng = make_rng(config.seed)
    s0 = int(rng.integers(n))
    return AsacState(
        theta=SoftmaxPolicy.zeros(n, m),
        mu_hat=MeanField.uniform(n),
        value=ValueEstimate(np.zeros(n), 0.5),
        ops=OperatorEstimates.zeros(n, m),
        current_state=s0,
        k=0,
        rng=rng,
        samples=0,
    )


def _check_finite(k: int, **arrays) -> None:
    for name, arr in arrays.items():
        if not np.all(np.isfinite(arr)):
            raise SolverAbort(
                f"non-finite {name} at iteration {k} (step sizes too aggressive)",
                iteration=k,
                quantity=name,
            )


def _advance(
    env: TabularMFG,
    state: AsacState,
    config: SolverConfig,
    update_mean_field: bool,
    td_baseline: bool,
) -> AsacState:
    """Shared body of the MFG step and its MDP specialization.

    Order within one iteration: draw the single sample under the current
    policy and mean-field estimate; advance theta / mu / V / J using the
    *current* operator estimates; then refresh the operator estimates from
    the sample and the pre-update iterates.
    """
    n, m = env.n_states, env.n_actions
    lam, alpha, beta, xi = step_sizes(config.schedule, state.k)
    b_v = config.resolved_b_v(n)

    theta = state.theta.theta
    mu = state.mu_hat.probs
    v, j = state.value.v, state.value.j
    ops = state.ops
    s = state.current_state
    rng = state.rng

    # Single environment transition (one sample per iteration).
    row = softmax_row(theta[s])
    a = draw_index(rng, row)
    r = env.reward(s, a, mu)
    p_next = env.transition(s, a, mu)
    s_next = draw_index(rng, p_next)

    # Iterate updates driven by the smoothed estimates from iteration k.
    theta_new = theta + alpha * ops.f.reshape(n, m)
    if update_mean_field:
        mu_new = project_simplex_raw(mu + xi * ops.h)
    else:
        mu_new = mu
    v_new = project_l2_ball(v + beta * ops.g_v, b_v)
    j_new = clamp_unit(j + beta * ops.g_j)

    # Operator estimates from the new sample and the pre-update iterates.
    score = -row
    score[a] += 1.0
    td = r + v[s_next] - (v[s] if td_baseline else 0.0)
    f_new = (1.0 - lam) * ops.f
    f_new[s * m : (s + 1) * m] += lam * td * score
    g_v_new = (1.0 - lam) * ops.g_v
    g_v_new[s] += lam * (r - j + v[s_next] - v[s])
    g_j_new = (1.0 - lam) * ops.g_j + lam * config.c_j * (r - j)
    if update_mean_field:
        h_new = (1.0 - lam) * ops.h + lam * (-mu)
        h_new[s] += lam
    else:
        h_new = ops.h

    _check_finite(state.k, theta=theta_new, v=v_new, f=f_new, g_v=g_v_new)
    new_state = AsacState(
        theta=SoftmaxPolicy(theta_new),
        mu_hat=MeanField(mu_new),
        value=ValueEstimate(v_new, j_new),
        ops=OperatorEstimates(f_new, g_v_new, g_j_new, h_new),
        current_state=s_next,
        k=state.k + 1,
        rng=rng,
        samples=state.samples + 1,
    )
    # Boundedness guarantees are structural; a violation is a bug.
    new_state.ops.check_bounds(b_v, config.c_j)
    new_state.value.check_radius(b_v)
    return new_state


def asac_step(env: TabularMFG, state: AsacState, config: SolverConfig) -> AsacState:
    """One iteration of the single-loop mean-field actor-critic."""
    return _advance(env, state, config, update_mean_field=True, td_baseline=True)


def mdp_ac_step(env_mdp: TabularMFG, state: AsacState, config: SolverConfig) -> AsacState:
    """One iteration of the average-reward-MDP actor-critic.

    Identical to the MFG step with the mean-field iterate frozen, except
    that the actor's temporal-difference factor is r + V(s') without the
    -V(s) baseline, matching the degenerate-game variant of the update
    (both forms are unbiased because the score function has zero mean).
    """
    if not env_mdp.is_mdp():
        raise ValueError("mdp_ac_step requires a mean-field independent environment")
    return _advance(env_mdp, state, config, update_mean_field=False, td_baseline=False)


MetricHook = Callable[[TabularMFG, AsacState], MetricRecord]


def _run_loop(
    env: TabularMFG,
    config: SolverConfig,
    step_fn,
    metric_hook: MetricHook | None,
    return_state: bool,
):
    hook = oracle_metrics if metric_hook is None else metric_hook
    state = asac_init(env, config)
    records: list[MetricRecord] = []
    for _ in range(config.max_iters):
        state = step_fn(env, state, config)
        if state.k % config.metric_every == 0:
            records.append(hook(env, state))
    if return_state:
        return records, state
    return records


def asac_run(
    env: TabularMFG,
    config: SolverConfig,
    metric_hook: MetricHook | None = None,
    return_state: bool = False,
):
    """Run the mean-field solver for max_iters steps, logging metrics.

    The hook fires every ``metric_every`` iterations and never feeds back
    into the solver state.  Fully deterministic given the config seed.
    """
    return _run_loop(env, config, asac_step, metric_hook, return_state)


def mdp_ac_run(
    env_mdp: TabularMFG,
    config: SolverConfig,
    metric_hook: MetricHook | None = None,
    return_state: bool = False,
):
    """Run the MDP actor-critic for max_iters steps, logging metrics."""
    if not env_mdp.is_mdp():
        raise ValueError("mdp_ac_run requires a mean-field independent environment")
    return _run_loop(env_mdp, config, mdp_ac_step, metric_hook, return_state)


def _soft_value(q_row: np.ndarray, tau: float) -> float:
    """Centered soft maximum: tau * (logsumexp(q/tau) - log |A|).

    Interpolates between max (tau -> 0) and the plain mean (tau -> inf).
    The -log|A| centering removes the constant entropy bonus, which would
    otherwise drift the Q table upward without bound (the gain tracker is
    clamped to [0, 1] and cannot absorb it).
    """
    z = q_row / tau
    zmax = z.max()
    return float(tau * (zmax + math.log(np.exp(z - zmax).sum()) - math.log(q_row.size)))


@dataclass(frozen=True)
class BaselineState:
    """Iterates of the reconstructed fixed-point baseline."""

    q: np.ndarray
    mu_hat: MeanField
    j_hat: float
    current_state: int
    samples: int

    def theta_equivalent(self, tau: float) -> SoftmaxPolicy:
        """Softmax parameters generating the baseline's policy exactly."""
        return SoftmaxPolicy(self.q / max(tau, TAU_FLOOR))


def baseline_run(
    env: TabularMFG,
    config: BaselineConfig,
    metric_hook=None,
    seed: int = 0,
    return_state: bool = False,
):
    """Reconstructed nested fixed-point baseline with entropy weight tau.

    Outer loop: (i) run soft relative Q-learning for ``inner_iters``
    sampled steps with the mean field frozen, acting with the per-state
    softmax of Q / max(tau, floor); (ii) move the mean-field estimate
    toward the inner trajectory's empirical state occupancy at rate
    ``mu_step``.  Metrics are logged once per outer iteration with the
    sample count as the iteration index, so budgets compare directly
    against the single-loop solver.

    Labeled "reconstructed baseline" in all outputs: it captures the
    oracle structure and the two regularization regimes of the nested
    fixed-point family, not any specific published implementation.
    """
    n, m = env.n_states, env.n_actions
    rng = make_rng(seed)
    tau_eff = max(config.tau, TAU_FLOOR)
    q = np.zeros((n, m))
    mu = np.full(n, 1.0 / n)
    j_hat = 0.5
    s = int(rng.integers(n))
    samples = 0
    records: list[MetricRecord] = []
    hook = compute_metrics if metric_hook is None else metric_hook
    for _ in range(config.outer_iters):
        counts = np.zeros(n)
        for _ in range(config.inner_iters):
            counts[s] += 1.0
            a = draw_index(rng, softmax_row(q[s] / tau_eff))
            r = env.reward(s, a, mu)
            s_next = draw_index(rng, env.transition(s, a, mu))
            target = r - j_hat + _soft_value(q[s_next], tau_eff)
            q[s, a] += config.q_step * (target - q[s, a])
            j_hat = clamp_unit(j_hat + config.q_step * (r - j_hat))
            s = s_next
            samples += 1
        if not np.all(np.isfinite(q)) or np.abs(q).max() > 1e6:
            raise SolverAbort(
                "baseline Q table diverged", samples=samples, q_max=float(np.abs(q).max())
            )
        if config.inner_iters > 0:
            occupancy = counts / counts.sum()
            mu = (1.0 - config.mu_step) * mu + config.mu_step * occupancy
        v_soft = np.array([_soft_value(q[i], tau_eff) for i in range(n)])
        records.append(
            hook(
                env,
                SoftmaxPolicy(q / tau_eff),
                MeanField(mu),
                v_soft - v_soft.mean(),
                j_hat,
                samples,
            )
        )
    if return_state:
        return records, BaselineState(
            q=q.copy(), mu_hat=MeanField(mu), j_hat=j_hat, current_state=s, samples=samples
        )
    return records
