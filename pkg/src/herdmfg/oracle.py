"""Exact, model-based oracles for equilibrium metrics and assumption checks.

Everything here evaluates closed-form or linear-algebraic quantities from
the environment's kernel and reward tables: stationary distributions,
induced mean fields, average rewards, differential values, exact policy
gradients, best responses, and the numerical certifiers for the herding
condition, the mean-field contraction factor, mixing times and Fisher
non-degeneracy.

Transition matrices follow the column-stochastic convention: column s holds
the next-state distribution out of s, so the stationary distribution solves
nu = P nu.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import MeanField, PolicyTable, SoftmaxPolicy, softmax_table
from .environments import TabularMFG, make_rng

log = logging.getLogger(__name__)

STATIONARY_TOL = 1e-10
DIRECT_SOLVE_MAX_STATES = 200
POWER_ITER_TOL = 1e-12
POWER_ITER_CAP = 10**6
ERGODICITY_EIGENVALUE_CUTOFF = 1.0 - 1e-9


class OracleError(RuntimeError):
    """Raised when an exact computation cannot certify its result.

    ``diagnostics`` carries the numbers needed to understand the failure
    (residuals, last iterates, eigenvalues) without reformatting.
    """

    def __init__(self, message: str, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class StationaryResult:
    dist: MeanField
    residual: float


@dataclass(frozen=True)
class MetricRecord:
    """One logged evaluation of the convergence metrics.

    ``eps_*`` are the squared gaps between each iterate and its learning
    target; ``grad_proxy`` and ``mu_residual_proxy`` are the model-based
    proxies that remain computable when the equilibrium is unknown.
    """

    k: int
    eps_pi: float
    eps_mu: float
    eps_v: float
    eps_j: float
    grad_proxy: float
    mu_residual_proxy: float
    j_hat: float

    def __post_init__(self):
        for name in ("eps_pi", "eps_mu", "eps_v", "eps_j"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass(frozen=True)
class HerdingReport:
    """Smallest herding constant consistent with the sampled policy pairs."""

    rho: float
    kappa_hat: float
    n_pairs: int
    worst_pair: tuple | None
    n_failures: int = 0


def _policy_probs(policy: PolicyTable | np.ndarray) -> np.ndarray:
    return policy.probs if isinstance(policy, PolicyTable) else np.asarray(policy, float)


def _mu_probs(mu: MeanField | np.ndarray) -> np.ndarray:
    return mu.probs if isinstance(mu, MeanField) else np.asarray(mu, dtype=float)


def transition_matrix(
    env: TabularMFG, policy: PolicyTable, mu: MeanField | np.ndarray
) -> np.ndarray:
    """State chain P[s', s] = sum_a P^mu(s'|s,a) pi(a|s), column-stochastic."""
    kernel = env.kernel(_mu_probs(mu))
    return np.einsum("sa,sap->ps", _policy_probs(policy), kernel)


def stationary_distribution(P: np.ndarray, tol: float = STATIONARY_TOL) -> StationaryResult:
    """Stationary distribution of a column-stochastic matrix.

    For chains up to DIRECT_SOLVE_MAX_STATES states, solves (P - I) nu = 0
    with the normalization sum(nu) = 1 appended, as a least-squares system;
    beyond that falls back to power iteration.  Rejects chains whose
    second-largest eigenvalue modulus is numerically 1 (reducible or
    periodic, i.e. not uniformly geometrically ergodic).
    """
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    if P.shape != (n, n):
        raise ValueError("transition matrix must be square")
    col_err = np.abs(P.sum(axis=0) - 1.0)
    if np.any(col_err > 1e-9):
        raise ValueError("matrix is not column-stochastic")

    if n <= DIRECT_SOLVE_MAX_STATES:
        eigvals = np.sort(np.abs(np.linalg.eigvals(P)))[::-1]
        if n > 1 and eigvals[1] >= ERGODICITY_EIGENVALUE_CUTOFF:
            raise OracleError(
                "chain is not ergodic (reducible or periodic)",
                second_eigenvalue_modulus=float(eigvals[1]),
            )
        a = np.vstack([P - np.eye(n), np.ones((1, n))])
        b = np.zeros(n + 1)
        b[-1] = 1.0
        nu, *_ = np.linalg.lstsq(a, b, rcond=None)
    else:
        nu = np.full(n, 1.0 / n)
        for _ in range(POWER_ITER_CAP):
            nxt = P @ nu
            if np.abs(nxt - nu).sum() <= POWER_ITER_TOL:
                nu = nxt
                break
            nu = nxt
        else:
            raise OracleError(
                "power iteration did not converge",
                residual=float(np.linalg.norm(P @ nu - nu)),
            )

    if np.any(nu < -1e-9):
        raise OracleError(
            "stationary solve produced negative mass (chain not ergodic?)",
            min_entry=float(nu.min()),
        )
    nu = np.maximum(nu, 0.0)
    nu /= nu.sum()
    residual = float(np.linalg.norm(P @ nu - nu))
    if residual > tol:
        raise OracleError(
            "stationary residual above tolerance", residual=residual, tol=tol
        )
    return StationaryResult(dist=MeanField(nu), residual=residual)


def stationary_for(
    env: TabularMFG, policy: PolicyTable, mu: MeanField | np.ndarray
) -> StationaryResult:
    return stationary_distribution(transition_matrix(env, policy, mu))


def induced_mean_field(
    env: TabularMFG,
    policy: PolicyTable,
    tol: float = 1e-10,
    max_iters: int = 10_000,
) -> MeanField:
    """Fixed point of mu -> nu^{pi, mu}, the population distribution under pi.

    Pure fixed-point iteration from the uniform distribution; if it fails
    to settle (an oscillation means the contraction factor is not < 1), one
    retry with 0.5 damping is attempted before giving up.
    """

    if max_iters < 1:
        raise ValueError("max_iters must be at least 1")

    def iterate(damping: float) -> MeanField | tuple[np.ndarray, np.ndarray]:
        mu = np.full(env.n_states, 1.0 / env.n_states)
        nu = mu
        for _ in range(max_iters):
            nu = stationary_for(env, policy, mu).dist.probs
            step = damping * nu + (1.0 - damping) * mu
            if np.linalg.norm(step - mu) <= tol:
                return MeanField(step)
            mu = step
        return mu, nu

    result = iterate(1.0)
    if isinstance(result, MeanField):
        return result
    result = iterate(0.5)
    if isinstance(result, MeanField):
        return result
    last_mu, last_nu = result
    raise OracleError(
        "mean-field fixed point did not converge (contraction factor >= 1?)",
        last_mu=last_mu,
        last_nu=last_nu,
        gap=float(np.linalg.norm(last_nu - last_mu)),
    )


def average_reward(
    env: TabularMFG, policy: PolicyTable, mu: MeanField | np.ndarray
) -> float:
    """Long-run reward rate of pi in the frozen-mean-field chain."""
    mu_arr = _mu_probs(mu)
    pi = _policy_probs(policy)
    nu = stationary_for(env, policy, mu_arr).dist.probs
    r_bar = (pi * env.rewards(mu_arr)).sum(axis=1)
    return float(nu @ r_bar)


def _value_and_gain(
    env: TabularMFG, policy: PolicyTable, mu: MeanField | np.ndarray
) -> tuple[np.ndarray, float, np.ndarray]:
    """Differential values, gain, and the chain matrix, solved exactly."""
    mu_arr = _mu_probs(mu)
    pi = _policy_probs(policy)
    P = transition_matrix(env, policy, mu_arr)
    nu = stationary_distribution(P).dist.probs
    r_bar = (pi * env.rewards(mu_arr)).sum(axis=1)
    gain = float(nu @ r_bar)
    n = env.n_states
    a = np.vstack([np.eye(n) - P.T, np.ones((1, n))])
    b = np.concatenate([r_bar - gain, [0.0]])
    v, *_ = np.linalg.lstsq(a, b, rcond=None)
    v = v - v.mean()
    residual = np.abs(v - (r_bar - gain + P.T @ v)).max()
    if residual > 1e-10:
        raise OracleError(
            "value function residual above tolerance (chain not ergodic?)",
            residual=float(residual),
        )
    return v, gain, P


def differential_value(
    env: TabularMFG, policy: PolicyTable, mu: MeanField | np.ndarray
) -> np.ndarray:
    """Relative value of each start state, normalized to sum to zero.

    Solves v = r_bar - J 1 + P^T v; the solution is unique once the
    all-ones direction is pinned down, and the zero-sum representative is
    the one the convergence metrics are defined against.
    """
    v, _, _ = _value_and_gain(env, policy, mu)
    return v


def exact_policy_gradient(
    env: TabularMFG, theta: SoftmaxPolicy, mu: MeanField | np.ndarray
) -> np.ndarray:
    """Gradient of the average reward in the policy parameters, exactly.

    Triple sum over (s, a, s') of the stationary weight, the policy, the
    kernel and the temporal-difference factor, contracted against the
    softmax score function.  Returned in the flat state-major layout.
    """
    mu_arr = _mu_probs(mu)
    pi = softmax_table(theta)
    v, _, _ = _value_and_gain(env, pi, mu_arr)
    nu = stationary_for(env, pi, mu_arr).dist.probs
    kernel = env.kernel(mu_arr)
    q = env.rewards(mu_arr) + np.einsum("sap,p->sa", kernel, v)
    adv = q - v[:, None]
    probs = pi.probs
    baseline = (probs * adv).sum(axis=1, keepdims=True)
    grad = nu[:, None] * probs * (adv - baseline)
    return grad.ravel()


def best_response_value(
    env: TabularMFG,
    mu: MeanField | np.ndarray,
    tol: float = 1e-10,
    max_iters: int = 200_000,
) -> tuple[float, PolicyTable]:
    """Optimal gain and a deterministic optimal policy for the frozen-mu MDP.

    Relative value iteration with the half-lazy aperiodicity transform
    P <- (I + P)/2, which leaves every policy's average reward unchanged
    while guaranteeing convergence in span seminorm.  Ties in the greedy
    step break toward the lowest action index.
    """
    mu_arr = _mu_probs(mu)
    kernel = env.kernel(mu_arr)
    rewards = env.rewards(mu_arr)
    n = env.n_states
    lazy = 0.5 * kernel
    idx = np.arange(n)
    lazy[idx, :, idx] += 0.5
    h = np.zeros(n)
    span = np.inf
    for _ in range(max_iters):
        q = rewards + np.einsum("sap,p->sa", lazy, h)
        th = q.max(axis=1)
        diff = th - h
        span = float(diff.max() - diff.min())
        if span <= tol:
            gain = float(0.5 * (diff.max() + diff.min()))
            greedy = q.argmax(axis=1)
            return gain, PolicyTable.deterministic(greedy, env.n_actions)
        h = th - th[0]
    raise OracleError(
        "relative value iteration span did not contract",
        span=span,
        max_iters=max_iters,
    )


def best_response_gap(
    env: TabularMFG, policy: PolicyTable, mu: MeanField | np.ndarray
) -> float:
    """max_pi' J(pi', mu) - J(pi, mu), the optimality half of the MFE test."""
    value, _ = best_response_value(env, mu)
    return value - average_reward(env, policy, mu)


def compute_metrics(
    env: TabularMFG,
    theta: SoftmaxPolicy,
    mu_hat: MeanField | np.ndarray,
    v_hat: np.ndarray,
    j_hat: float,
    k: int,
) -> MetricRecord:
    """Evaluate all convergence metrics at one iterate bundle.

    ``eps_pi`` and ``eps_mu`` are measured against the induced mean field
    of the current policy (one fixed-point solve each); ``eps_v`` compares
    against the exact differential values after removing the all-ones
    component, which is unidentifiable; ``eps_j`` against the exact gain.
    """
    mu_arr = _mu_probs(mu_hat)
    pi = softmax_table(theta)
    mu_star = induced_mean_field(env, pi).probs
    grad_at_star = exact_policy_gradient(env, theta, mu_star)
    eps_pi = float(grad_at_star @ grad_at_star)
    diff_mu = mu_arr - mu_star
    eps_mu = float(diff_mu @ diff_mu)
    v_true, gain, P = _value_and_gain(env, pi, mu_arr)
    d = np.asarray(v_hat, dtype=float) - v_true
    d_perp = d - d.mean()
    eps_v = float(d_perp @ d_perp)
    eps_j = float((j_hat - gain) ** 2)
    grad_proxy = float(np.linalg.norm(exact_policy_gradient(env, theta, mu_arr)))
    nu_hat = stationary_distribution(P).dist.probs
    mu_residual_proxy = float(np.linalg.norm(mu_arr - nu_hat))
    return MetricRecord(
        k=int(k),
        eps_pi=eps_pi,
        eps_mu=eps_mu,
        eps_v=eps_v,
        eps_j=eps_j,
        grad_proxy=grad_proxy,
        mu_residual_proxy=mu_residual_proxy,
        j_hat=float(j_hat),
    )


def metrics(env: TabularMFG, state) -> MetricRecord:
    """Metrics for a solver iterate bundle (see :mod:`herdmfg.solvers`)."""
    return compute_metrics(
        env, state.theta, state.mu_hat, state.value.v, state.value.j, state.k
    )


def herding_check(
    env: TabularMFG,
    rho: float,
    n_pairs: int,
    rng: np.random.Generator | int = 0,
    theta_scale: float = 1.0,
) -> HerdingReport:
    """Estimate the smallest herding slack consistent with sampled pairs.

    For random softmax policy pairs (pi, pi'), evaluates the defect

        [l(pi) - l(pi')] - rho * [J(pi, mu*(pi)) - J(pi', mu*(pi))],

    where l is the equilibrium-value map l(pi) = J(pi, mu*(pi)).  The
    condition holds with constant kappa iff every defect is at most
    kappa * ||pi - pi'||, so kappa_hat is the max positive defect divided
    by the pair distance (0 when every defect is nonpositive).
    """
    if not rho > 0:
        raise ValueError("rho must be positive")
    if isinstance(rng, (int, np.integer)):
        rng = make_rng(int(rng), stream=7)
    n, m = env.n_states, env.n_actions
    kappa_hat = 0.0
    worst = None
    failures = 0
    evaluated = 0
    for _ in range(n_pairs):
        theta_a = rng.standard_normal((n, m)) * theta_scale
        theta_b = rng.standard_normal((n, m)) * theta_scale
        pi_a = softmax_table(theta_a)
        pi_b = softmax_table(theta_b)
        dist = float(np.linalg.norm(pi_a.probs - pi_b.probs))
        if dist < 1e-9:
            continue
        try:
            mu_a = induced_mean_field(env, pi_a, tol=1e-12)
            mu_b = induced_mean_field(env, pi_b, tol=1e-12)
            ell_a = average_reward(env, pi_a, mu_a)
            ell_b = average_reward(env, pi_b, mu_b)
            cross = average_reward(env, pi_b, mu_a)
        except OracleError as exc:
            failures += 1
            log.warning("herding pair skipped: %s", exc)
            continue
        evaluated += 1
        defect = (ell_a - ell_b) - rho * (ell_a - cross)
        ratio = max(defect, 0.0) / dist
        if ratio > kappa_hat:
            kappa_hat = ratio
            worst = (pi_a.probs.copy(), pi_b.probs.copy())
    return HerdingReport(
        rho=float(rho),
        kappa_hat=kappa_hat,
        n_pairs=evaluated,
        worst_pair=worst,
        n_failures=failures,
    )


def estimate_contraction_delta(
    env: TabularMFG,
    n_policies: int = 20,
    n_mu_pairs: int = 25,
    rng: np.random.Generator | int = 0,
) -> float:
    """Largest observed ratio ||nu^{pi,mu1} - nu^{pi,mu2}|| / ||mu1 - mu2||.

    A value below 1 supports the estimability of the induced mean field by
    fixed-point iteration; the true modulus is the sup over all inputs, so
    this sampled version is a lower bound.
    """
    if isinstance(rng, (int, np.integer)):
        rng = make_rng(int(rng), stream=11)
    n, m = env.n_states, env.n_actions
    worst = 0.0
    for _ in range(n_policies):
        pi = softmax_table(rng.standard_normal((n, m)))
        pairs = 0
        while pairs < n_mu_pairs:
            mu1 = rng.dirichlet(np.ones(n))
            mu2 = rng.dirichlet(np.ones(n))
            gap = float(np.linalg.norm(mu1 - mu2))
            if gap < 1e-12:
                continue
            pairs += 1
            nu1 = stationary_for(env, pi, mu1).dist.probs
            nu2 = stationary_for(env, pi, mu2).dist.probs
            worst = max(worst, float(np.linalg.norm(nu1 - nu2)) / gap)
    return worst


def estimate_mixing_time(
    env: TabularMFG,
    policy: PolicyTable,
    mu: MeanField | np.ndarray,
    c: float,
    cap: int = 100_000,
) -> int:
    """Smallest k with worst-start total-variation distance to nu at most c.

    Computed by evolving all start distributions simultaneously (one
    matrix product per step) and measuring TV = max_s ||P^k e_s - nu||_1 / 2.
    """
    if not c > 0:
        raise ValueError("c must be positive")
    P = transition_matrix(env, policy, mu)
    nu = stationary_distribution(P).dist.probs
    dists = np.eye(env.n_states)
    tv = 0.5 * np.abs(dists - nu[:, None]).sum(axis=0).max()
    if tv <= c:
        return 0
    for k in range(1, cap + 1):
        dists = P @ dists
        tv = 0.5 * np.abs(dists - nu[:, None]).sum(axis=0).max()
        if tv <= c:
            return k
    raise OracleError("chain mixes too slowly for the cap", cap=cap, tv=float(tv))


def fisher_min_eigenvalue(env: TabularMFG, theta: SoftmaxPolicy) -> float:
    """Smallest Fisher-information eigenvalue off the structural nullspace.

    The softmax score covariance under (mu*(pi_theta), pi_theta) is block
    diagonal with blocks mu*(s) (diag(pi_s) - pi_s pi_s^T).  Adding a
    constant to a state's parameters never changes the policy, so the
    per-state all-ones directions are always null; the eigenvalue is
    reported on their orthogonal complement, where non-degeneracy is
    actually meaningful.
    """
    n, m = theta.theta.shape
    if m == 1:
        return 0.0
    pi = softmax_table(theta)
    mu_star = induced_mean_field(env, pi).probs
    ones = np.ones((m, 1)) / np.sqrt(m)
    # Orthonormal basis of the zero-sum subspace within one action block.
    full = np.linalg.svd(np.eye(m) - ones @ ones.T)[0][:, : m - 1]
    smallest = np.inf
    for s in range(n):
        row = pi.probs[s]
        block = mu_star[s] * (np.diag(row) - np.outer(row, row))
        restricted = full.T @ block @ full
        eigs = np.linalg.eigvalsh(restricted)
        smallest = min(smallest, float(eigs[0]))
    return smallest
