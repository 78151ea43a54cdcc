"""Core domain types for tabular mean-field games.

Provides the value objects shared by every solver and oracle (mean fields,
softmax policies, critic estimates, operator estimates), the projection
operators used by the stochastic-approximation updates, and the decaying
step-size schedules.

Flattening convention, fixed project-wide: policy parameters and gradient
vectors over (state, action) pairs are laid out state-major / action-minor,
i.e. entry (s, a) lives at flat index ``s * n_actions + a``.  This is the
C-order ravel of an (S, A) matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SIMPLEX_SUM_TOL = 1e-9
ROW_STOCHASTIC_TOL = 1e-9

PRACTICAL_BASE = {"alpha0": 10.0, "beta0": 0.1, "xi0": 0.02, "lambda0": 1.0}


def _frozen_array(x, shape_hint: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float).copy()
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{shape_hint} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class MeanField:
    """A point on the state-space probability simplex."""

    probs: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.probs, "mean field")
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("mean field must be a non-empty vector")
        if np.any(arr < 0):
            raise ValueError("mean field has negative entries")
        if abs(arr.sum() - 1.0) > SIMPLEX_SUM_TOL:
            raise ValueError(f"mean field sums to {arr.sum()!r}, not 1")
        object.__setattr__(self, "probs", arr)

    @property
    def n_states(self) -> int:
        return self.probs.size

    @staticmethod
    def uniform(n_states: int) -> "MeanField":
        return MeanField(np.full(n_states, 1.0 / n_states))


@dataclass(frozen=True)
class SoftmaxPolicy:
    """Policy parameter table; the induced policy is a per-state softmax."""

    theta: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.theta, "policy parameters")
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError("theta must be a non-empty |S| x |A| matrix")
        object.__setattr__(self, "theta", arr)

    @property
    def n_states(self) -> int:
        return self.theta.shape[0]

    @property
    def n_actions(self) -> int:
        return self.theta.shape[1]

    @staticmethod
    def zeros(n_states: int, n_actions: int) -> "SoftmaxPolicy":
        return SoftmaxPolicy(np.zeros((n_states, n_actions)))


@dataclass(frozen=True)
class PolicyTable:
    """Row-stochastic action-probability table, one row per state."""

    probs: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.probs, "policy table")
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError("policy table must be a non-empty |S| x |A| matrix")
        if np.any(arr < 0):
            raise ValueError("policy table has negative entries")
        row_err = np.abs(arr.sum(axis=1) - 1.0)
        if np.any(row_err > ROW_STOCHASTIC_TOL):
            raise ValueError("policy table rows do not sum to 1")
        object.__setattr__(self, "probs", arr)

    @property
    def n_states(self) -> int:
        return self.probs.shape[0]

    @property
    def n_actions(self) -> int:
        return self.probs.shape[1]

    @staticmethod
    def uniform(n_states: int, n_actions: int) -> "PolicyTable":
        return PolicyTable(np.full((n_states, n_actions), 1.0 / n_actions))

    @staticmethod
    def deterministic(actions, n_actions: int) -> "PolicyTable":
        """Pure policy playing ``actions[s]`` in state s."""
        actions = np.asarray(actions, dtype=int)
        probs = np.zeros((actions.size, n_actions))
        probs[np.arange(actions.size), actions] = 1.0
        return PolicyTable(probs)


@dataclass(frozen=True)
class ValueEstimate:
    """Critic iterate: differential values plus an average-reward scalar."""

    v: np.ndarray
    j: float

    def __post_init__(self):
        arr = _frozen_array(self.v, "value estimate")
        if arr.ndim != 1:
            raise ValueError("v must be a vector")
        j = float(self.j)
        if not (0.0 <= j <= 1.0):
            raise ValueError(f"average-reward estimate {j!r} outside [0, 1]")
        object.__setattr__(self, "v", arr)
        object.__setattr__(self, "j", j)

    def check_radius(self, b_v: float) -> None:
        norm = float(np.linalg.norm(self.v))
        if norm > b_v * (1 + 1e-12) + 1e-12:
            raise AssertionError(f"critic norm {norm} exceeds ball radius {b_v}")


@dataclass(frozen=True)
class OperatorEstimates:
    """Smoothed operator estimates driving the actor/mean-field/critic updates.

    ``f`` has the flat (state-major) policy-gradient layout; ``g_v``/``g_j``
    drive the critic and ``h`` the mean-field iterate.
    """

    f: np.ndarray
    g_v: np.ndarray
    g_j: float
    h: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "f", _frozen_array(self.f, "f estimate"))
        object.__setattr__(self, "g_v", _frozen_array(self.g_v, "g_v estimate"))
        object.__setattr__(self, "h", _frozen_array(self.h, "h estimate"))
        g_j = float(self.g_j)
        if not math.isfinite(g_j):
            raise ValueError("g_j is not finite")
        object.__setattr__(self, "g_j", g_j)

    @staticmethod
    def zeros(n_states: int, n_actions: int) -> "OperatorEstimates":
        return OperatorEstimates(
            np.zeros(n_states * n_actions), np.zeros(n_states), 0.0, np.zeros(n_states)
        )

    def check_bounds(self, b_v: float, c_j: float) -> None:
        """Assert the boundedness guarantees of the sampled operators.

        The per-sample operators satisfy ||F|| <= B_V + 1,
        ||(G^V, G^J)|| <= 2 (B_V + c_J + 2) and ||H|| <= 2; the smoothed
        estimates are convex combinations of samples, so the same bounds
        must hold.  A violation signals a solver bug, not bad data.
        """
        slack = 1e-9
        b_f = b_v + 1.0
        b_g = 2.0 * (b_v + c_j + 2.0)
        if np.linalg.norm(self.f) > b_f + slack:
            raise AssertionError(f"||f|| = {np.linalg.norm(self.f)} exceeds {b_f}")
        g_norm = math.hypot(float(np.linalg.norm(self.g_v)), self.g_j)
        if g_norm > b_g + slack:
            raise AssertionError(f"||(g_v, g_j)|| = {g_norm} exceeds {b_g}")
        if np.linalg.norm(self.h) > 2.0 + slack:
            raise AssertionError(f"||h|| = {np.linalg.norm(self.h)} exceeds 2")


def operator_bounds(b_v: float, c_j: float) -> tuple[float, float, float]:
    """(B_F, B_G, B_H) boundedness constants for the sampled operators."""
    return b_v + 1.0, 2.0 * (b_v + c_j + 2.0), 2.0


@dataclass(frozen=True)
class StepSchedule:
    """Base constants for the 1/sqrt(k+1) step-size family.

    All four sequences decay at the same rate and differ only in their base
    constants.  ``practical`` mode accepts any positive constants; in
    ``theory-safe`` mode the ordering alpha0 <= xi0 <= beta0 <= lambda0 is
    enforced, which is what the convergence analysis requires.
    """

    lambda0: float
    alpha0: float
    beta0: float
    xi0: float
    mode: str = "practical"

    def __post_init__(self):
        for name in ("lambda0", "alpha0", "beta0", "xi0"):
            val = float(getattr(self, name))
            if not (math.isfinite(val) and val > 0):
                raise ValueError(f"step-size base {name}={val!r} must be positive")
            object.__setattr__(self, name, val)
        if self.mode not in ("practical", "theory-safe"):
            raise ValueError(f"unknown schedule mode {self.mode!r}")
        # The operator estimates are convex combinations only when the
        # smoothing weight stays in [0, 1]; lambda0 > 1 would break every
        # boundedness guarantee downstream.
        if self.lambda0 > 1.0:
            raise ValueError("lambda0 must be at most 1")
        if self.mode == "theory-safe" and not (
            self.alpha0 <= self.xi0 <= self.beta0 <= self.lambda0
        ):
            raise ValueError(
                "theory-safe mode requires alpha0 <= xi0 <= beta0 <= lambda0"
            )

    def at(self, k: int) -> tuple[float, float, float, float]:
        return step_sizes(self, k)


def practical_schedule() -> StepSchedule:
    """Step sizes used by the simulation recipes: (10, 0.1, 0.02, 1)."""
    return StepSchedule(
        lambda0=PRACTICAL_BASE["lambda0"],
        alpha0=PRACTICAL_BASE["alpha0"],
        beta0=PRACTICAL_BASE["beta0"],
        xi0=PRACTICAL_BASE["xi0"],
        mode="practical",
    )


def theory_safe_schedule(
    *,
    l_f: float,
    l_g: float,
    l_h: float,
    l_v: float,
    l: float,
    delta: float,
    gamma: float,
    rho: float,
    n_states: int,
    c_j: float | None = None,
) -> StepSchedule:
    """Build a schedule satisfying the conservative analysis constraints.

    The caller supplies Lipschitz/contraction surrogates (``l_f``, ``l_g``,
    ``l_h``, ``l_v``, ``l``), the mean-field contraction factor ``delta``,
    the critic drift constant ``gamma`` and the herding constant ``rho``.
    Each base constant is set to the largest value permitted by the
    inequalities the finite-time analysis imposes, so the result is valid
    but typically far smaller than the practical preset.  If ``c_j`` is
    given it is checked against the requirement c_J >= 1/gamma.
    """
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must lie in (0, 1)")
    if not (0.0 < gamma < 1.0):
        raise ValueError("gamma must lie in (0, 1)")
    if min(l_f, l_g, l_h, l_v, l, rho) <= 0:
        raise ValueError("Lipschitz surrogates and rho must be positive")
    if c_j is not None and c_j < 1.0 / gamma:
        raise ValueError(f"c_j must be at least 1/gamma = {1.0 / gamma}")

    s = float(n_states)
    lam0 = 0.25
    beta0 = min(
        lam0 / (72.0 * s * l_g**2 + 36.0 * l_f**2 + 8.0 / gamma),
        gamma / (4.0 * l_g**2),
        (1.0 - delta) / (2.0 * l_h**2),
        lam0,
    )
    xi0 = min(
        lam0 / (64.0 * (l_h**2 * l_f**2 + l_g**2 + l_v**2 / gamma + 1.0 / (1.0 - delta))),
        (1.0 - delta)
        * gamma
        * beta0
        / (
            6912.0
            * (
                l_f**4 * l_v**2
                + l_f**2 * l_g**2 * l_h**2 * l_v**2
                + l_f**2 * l_h**4 * l_v**2
                + l_v**2
            )
        ),
        beta0,
    )
    c_xi = min(
        (1.0 - delta) / (32.0 * rho * l_f**2),
        (1.0 - delta) / (4.0 * rho),
        l_h / (2.0 * l_f * l_v),
        (1.0 - delta) / (16.0 * l * l_f * l_v),
    )
    lip_sum = l_f**2 + l_g**2 + l_h**2 + l_v**2 + l**2 / (1.0 - delta)
    c_beta = min(
        gamma / 4.0,
        rho * gamma / (512.0 * lip_sum),
        math.sqrt(
            gamma
            / (
                3456.0
                * s
                * (
                    l_f**4 * l_g**4
                    + l_f**2 * l_h**2
                    + rho * l_f**2
                    + l_v**2 / gamma
                    + l**2 * l_f**2 * (1.0 - delta)
                )
            )
        ),
        gamma / (2.0 * rho),
    )
    alpha0 = min(
        lam0 / (192.0 * (lip_sum + rho)),
        c_beta * beta0,
        c_xi * xi0,
        xi0,
    )
    return StepSchedule(
        lambda0=lam0, alpha0=alpha0, beta0=beta0, xi0=xi0, mode="theory-safe"
    )


@dataclass(frozen=True)
class SolverConfig:
    """Knobs for a single solver run.

    ``b_v`` is the critic projection-ball radius; when left as None it
    defaults to 4 * |S| at initialization, a deliberately loose ceiling
    (the analysis only needs *some* finite bound on the differential
    values).  ``c_j`` is the gain on the average-reward tracker.
    """

    schedule: StepSchedule = field(default_factory=practical_schedule)
    b_v: float | None = None
    c_j: float = 10.0
    max_iters: int = 100_000
    metric_every: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.b_v is not None and not self.b_v > 0:
            raise ValueError("b_v must be positive")
        if not self.c_j > 0:
            raise ValueError("c_j must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")
        if self.metric_every < 1:
            raise ValueError("metric_every must be at least 1")
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError("seed must fit in 64 bits")

    def resolved_b_v(self, n_states: int) -> float:
        return float(self.b_v) if self.b_v is not None else 4.0 * n_states


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def softmax_row(theta_row: np.ndarray) -> np.ndarray:
    """Softmax of one parameter row, stabilized by max subtraction."""
    z = np.exp(theta_row - theta_row.max())
    return z / z.sum()


def softmax_table(theta: SoftmaxPolicy | np.ndarray) -> PolicyTable:
    """Row-wise softmax of the parameter table.

    The row maximum is subtracted before exponentiation so that large
    parameters (routinely produced by aggressive actor step sizes) cannot
    overflow.
    """
    arr = theta.theta if isinstance(theta, SoftmaxPolicy) else np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("policy parameters must be finite")
    z = np.exp(arr - arr.max(axis=1, keepdims=True))
    return PolicyTable(z / z.sum(axis=1, keepdims=True))


def log_policy_gradient(theta: SoftmaxPolicy, s: int, a: int) -> np.ndarray:
    """Gradient of log pi_theta(a|s) w.r.t. the flattened parameters.

    For softmax parameterization only the state-s block is nonzero and
    equals ``e_a - pi_theta(.|s)``.
    """
    n, m = theta.theta.shape
    if not (0 <= s < n and 0 <= a < m):
        raise ValueError(f"state/action pair ({s}, {a}) out of range")
    grad = np.zeros(n * m)
    row = softmax_row(theta.theta[s])
    grad[s * m : (s + 1) * m] = -row
    grad[s * m + a] += 1.0
    return grad


def project_simplex_raw(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (raw array).

    Sort-and-threshold construction: with the entries sorted in decreasing
    order, find the largest k whose water level theta_k = (sum of top k - 1)/k
    stays below the k-th entry, then clip v - theta at zero.  O(n log n),
    exact, and idempotent.
    """
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        raise ValueError("cannot project an empty vector")
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot project non-finite values")
    # Fast path: already feasible.
    if np.all(v >= 0) and abs(v.sum() - 1.0) <= 1e-12:
        return v.copy()
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ks = np.arange(1, v.size + 1)
    k = np.nonzero(u * ks > css)[0][-1]
    tau = css[k] / (k + 1.0)
    return np.maximum(v - tau, 0.0)


def project_simplex(v: np.ndarray) -> MeanField:
    """Euclidean projection onto the simplex, as a MeanField."""
    return MeanField(project_simplex_raw(v))


def project_l2_ball(v: np.ndarray, radius: float) -> np.ndarray:
    """Project onto the l2 ball of the given radius (identity inside)."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v)
    if norm <= radius:
        return v.copy()
    return v * (radius / norm)


def clamp_unit(x: float) -> float:
    """Clamp a scalar to [0, 1]."""
    return min(max(float(x), 0.0), 1.0)


def step_sizes(schedule: StepSchedule, k: int) -> tuple[float, float, float, float]:
    """(lambda_k, alpha_k, beta_k, xi_k) at iteration k: base / sqrt(k+1)."""
    if k < 0:
        raise ValueError("iteration index must be nonnegative")
    scale = 1.0 / math.sqrt(k + 1.0)
    return (
        schedule.lambda0 * scale,
        schedule.alpha0 * scale,
        schedule.beta0 * scale,
        schedule.xi0 * scale,
    )
