"""Tabular mean-field-game environments.

Every environment is a :class:`TabularMFG`: finite state/action spaces, a
transition kernel and a reward in [0, 1], both possibly depending on the
population's state distribution.  Environments are immutable after
construction and carry a JSON-compatible descriptor
``{family, n_states, n_actions, seed, overrides}`` from which they can be
rebuilt bit-exactly.

Randomness uses numpy's Philox counter-based bit generator so that kernels
and sample paths reproduce across platforms.  Streams are keyed by
(seed, stream index); environment construction always uses stream 0 and
draws its frozen tables in a documented, fixed order.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import MeanField, PolicyTable

KERNEL_ROW_TOL = 1e-12


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator for a (seed, stream) pair.

    Philox is keyed, so distinct streams from one experiment seed are
    statistically independent and reproducible across platforms.
    """
    key = np.array([np.uint64(seed % 2**64), np.uint64(stream % 2**64)])
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class SampleStep:
    """One environment transition: (s, a, reward, next state)."""

    s: int
    a: int
    r: float
    s_next: int

    def __post_init__(self):
        if not (0.0 <= self.r <= 1.0):
            raise ValueError(f"reward {self.r!r} outside [0, 1]")


class TabularMFG:
    """Finite mean-field game answering transitions and rewards per (s, a, mu).

    ``transition(s, a, mu)`` returns a distribution over next states and
    ``reward(s, a, mu)`` a scalar in [0, 1], for any mu on the simplex.
    ``kernel(mu)`` / ``rewards(mu)`` are the vectorized forms ((S, A, S) and
    (S, A) arrays) used by the exact oracles.
    """

    def __init__(
        self,
        n_states: int,
        n_actions: int,
        kernel_fn: Callable[[np.ndarray], np.ndarray],
        rewards_fn: Callable[[np.ndarray], np.ndarray],
        descriptor: dict,
        kernel_mu_independent: bool = False,
        reward_mu_independent: bool = False,
    ):
        self.n_states = int(n_states)
        self.n_actions = int(n_actions)
        self._kernel_fn = kernel_fn
        self._rewards_fn = rewards_fn
        self.descriptor = descriptor
        self.kernel_mu_independent = bool(kernel_mu_independent)
        self.reward_mu_independent = bool(reward_mu_independent)

    def transition(self, s: int, a: int, mu: np.ndarray | MeanField) -> np.ndarray:
        mu = mu.probs if isinstance(mu, MeanField) else np.asarray(mu, dtype=float)
        return self._kernel_fn(mu)[s, a]

    def reward(self, s: int, a: int, mu: np.ndarray | MeanField) -> float:
        mu = mu.probs if isinstance(mu, MeanField) else np.asarray(mu, dtype=float)
        return float(self._rewards_fn(mu)[s, a])

    def kernel(self, mu: np.ndarray | MeanField) -> np.ndarray:
        mu = mu.probs if isinstance(mu, MeanField) else np.asarray(mu, dtype=float)
        return self._kernel_fn(mu)

    def rewards(self, mu: np.ndarray | MeanField) -> np.ndarray:
        mu = mu.probs if isinstance(mu, MeanField) else np.asarray(mu, dtype=float)
        return self._rewards_fn(mu)

    def is_mdp(self) -> bool:
        """True when neither kernel nor reward depends on the mean field."""
        return self.kernel_mu_independent and self.reward_mu_independent

    def __repr__(self):
        d = self.descriptor
        return f"TabularMFG({d['family']!r}, |S|={self.n_states}, |A|={self.n_actions})"


# ---------------------------------------------------------------------------
# Environment families
# ---------------------------------------------------------------------------


def _normalized_rows(weights: np.ndarray) -> np.ndarray:
    return weights / weights.sum(axis=-1, keepdims=True)


def example1_env(
    n_states: int,
    n_actions: int,
    q: float = 1.0,
    p_exp: float = 1.0,
    kernel_seed: int = 0,
) -> TabularMFG:
    """Crowd-attraction game: reward q * mu(s)^p with a mu-independent kernel.

    The kernel is drawn once from ``kernel_seed`` (rows proportional to
    standard-uniform weights) and never depends on the mean field, which
    puts the game in the perfectly solvable regime regardless of p and q.
    """
    if not (q > 0 and p_exp > 0):
        raise ValueError("q and p_exp must be positive")
    if q > 1.0:
        warnings.warn(
            "q > 1: rewards will clamp at simplex vertices", stacklevel=2
        )
    rng = make_rng(kernel_seed)
    omega_p = rng.uniform(size=(n_states, n_actions, n_states))
    kernel = _normalized_rows(omega_p)
    kernel.setflags(write=False)

    def kernel_fn(mu):
        return kernel

    def rewards_fn(mu):
        col = np.minimum(q * np.power(mu, p_exp), 1.0)
        return np.repeat(col[:, None], n_actions, axis=1)

    return TabularMFG(
        n_states,
        n_actions,
        kernel_fn,
        rewards_fn,
        descriptor={
            "family": "example1",
            "n_states": n_states,
            "n_actions": n_actions,
            "seed": int(kernel_seed),
            "overrides": {"q": float(q), "p_exp": float(p_exp)},
        },
        kernel_mu_independent=True,
    )


def twostate_instance() -> TabularMFG:
    """Two-state, two-action crowd-attraction game with multiple equilibria.

    In either state, action 0 moves to state 0 with probability 3/4 and
    action 1 moves to state 1 with probability 3/4; the reward is mu(s).
    The equilibrium mean fields are [3/4, 1/4], [1/4, 3/4] and [1/2, 1/2].
    """
    kernel = np.empty((2, 2, 2))
    kernel[:, 0] = [0.75, 0.25]
    kernel[:, 1] = [0.25, 0.75]
    kernel.setflags(write=False)

    def kernel_fn(mu):
        return kernel

    def rewards_fn(mu):
        return np.repeat(mu[:, None], 2, axis=1)

    return TabularMFG(
        2,
        2,
        kernel_fn,
        rewards_fn,
        descriptor={
            "family": "twostate",
            "n_states": 2,
            "n_actions": 2,
            "seed": 0,
            "overrides": {},
        },
        kernel_mu_independent=True,
    )


def example2_env() -> TabularMFG:
    """Two-state game whose kernel depends on the mean field.

    States {0, 1}, actions {move, stay}.  From state 0, "move" reaches
    state 1 with probability mu(1) / (1 + mu(1)) and otherwise stays;
    "stay" is absorbing for that step.  From state 1 every action moves to
    either state with probability 1/2.  The reward is 1 in state 1 and 0
    in state 0.
    """

    def kernel_fn(mu):
        m1 = mu[1]
        k = np.empty((2, 2, 2))
        k[0, 0] = [1.0 / (1.0 + m1), m1 / (1.0 + m1)]
        k[0, 1] = [1.0, 0.0]
        k[1, :] = [0.5, 0.5]
        return k

    def rewards_fn(mu):
        r = np.zeros((2, 2))
        r[1, :] = 1.0
        return r

    return TabularMFG(
        2,
        2,
        kernel_fn,
        rewards_fn,
        descriptor={
            "family": "example2",
            "n_states": 2,
            "n_actions": 2,
            "seed": 0,
            "overrides": {},
        },
        reward_mu_independent=True,
    )


def synthetic_env(kind: str, n: int, seed: int) -> TabularMFG:
    """Randomly generated n-state, n-action benchmark environments.

    Per (s, a) the construction freezes a reward perturbation
    ``omega_r ~ N(0, 1)`` and kernel weights ``omega_P ~ U(0, 1)^n``
    (drawn in that order from the seeded stream):

    - ``env1``: reward mu(s) + 0.01 * omega_r, kernel rows proportional to
      omega_P (mean-field independent);
    - ``env2``: same kernel, reward with the attraction flipped to
      1 - mu(s) + 0.01 * omega_r (kept in [0, 1] by the affine shift);
    - ``env3``: reward as env1, kernel rows proportional to omega_P + mu.

    Rewards are clamped into [0, 1]; the noise can push them slightly
    outside at simplex vertices.
    """
    if kind not in ("env1", "env2", "env3"):
        raise ValueError(f"unknown synthetic kind {kind!r}")
    if n < 2:
        raise ValueError("need at least two states")
    rng = make_rng(seed)
    omega_r = rng.standard_normal((n, n))
    omega_p = rng.uniform(size=(n, n, n))
    omega_r.setflags(write=False)
    omega_p.setflags(write=False)
    static_kernel = _normalized_rows(omega_p)
    static_kernel.setflags(write=False)

    if kind == "env3":

        def kernel_fn(mu):
            return (omega_p + mu[None, None, :]) / (
                omega_p.sum(axis=-1, keepdims=True) + 1.0
            )

    else:

        def kernel_fn(mu):
            return static_kernel

    if kind == "env2":

        def rewards_fn(mu):
            return np.clip(1.0 - mu[:, None] + 0.01 * omega_r, 0.0, 1.0)

    else:

        def rewards_fn(mu):
            return np.clip(mu[:, None] + 0.01 * omega_r, 0.0, 1.0)

    return TabularMFG(
        n,
        n,
        kernel_fn,
        rewards_fn,
        descriptor={
            "family": kind,
            "n_states": n,
            "n_actions": n,
            "seed": int(seed),
            "overrides": {},
        },
        kernel_mu_independent=(kind != "env3"),
    )


def beach_bar_env(
    n_states: int = 5, success_prob: float = 0.9, crowd_weight: float = 0.5
) -> TabularMFG:
    """Beach-bar benchmark: 5-state torus, bar at the center, crowd aversion.

    Actions {left, stay, right}.  Moves succeed with probability
    ``success_prob`` and otherwise stay put; "stay" is deterministic.  The
    reward trades closeness to the bar against local crowding,

        r(s, a, mu) = ((1 - d(s)/2) + w * (1 - mu(s))) / (1 + w),

    with d the torus distance to the bar and w = ``crowd_weight``.  The
    affine normalization keeps the reward exactly in [0, 1] without
    clamping, so crowding strictly lowers the reward everywhere (including
    at the bar itself).
    """
    if n_states != 5:
        raise ValueError("the beach bar instance is defined on 5 states")
    if not (0.0 < success_prob <= 1.0):
        raise ValueError("success_prob must lie in (0, 1]")
    if not crowd_weight >= 0.0:
        raise ValueError("crowd_weight must be nonnegative")
    bar = n_states // 2
    kernel = np.zeros((n_states, 3, n_states))
    for s in range(n_states):
        kernel[s, 0, (s - 1) % n_states] += success_prob
        kernel[s, 0, s] += 1.0 - success_prob
        kernel[s, 1, s] = 1.0
        kernel[s, 2, (s + 1) % n_states] += success_prob
        kernel[s, 2, s] += 1.0 - success_prob
    kernel.setflags(write=False)
    dist = np.array([min(abs(s - bar), n_states - abs(s - bar)) for s in range(n_states)])
    position_term = 1.0 - dist / 2.0

    def kernel_fn(mu):
        return kernel

    def rewards_fn(mu):
        col = (position_term + crowd_weight * (1.0 - mu)) / (1.0 + crowd_weight)
        return np.repeat(col[:, None], 3, axis=1)

    return TabularMFG(
        n_states,
        3,
        kernel_fn,
        rewards_fn,
        descriptor={
            "family": "beach_bar",
            "n_states": n_states,
            "n_actions": 3,
            "seed": 0,
            "overrides": {
                "success_prob": float(success_prob),
                "crowd_weight": float(crowd_weight),
            },
        },
        kernel_mu_independent=True,
    )


def random_mdp(n_states: int, n_actions: int, seed: int) -> TabularMFG:
    """Random average-reward MDP viewed as a degenerate mean-field game.

    Rewards r(s, a) ~ U(0, 1) and kernel rows proportional to U(0, 1)
    weights, both frozen at construction (rewards drawn first), so neither
    depends on the mean field.
    """
    rng = make_rng(seed)
    rewards = rng.uniform(size=(n_states, n_actions))
    kernel = _normalized_rows(rng.uniform(size=(n_states, n_actions, n_states)))
    rewards.setflags(write=False)
    kernel.setflags(write=False)

    def kernel_fn(mu):
        return kernel

    def rewards_fn(mu):
        return rewards

    return TabularMFG(
        n_states,
        n_actions,
        kernel_fn,
        rewards_fn,
        descriptor={
            "family": "mdp",
            "n_states": n_states,
            "n_actions": n_actions,
            "seed": int(seed),
            "overrides": {},
        },
        kernel_mu_independent=True,
        reward_mu_independent=True,
    )


_FAMILIES = {
    "example1": lambda d: example1_env(
        d["n_states"],
        d["n_actions"],
        q=d["overrides"].get("q", 1.0),
        p_exp=d["overrides"].get("p_exp", 1.0),
        kernel_seed=d["seed"],
    ),
    "twostate": lambda d: twostate_instance(),
    "example2": lambda d: example2_env(),
    "env1": lambda d: synthetic_env("env1", d["n_states"], d["seed"]),
    "env2": lambda d: synthetic_env("env2", d["n_states"], d["seed"]),
    "env3": lambda d: synthetic_env("env3", d["n_states"], d["seed"]),
    "beach_bar": lambda d: beach_bar_env(
        d["n_states"],
        success_prob=d["overrides"].get("success_prob", 0.9),
        crowd_weight=d["overrides"].get("crowd_weight", 0.5),
    ),
    "mdp": lambda d: random_mdp(d["n_states"], d["n_actions"], d["seed"]),
}


def list_families() -> list[str]:
    return sorted(_FAMILIES)


def env_from_descriptor(descriptor: dict) -> TabularMFG:
    """Rebuild an environment bit-exactly from its descriptor."""
    missing = {"family", "n_states", "n_actions", "seed", "overrides"} - set(descriptor)
    if missing:
        raise ValueError(f"descriptor missing fields: {sorted(missing)}")
    family = descriptor["family"]
    if family not in _FAMILIES:
        raise ValueError(f"unknown environment family {family!r}")
    env = _FAMILIES[family](descriptor)
    if (env.n_states, env.n_actions) != (descriptor["n_states"], descriptor["n_actions"]):
        raise ValueError("descriptor dimensions do not match the family")
    return env


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def draw_index(rng: np.random.Generator, probs: np.ndarray) -> int:
    """Sample an index from a probability vector using one uniform draw."""
    u = rng.random()
    idx = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    return min(idx, probs.size - 1)


def sample_step(
    env: TabularMFG,
    s: int,
    policy: PolicyTable,
    mu: MeanField,
    rng: np.random.Generator,
) -> SampleStep:
    """Draw one transition: a ~ pi(.|s), r = r(s,a,mu), s' ~ P^mu(.|s,a)."""
    if not (0 <= s < env.n_states):
        raise ValueError(f"state {s} out of range")
    a = draw_index(rng, policy.probs[s])
    r = env.reward(s, a, mu)
    p_next = env.transition(s, a, mu)
    if np.any(p_next < -KERNEL_ROW_TOL) or abs(p_next.sum() - 1.0) > 1e-9:
        raise RuntimeError(
            f"environment returned an invalid distribution at (s={s}, a={a})"
        )
    if not (0.0 <= r <= 1.0):
        raise RuntimeError(f"environment returned reward {r} outside [0, 1]")
    s_next = draw_index(rng, p_next)
    return SampleStep(s=s, a=a, r=r, s_next=s_next)
