import numpy as np
import pytest

from herdmfg.environments import TabularMFG, make_rng


@pytest.fixture
def rng():
    return make_rng(20240901)


class CountingEnv(TabularMFG):
    """Counts per-(s, a) transition/reward queries, i.e. drawn samples."""

    def __init__(self, inner):
        super().__init__(
            inner.n_states, inner.n_actions, inner._kernel_fn, inner._rewards_fn,
            inner.descriptor, inner.kernel_mu_independent, inner.reward_mu_independent,
        )
        self.transition_calls = 0
        self.reward_calls = 0

    def transition(self, s, a, mu):
        self.transition_calls += 1
        return super().transition(s, a, mu)

    def reward(self, s, a, mu):
        self.reward_calls += 1
        return super().reward(s, a, mu)


def random_column_stochastic(rng: np.random.Generator, n: int) -> np.ndarray:
    """Random fully supported chain: columns drawn from a flat Dirichlet."""
    return rng.dirichlet(np.ones(n), size=n).T


def brute_stationary(P: np.ndarray, doublings: int = 20) -> np.ndarray:
    """Stationary distribution by forward evolution only.

    Repeated squaring realizes 2**doublings power-iteration steps applied
    to the uniform start, with no linear solve involved; an independent
    oracle for the direct solver.
    """
    Pk = P.copy()
    for _ in range(doublings):
        Pk = Pk @ Pk
    return Pk @ np.full(P.shape[0], 1.0 / P.shape[0])
