import numpy as np
import pytest

from conftest import brute_stationary, random_column_stochastic
from herdmfg.core import MeanField, PolicyTable, SoftmaxPolicy, softmax_table
from herdmfg.environments import (
    TabularMFG,
    example1_env,
    example2_env,
    make_rng,
    random_mdp,
    synthetic_env,
    twostate_instance,
)
from herdmfg.oracle import (
    OracleError,
    average_reward,
    best_response_gap,
    best_response_value,
    compute_metrics,
    differential_value,
    estimate_contraction_delta,
    estimate_mixing_time,
    exact_policy_gradient,
    fisher_min_eigenvalue,
    herding_check,
    induced_mean_field,
    stationary_distribution,
    stationary_for,
    transition_matrix,
)

PI_BAR_1 = PolicyTable.deterministic([0, 0], 2)
PI_BAR_2 = PolicyTable.deterministic([1, 1], 2)


def constant_reward_env(n_states, n_actions, c, seed=0):
    base = random_mdp(n_states, n_actions, seed)
    return TabularMFG(
        n_states, n_actions, base.kernel,
        lambda mu: np.full((n_states, n_actions), c),
        descriptor=base.descriptor,
        kernel_mu_independent=True, reward_mu_independent=True,
    )


def twostate_closed_form(x: float, y: float) -> np.ndarray:
    """Stationary distribution of the two-state instance as a function of
    the probabilities x = pi(a0|s0) and y = pi(a1|s1)."""
    ratio = (0.75 - y / 2.0) / (0.75 - x / 2.0)
    return np.array([ratio, 1.0]) / (1.0 + ratio)


class TestTransitionMatrix:
    def test_twostate_pure_policy(self):
        env = twostate_instance()
        P = transition_matrix(env, PI_BAR_1, MeanField.uniform(2))
        assert np.allclose(P[:, 0], [0.75, 0.25])
        assert np.allclose(P[:, 1], [0.75, 0.25])

    def test_single_action_recovers_kernel(self, rng):
        env = random_mdp(4, 1, seed=3)
        mu = MeanField.uniform(4)
        P = transition_matrix(env, PolicyTable.uniform(4, 1), mu)
        assert np.allclose(P, env.kernel(mu.probs)[:, 0, :].T)

    def test_columns_sum_to_one(self, rng):
        env = synthetic_env("env3", 7, seed=1)
        for _ in range(10):
            pi = softmax_table(rng.standard_normal((7, 7)))
            mu = rng.dirichlet(np.ones(7))
            P = transition_matrix(env, pi, mu)
            assert np.abs(P.sum(axis=0) - 1.0).max() <= 1e-12


class TestStationaryDistribution:
    def test_identity_rejected(self):
        with pytest.raises(OracleError):
            stationary_distribution(np.eye(2))

    def test_periodic_rejected(self):
        with pytest.raises(OracleError):
            stationary_distribution(np.array([[0.0, 1.0], [1.0, 0.0]]))

    def test_twostate_closed_form(self):
        env = twostate_instance()
        result = stationary_for(env, PI_BAR_1, MeanField.uniform(2))
        assert np.allclose(result.dist.probs, [0.75, 0.25], atol=1e-12)
        assert result.residual <= 1e-12

    def test_doubly_stochastic_gives_uniform(self):
        P = np.array([[0.5, 0.3, 0.2], [0.2, 0.5, 0.3], [0.3, 0.2, 0.5]])
        result = stationary_distribution(P)
        assert np.allclose(result.dist.probs, 1.0 / 3.0, atol=1e-12)

    def test_agrees_with_brute_force_evolution(self, rng):
        # Independent oracle: 2**20 forward steps by repeated squaring.
        for _ in range(50):
            n = int(rng.integers(2, 9))
            P = random_column_stochastic(rng, n)
            nu = stationary_distribution(P).dist.probs
            assert np.abs(nu - brute_stationary(P)).max() <= 1e-8

    def test_residual_contract_on_random_chains(self, rng):
        for _ in range(200):
            n = int(rng.integers(2, 30))
            result = stationary_distribution(random_column_stochastic(rng, n))
            assert result.residual <= 1e-10

    def test_large_chain_power_iteration_path(self, rng):
        P = random_column_stochastic(rng, 250)
        result = stationary_distribution(P)
        assert result.residual <= 1e-10


class TestInducedMeanField:
    def test_mu_independent_kernel_single_pass(self):
        env = example1_env(5, 3, kernel_seed=2)
        pi = PolicyTable.uniform(5, 3)
        mu_star = induced_mean_field(env, pi)
        nu = stationary_for(env, pi, mu_star).dist.probs
        assert np.allclose(mu_star.probs, nu, atol=1e-12)

    def test_fixed_point_certificate(self, rng):
        env = synthetic_env("env3", 6, seed=8)
        for _ in range(10):
            pi = softmax_table(rng.standard_normal((6, 6)))
            mu_star = induced_mean_field(env, pi, tol=1e-10)
            nu = stationary_for(env, pi, mu_star).dist.probs
            assert np.linalg.norm(nu - mu_star.probs) <= 1e-10

    def test_uniform_policy_balances_twostate(self):
        mu = induced_mean_field(twostate_instance(), PolicyTable.uniform(2, 2))
        assert np.allclose(mu.probs, [0.5, 0.5], atol=1e-12)

    def test_closed_form_on_random_policies(self, rng):
        env = twostate_instance()
        for _ in range(1000):
            x, y = rng.uniform(0.0, 1.0, size=2)
            pi = PolicyTable(np.array([[x, 1.0 - x], [1.0 - y, y]]))
            mu = induced_mean_field(env, pi)
            assert np.linalg.norm(mu.probs - twostate_closed_form(x, y)) <= 1e-8


class TestAverageReward:
    def test_constant_reward(self):
        env = constant_reward_env(4, 2, 0.37)
        assert average_reward(env, PolicyTable.uniform(4, 2), MeanField.uniform(4)) == (
            pytest.approx(0.37, abs=1e-12)
        )

    def test_twostate_equilibrium_value(self):
        env = twostate_instance()
        mu = MeanField(np.array([0.75, 0.25]))
        assert average_reward(env, PI_BAR_1, mu) == pytest.approx(0.625, abs=1e-12)

    def test_flipped_attraction_closed_form(self):
        # With reward 1 - mu(s) and a uniform mean field, the expectation is
        # 1 - 1/n under any stationary distribution.
        n = 6
        base = random_mdp(n, 2, seed=5)
        env = TabularMFG(
            n, 2, base.kernel,
            lambda mu: np.repeat((1.0 - mu)[:, None], 2, axis=1),
            descriptor=base.descriptor, kernel_mu_independent=True,
        )
        value = average_reward(env, PolicyTable.uniform(n, 2), MeanField.uniform(n))
        assert value == pytest.approx(1.0 - 1.0 / n, abs=1e-12)


class TestDifferentialValue:
    def test_constant_reward_gives_zero(self):
        env = constant_reward_env(5, 2, 0.4)
        v = differential_value(env, PolicyTable.uniform(5, 2), MeanField.uniform(5))
        assert np.abs(v).max() <= 1e-12

    def test_single_state_chain(self):
        env = constant_reward_env(1, 2, 0.9)
        v = differential_value(env, PolicyTable.uniform(1, 2), MeanField.uniform(1))
        assert np.allclose(v, [0.0])

    def test_twostate_hand_solve(self):
        env = twostate_instance()
        mu = MeanField(np.array([0.75, 0.25]))
        v = differential_value(env, PI_BAR_1, mu)
        # 2x2 system: v1 - v2 = r1 - r2 = 1/2 with zero-sum normalization.
        assert np.allclose(v, [0.25, -0.25], atol=1e-12)

    def test_bellman_residual(self, rng):
        env = synthetic_env("env3", 6, seed=4)
        for _ in range(20):
            pi = softmax_table(rng.standard_normal((6, 6)))
            mu = rng.dirichlet(np.ones(6))
            v = differential_value(env, pi, mu)
            P = transition_matrix(env, pi, mu)
            r_bar = (pi.probs * env.rewards(mu)).sum(axis=1)
            gain = average_reward(env, pi, mu)
            assert np.abs(v - (r_bar - gain + P.T @ v)).max() <= 1e-10
            assert abs(v.sum()) <= 1e-9


class TestExactPolicyGradient:
    def test_flat_landscape_zero_gradient(self):
        env = constant_reward_env(4, 3, 0.6)
        grad = exact_policy_gradient(env, SoftmaxPolicy.zeros(4, 3), MeanField.uniform(4))
        assert np.abs(grad).max() <= 1e-12

    def test_blocks_sum_to_zero(self, rng):
        env = synthetic_env("env1", 5, seed=6)
        theta = SoftmaxPolicy(rng.standard_normal((5, 5)))
        grad = exact_policy_gradient(env, theta, MeanField.uniform(5)).reshape(5, 5)
        assert np.abs(grad.sum(axis=1)).max() <= 1e-14

    def test_matches_finite_differences(self, rng):
        for trial in range(100):
            n = int(rng.integers(2, 7))
            m = int(rng.integers(2, 7))
            env = example1_env(n, m, kernel_seed=int(rng.integers(10_000)))
            theta = SoftmaxPolicy(rng.standard_normal((n, m)))
            mu = MeanField(rng.dirichlet(np.ones(n)))
            grad = exact_policy_gradient(env, theta, mu)
            h = 1e-5
            flat = theta.theta.ravel()
            fd = np.zeros(flat.size)
            for i in range(flat.size):
                up = flat.copy()
                up[i] += h
                down = flat.copy()
                down[i] -= h
                fd[i] = (
                    average_reward(env, softmax_table(up.reshape(n, m)), mu)
                    - average_reward(env, softmax_table(down.reshape(n, m)), mu)
                ) / (2 * h)
            assert np.linalg.norm(grad - fd) <= 1e-4 * max(np.linalg.norm(fd), 1e-10)


class TestBestResponse:
    def test_constant_reward_any_policy_optimal(self):
        env = constant_reward_env(3, 4, 0.42)
        value, policy = best_response_value(env, MeanField.uniform(3))
        assert value == pytest.approx(0.42, abs=1e-9)
        assert np.array_equal(policy.probs.argmax(axis=1), [0, 0, 0])

    def test_twostate_best_response(self):
        env = twostate_instance()
        value, policy = best_response_value(env, MeanField(np.array([0.75, 0.25])))
        assert value == pytest.approx(0.625, abs=1e-9)
        assert np.array_equal(policy.probs.argmax(axis=1), [0, 0])

    def test_twostate_enumeration_agreement(self):
        # Independent oracle: enumerate all four deterministic policies.
        env = twostate_instance()
        mu = MeanField(np.array([0.75, 0.25]))
        best = max(
            average_reward(env, PolicyTable.deterministic([a0, a1], 2), mu)
            for a0 in range(2)
            for a1 in range(2)
        )
        value, _ = best_response_value(env, mu)
        assert value == pytest.approx(best, abs=1e-9)

    def test_example2_move_is_optimal(self, rng):
        env = example2_env()
        for _ in range(10):
            mu = rng.dirichlet(np.ones(2))
            if mu[1] <= 0.05:
                mu = np.array([0.5, 0.5])
            _, policy = best_response_value(env, MeanField(mu))
            assert policy.probs[0, 0] == 1.0  # "move" in state 0

    def test_dominates_random_policies(self, rng):
        env = synthetic_env("env1", 5, seed=9)
        mu = MeanField(rng.dirichlet(np.ones(5)))
        value, _ = best_response_value(env, mu)
        for _ in range(100):
            pi = softmax_table(rng.standard_normal((5, 5)))
            assert value >= average_reward(env, pi, mu) - 1e-9


class TestMetrics:
    def test_constant_shift_in_value_is_invisible(self):
        env = twostate_instance()
        theta = SoftmaxPolicy.zeros(2, 2)
        mu = MeanField.uniform(2)
        v_true = differential_value(env, softmax_table(theta), mu)
        record = compute_metrics(env, theta, mu, v_true + 3.7, 0.5, k=1)
        assert record.eps_v <= 1e-20

    def test_consistent_mean_field_zeroes_eps_mu(self):
        env = twostate_instance()
        theta = SoftmaxPolicy.zeros(2, 2)
        mu_star = induced_mean_field(env, softmax_table(theta))
        record = compute_metrics(env, theta, mu_star, np.zeros(2), 0.5, k=1)
        assert record.eps_mu <= 1e-20

    def test_exact_equilibria_score_zero(self):
        env = twostate_instance()
        # The uniform parameterization is itself an equilibrium policy.
        record = compute_metrics(
            env, SoftmaxPolicy.zeros(2, 2), MeanField.uniform(2), np.zeros(2), 0.5, k=0
        )
        assert record.eps_pi <= 1e-8 and record.eps_mu <= 1e-8
        # A sharply saturated parameterization of the pure-action equilibrium.
        theta = SoftmaxPolicy(np.array([[25.0, 0.0], [25.0, 0.0]]))
        mu = MeanField(np.array([0.75, 0.25]))
        record = compute_metrics(env, theta, mu, np.array([0.25, -0.25]), 0.625, k=0)
        assert record.eps_pi <= 1e-8 and record.eps_mu <= 1e-8


class TestHerding:
    def test_twostate_is_fully_herding_at_rho_two(self):
        report = herding_check(twostate_instance(), rho=2.0, n_pairs=200, rng=1)
        assert report.kappa_hat <= 1e-9
        assert report.n_pairs > 150

    @pytest.mark.parametrize("p_exp", [1.0, 2.0])
    def test_power_reward_identity(self, p_exp):
        env = example1_env(6, 4, q=1.0, p_exp=p_exp, kernel_seed=12)
        report = herding_check(env, rho=p_exp + 1.0, n_pairs=300, rng=2)
        assert report.kappa_hat <= 1e-9

    def test_detects_violations(self):
        # With the flipped-attraction reward the condition fails for any
        # moderate rho, so the estimate must come back strictly positive.
        env = synthetic_env("env2", 6, seed=3)
        report = herding_check(env, rho=2.0, n_pairs=200, rng=3)
        assert report.kappa_hat > 1e-6
        assert report.worst_pair is not None

    def test_rejects_bad_rho(self):
        with pytest.raises(ValueError):
            herding_check(twostate_instance(), rho=0.0, n_pairs=10)


class TestContractionDelta:
    def test_mu_independent_kernel_gives_zero(self):
        env = example1_env(4, 3, kernel_seed=4)
        assert estimate_contraction_delta(env, 5, 10, rng=0) == 0.0

    def test_example2_sensitivity_is_positive(self):
        # The mu-dependent kernel makes the stationary distribution move
        # with mu.  Note the map's sensitivity genuinely exceeds 1 near the
        # empty-target vertex (nu_1 ~ 2 mu_1 under the always-move policy),
        # so the sampled maximum is only asserted positive here; the
        # fixed-point solve still works because iteration from the uniform
        # start stays in the contractive basin.
        delta = estimate_contraction_delta(example2_env(), 20, 25, rng=1)
        assert delta > 0.0

    def test_env3_contracts(self):
        # Kernel rows (omega + mu) / (sum + 1) blend mu in gently, so the
        # sweep stays below 1 here.
        delta = estimate_contraction_delta(synthetic_env("env3", 10, seed=2), 20, 25, rng=2)
        assert 0.0 < delta < 1.0

    def test_nonnegative(self):
        delta = estimate_contraction_delta(synthetic_env("env3", 5, seed=2), 5, 5, rng=2)
        assert delta >= 0.0


class TestMixingTime:
    def test_rank_one_chain_mixes_in_one_step(self):
        env = twostate_instance()
        t = estimate_mixing_time(env, PI_BAR_1, MeanField.uniform(2), c=0.01)
        assert t == 1

    def test_twostate_bound(self):
        env = twostate_instance()
        t = estimate_mixing_time(env, PI_BAR_1, MeanField.uniform(2), c=0.01)
        assert t <= 20

    def test_trivial_tolerance(self):
        env = twostate_instance()
        assert estimate_mixing_time(env, PI_BAR_1, MeanField.uniform(2), c=1.0) == 0

    def test_slow_chain_vs_direct_tv_decay(self):
        # Sticky two-state chain: TV contracts by exactly |second eigenvalue|
        # per step, so the mixing time has a closed form to check against.
        eps = 0.05
        kernel = np.empty((2, 1, 2))
        kernel[0, 0] = [1 - eps, eps]
        kernel[1, 0] = [eps, 1 - eps]
        env = TabularMFG(
            2, 1, lambda mu: kernel, lambda mu: np.zeros((2, 1)),
            descriptor={"family": "sticky", "n_states": 2, "n_actions": 1,
                        "seed": 0, "overrides": {}},
            kernel_mu_independent=True, reward_mu_independent=True,
        )
        c = 0.01
        t = estimate_mixing_time(env, PolicyTable.uniform(2, 1), MeanField.uniform(2), c=c)
        lam2 = 1 - 2 * eps
        # TV from a vertex start is 0.5 * lam2^k; first k with that <= c.
        expected = int(np.ceil(np.log(c / 0.5) / np.log(lam2)))
        assert t == expected

    def test_cap_exceeded(self):
        eps = 0.05
        kernel = np.empty((2, 1, 2))
        kernel[0, 0] = [1 - eps, eps]
        kernel[1, 0] = [eps, 1 - eps]
        env = TabularMFG(
            2, 1, lambda mu: kernel, lambda mu: np.zeros((2, 1)),
            descriptor={"family": "sticky", "n_states": 2, "n_actions": 1,
                        "seed": 0, "overrides": {}},
            kernel_mu_independent=True, reward_mu_independent=True,
        )
        with pytest.raises(OracleError):
            estimate_mixing_time(env, PolicyTable.uniform(2, 1), MeanField.uniform(2), c=1e-6, cap=5)


class TestFisher:
    def test_single_action_trivial_space(self):
        env = random_mdp(3, 1, seed=1)
        assert fisher_min_eigenvalue(env, SoftmaxPolicy.zeros(3, 1)) == 0.0

    def test_uniform_twostate_value(self):
        # Hand-assembled 4x4: each state block is mu*(s) (diag(pi) - pi pi^T)
        # with mu* = [1/2, 1/2] and pi = [1/2, 1/2]; restricted eigenvalue 1/4.
        env = twostate_instance()
        val = fisher_min_eigenvalue(env, SoftmaxPolicy.zeros(2, 2))
        assert val == pytest.approx(0.25, abs=1e-12)

    def test_positive_for_interior_policies(self, rng):
        env = synthetic_env("env1", 4, seed=7)
        for _ in range(5):
            theta = SoftmaxPolicy(rng.standard_normal((4, 4)))
            assert fisher_min_eigenvalue(env, theta) > 0.0


class TestBestResponseGap:
    def test_equilibrium_has_zero_gap(self):
        env = twostate_instance()
        mu = MeanField(np.array([0.75, 0.25]))
        assert abs(best_response_gap(env, PI_BAR_1, mu)) <= 1e-9

    def test_suboptimal_policy_has_positive_gap(self):
        env = twostate_instance()
        mu = MeanField(np.array([0.75, 0.25]))
        assert best_response_gap(env, PI_BAR_2, mu) == pytest.approx(0.25, abs=1e-9)
