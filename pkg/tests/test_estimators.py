import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aggrevated.environments.point_mass import linear_gaussian_surrogate, make_point_mass
from aggrevated.environments.tabular import make_bandit_rows, make_random_tabular
from aggrevated.environments.tree import make_binary_tree
from aggrevated.errors import DataError, UnsupportedModeError
from aggrevated.estimators import (exact_fisher, exact_gradient_discrete, fisher_factor,
                                   importance_weights, sampled_gradient_continuous,
                                   sampled_gradient_discrete, surrogate_loss_exact,
                                   surrogate_loss_importance, tabular_score_gradient)
from aggrevated.mdp import CostModel, FiniteMdp, Trajectory, rollout, sample_paths
from aggrevated.oracles import ExpertOracle
from aggrevated.policies import (DifferentiablePolicy, Gaussian, Identity, LinearSoftmax,
                                 OneHotState, SimplexPolicy, StateIndex, StateTimeIndex,
                                 TabularSoftmax)

from conftest import central_difference, enumerate_paths, random_simplex, rel_err


def _one_state(q):
    """H=1, S=1 MDP whose only row has deterministic costs ``q``."""
    q = np.asarray(q, dtype=float)
    P = np.ones((1, 1, q.size, 1))
    return FiniteMdp(P, CostModel.deterministic(q[None, None]), [1.0], 1)


def _tabular_policy(S, A, H, rng, scale=1.0):
    fam = TabularSoftmax(S * H, A)
    return DifferentiablePolicy(fam, scale * rng.normal(size=fam.dim), StateTimeIndex(S, H))


class TestSurrogateLossExact:
    def test_uniform_single_state(self):
        mdp = _one_state([0.2, 0.8])
        oracle = ExpertOracle.exact(mdp)
        uniform = SimplexPolicy.uniform(1, 2, 1)
        assert surrogate_loss_exact(mdp, oracle, uniform, uniform) == pytest.approx(0.5)

    def test_expert_on_tree(self, small_tree):
        """The expert's loss averages V* along its own path: (0.2 + 0.2) / 2."""
        mdp, spec = small_tree
        oracle = ExpertOracle.exact(mdp)
        expert = SimplexPolicy.deterministic(spec.expert_actions(), 2, 2)
        assert surrogate_loss_exact(mdp, oracle, expert, expert) == pytest.approx(0.2)

    def test_matches_monte_carlo(self, rng):
        mdp = make_random_tabular(4, 3, 3, seed=5)
        oracle = ExpertOracle.exact(mdp)
        rollin, learner = random_simplex(rng, 3, 4, 3), random_simplex(rng, 3, 4, 3)
        n = 1_000_000
        states, _, _, _ = sample_paths(mdp, rollin, n, rng)
        t = np.broadcast_to(np.arange(3), states.shape)
        cdf = np.cumsum(learner.table[t, states], axis=-1)
        acts = np.minimum((rng.random(states.shape)[..., None] >= cdf).sum(-1), 2)
        per_path = oracle.exact_q_table()[t, states, acts].mean(1)
        se = per_path.std() / np.sqrt(n)
        assert abs(per_path.mean() - surrogate_loss_exact(mdp, oracle, learner, rollin)) < 3 * se

    def test_continuous_env_unsupported(self):
        env, expert = make_point_mass(4)
        pol = SimplexPolicy.uniform(1, 2, 4)
        with pytest.raises(UnsupportedModeError):
            surrogate_loss_exact(env, ExpertOracle.analytic(env, expert), pol, pol)


class TestExactGradient:
    def test_single_state_example(self):
        mdp = _one_state([0.2, 0.8])
        oracle = ExpertOracle.exact(mdp)
        pol = DifferentiablePolicy(TabularSoftmax(1, 2), np.zeros(2), StateIndex(1))
        g = exact_gradient_discrete(mdp, oracle, pol, SimplexPolicy.uniform(1, 2, 1)).vector
        np.testing.assert_allclose(g, [-0.15, 0.15], atol=1e-15)
        fd = central_difference(lambda th: surrogate_loss_exact(mdp, oracle, pol.with_theta(th), pol), pol.theta)
        np.testing.assert_allclose(g, fd, atol=1e-9)

    def test_constant_q_gives_zero(self):
        mdp = _one_state([0.4, 0.4, 0.4])
        oracle = ExpertOracle.exact(mdp)
        pol = DifferentiablePolicy(TabularSoftmax(1, 3), np.array([0.3, -1.0, 2.0]), StateIndex(1))
        g = exact_gradient_discrete(mdp, oracle, pol, SimplexPolicy.uniform(1, 3, 1)).vector
        np.testing.assert_allclose(g, 0.0, atol=1e-16)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        S, A, H = 3, 3, 3
        mdp = make_random_tabular(S, A, H, seed)
        oracle = ExpertOracle.exact(mdp)
        fam = LinearSoftmax(S + H, A)
        pol = DifferentiablePolicy(fam, rng.normal(size=fam.dim), OneHotState(S, H))
        rollin = random_simplex(rng, H, S, A)
        g = exact_gradient_discrete(mdp, oracle, pol, rollin).vector
        fd = central_difference(lambda th: surrogate_loss_exact(mdp, oracle, pol.with_theta(th), rollin), pol.theta)
        assert rel_err(g, fd) < 1e-5


class TestSampledGradientDiscrete:
    def test_mean_matches_exact(self):
        mdp = make_random_tabular(2, 2, 2, seed=7)
        oracle = ExpertOracle.monte_carlo(mdp)
        pol = _tabular_policy(2, 2, 2, np.random.default_rng(1))
        exact = exact_gradient_discrete(mdp, oracle, pol, pol).vector
        rng = np.random.default_rng(2)
        draws = np.array([sampled_gradient_discrete([rollout(mdp, pol, rng)], oracle, pol, rng=rng).vector
                          for _ in range(10_000)])
        se = draws.std(0) / np.sqrt(len(draws))
        live = se > 0
        assert np.all(np.abs(draws.mean(0) - exact)[live] < 3.5 * se[live])

    def test_deterministic_case_ignores_seed(self, small_tree):
        mdp, _ = small_tree
        oracle = ExpertOracle.exact(mdp)
        pol = DifferentiablePolicy(TabularSoftmax(3, 2), np.tile([50.0, 0.0], 3), StateIndex(3))
        a = sampled_gradient_discrete([rollout(mdp, pol, np.random.default_rng(0))], oracle, pol).vector
        b = sampled_gradient_discrete([rollout(mdp, pol, np.random.default_rng(9))], oracle, pol).vector
        np.testing.assert_array_equal(a, b)

    def test_baseline_leaves_estimate_unchanged(self):
        mdp = make_random_tabular(3, 3, 3, seed=1)
        oracle = ExpertOracle.exact(mdp)
        pol = _tabular_policy(3, 3, 3, np.random.default_rng(0))
        trs = [rollout(mdp, pol, np.random.default_rng(k)) for k in range(5)]
        plain = sampled_gradient_discrete(trs, oracle, pol).vector
        vr = sampled_gradient_discrete(trs, oracle, pol, use_advantage=True).vector
        np.testing.assert_allclose(plain, vr, atol=1e-15)

    def test_empty_batch(self):
        mdp = make_random_tabular(2, 2, 2, seed=0)
        with pytest.raises(DataError):
            sampled_gradient_discrete([], ExpertOracle.exact(mdp), _tabular_policy(2, 2, 2, np.random.default_rng(0)))


class TestImportanceSampling:
    def test_on_policy_weights_are_one(self):
        mdp = make_random_tabular(3, 2, 4, seed=3)
        pol = _tabular_policy(3, 2, 4, np.random.default_rng(3))
        trs = [rollout(mdp, pol, np.random.default_rng(k)) for k in range(10)]
        for w in importance_weights(trs, pol):
            np.testing.assert_allclose(w, 1.0)

    def test_on_policy_equals_plain_average(self):
        mdp = make_random_tabular(3, 2, 4, seed=3)
        oracle = ExpertOracle.exact(mdp)
        pol = _tabular_policy(3, 2, 4, np.random.default_rng(3))
        trs = [rollout(mdp, pol, np.random.default_rng(k)) for k in range(10)]
        plain = np.mean([np.mean([oracle.query_q(s, t, a) for t, (s, a) in enumerate(zip(tr.states, tr.actions))])
                         for tr in trs])
        assert surrogate_loss_importance(trs, oracle, pol) == pytest.approx(plain)

    def test_off_policy_mean_matches_exact(self):
        """Reweighted losses from a fixed behaviour policy estimate the
        surrogate under roll-in by that same behaviour."""
        mdp = make_random_tabular(2, 2, 2, seed=4)
        oracle = ExpertOracle.exact(mdp)
        rng = np.random.default_rng(4)
        behaviour = _tabular_policy(2, 2, 2, rng)
        target = behaviour.with_theta(behaviour.theta + rng.normal(size=behaviour.dim))
        exact = surrogate_loss_exact(mdp, oracle, target, behaviour)
        est = np.array([surrogate_loss_importance([rollout(mdp, behaviour, rng)], oracle, target)
                        for _ in range(20_000)])
        assert abs(est.mean() - exact) < 3 * est.std() / np.sqrt(est.size)

    def test_point_mass_weights_have_mean_one(self):
        env, expert = make_point_mass(3)
        fam = Gaussian(2, 1, sigma_init=0.5)
        rng = np.random.default_rng(6)
        theta = np.array([-0.5, -0.4, 0.0, np.log(0.5 - fam.sigma_min)])
        behaviour = DifferentiablePolicy(fam, theta, Identity(2))
        target = behaviour.with_theta(theta + np.array([0.05, -0.05, 0.1, -0.1]))
        trs = [env.rollout(behaviour, rng) for _ in range(8_000)]
        w = np.concatenate(importance_weights(trs, target))
        assert np.all(np.isfinite(w))
        assert abs(w.mean() - 1.0) < 3 * w.std() / np.sqrt(w.size)
        oracle = ExpertOracle.analytic(env, expert)
        assert np.isfinite(surrogate_loss_importance(trs[:100], oracle, target))

    def test_bad_behaviour_probability(self):
        mdp = make_random_tabular(2, 2, 2, seed=0)
        pol = _tabular_policy(2, 2, 2, np.random.default_rng(0))
        tr = Trajectory([0, 1], [0, 1], np.zeros(2), np.array([0.5, 0.0]))
        with pytest.raises(DataError):
            importance_weights([tr], pol)


class TestSampledGradientContinuous:
    def test_constant_return_has_zero_mean(self):
        mdp = make_bandit_rows(1, 3, [[0.5, 0.5, 0.5]])
        oracle = ExpertOracle.exact(mdp)
        pol = DifferentiablePolicy(TabularSoftmax(1, 3), np.array([0.5, -0.2, 0.1]), StateIndex(1))
        rng = np.random.default_rng(0)
        states, actions, _, _ = sample_paths(mdp, pol, 100_000, rng)
        G = np.full(states.shape, 0.5)
        per = np.array([tabular_score_gradient(pol, states[i:i + 1], actions[i:i + 1], G[i:i + 1], 1)
                        for i in range(0, 100_000, 10)])
        se = per.std(0) / np.sqrt(len(per))
        assert np.all(np.abs(per.mean(0)) < 3 * se)

    def test_tabular_vectorized_matches_loop(self):
        mdp = make_random_tabular(3, 2, 3, seed=2)
        oracle = ExpertOracle.exact(mdp)
        pol = _tabular_policy(3, 2, 3, np.random.default_rng(2))
        trs = [rollout(mdp, pol, np.random.default_rng(k)) for k in range(6)]
        loop = sampled_gradient_continuous(trs, oracle, pol).vector
        states = np.array([tr.states for tr in trs])
        actions = np.array([tr.actions for tr in trs])
        q = oracle.exact_q_table()
        G = q[np.arange(3), states, actions]
        vec = tabular_score_gradient(pol, states, actions, G, 3, pol.featurizer.table(3, 3))
        np.testing.assert_allclose(vec, loop, atol=1e-14)

    def test_point_mass_mean_matches_fd(self):
        env, expert = make_point_mass(3)
        fam = Gaussian(2, 1, sigma_init=0.5)
        theta = np.array([-0.8, -0.6, 0.1, np.log(0.5 - fam.sigma_min)])
        pol = DifferentiablePolicy(fam, theta, Identity(2))
        oracle = ExpertOracle.analytic(env, expert)
        fd = central_difference(lambda th: linear_gaussian_surrogate(env, expert, fam, th, theta), theta)
        rng = np.random.default_rng(7)
        draws = np.array([sampled_gradient_continuous([env.rollout(pol, rng)], oracle, pol).vector
                          for _ in range(10_000)])
        se = draws.std(0) / np.sqrt(len(draws))
        assert np.all(np.abs(draws.mean(0) - fd) < 3.5 * se)

    def test_single_step_sign(self):
        """One step with ``G = a - 0.3``: every sample pushes the bias the same way."""
        fam = Gaussian(1, 1, sigma_init=1e-3 + 1e-4, sigma_min=1e-3)
        pol = DifferentiablePolicy(fam, np.array([0.0, 0.3, np.log(1e-4)]), Identity(1))

        class LinearOracle:
            horizon = 1
            has_value = False

            def query_q(self, s, t, a, rng=None):
                return float(np.atleast_1d(a)[0]) - 0.3

        rng = np.random.default_rng(1)
        trs = []
        for _ in range(200):
            a, p = pol.sample(np.array([1.0]), 0, rng)
            trs.append(Trajectory([np.array([1.0])], [a], np.zeros(1), np.array([p])))
        g = sampled_gradient_continuous(trs, LinearOracle(), pol).vector
        assert g[1] > 0   # d E[a] / d bias = 1

    def test_advantage_needs_value(self):
        mdp = make_random_tabular(2, 2, 2, seed=0)
        oracle = ExpertOracle.monte_carlo(mdp, with_value=False)
        pol = _tabular_policy(2, 2, 2, np.random.default_rng(0))
        tr = rollout(mdp, pol, np.random.default_rng(0))
        with pytest.raises(UnsupportedModeError):
            sampled_gradient_continuous([tr], oracle, pol, use_advantage=True, rng=np.random.default_rng(0))


class TestFisher:
    def test_single_column(self):
        class Fixed:
            dim = 2
            discrete = True

            def features(self, s, t):
                return s, None

            def log_policy_gradient(self, obs, a, mask=None):
                return np.array([2.0, 0.0])

        tr = Trajectory([0], [0], np.zeros(1), np.ones(1))
        np.testing.assert_array_equal(fisher_factor([tr], Fixed(), horizon=1).matrix, [[2.0], [0.0]])

    def test_psd(self):
        mdp = make_random_tabular(3, 3, 3, seed=0)
        pol = _tabular_policy(3, 3, 3, np.random.default_rng(0))
        f = fisher_factor([rollout(mdp, pol, np.random.default_rng(k)) for k in range(7)], pol)
        rng = np.random.default_rng(1)
        for _ in range(20):
            x = rng.normal(size=f.dim)
            assert x @ f.matvec(x) >= -1e-14

    def test_exact_fisher_matches_path_enumeration(self):
        mdp = make_random_tabular(2, 2, 3, seed=3)
        pol = _tabular_policy(2, 2, 3, np.random.default_rng(3))
        brute = np.zeros((pol.dim, pol.dim))
        for p, states, actions in enumerate_paths(mdp, pol):
            tr = Trajectory(list(states), list(actions), np.zeros(3), np.ones(3))
            g = fisher_factor([tr], pol, horizon=3).matrix[:, 0]
            brute += p * np.outer(g, g)
        np.testing.assert_allclose(exact_fisher(mdp, pol), brute, atol=1e-13)

    def test_sampled_gram_converges(self):
        """Column Gram over 10^5 trajectories vs. the enumerated Fisher."""
        S, A, H, M = 2, 2, 2, 100_000
        mdp = make_random_tabular(S, A, H, seed=8)
        pol = DifferentiablePolicy(TabularSoftmax(S, A), np.array([0.4, -0.3, 1.0, 0.2]), StateIndex(S))
        states, actions, _, _ = sample_paths(mdp, pol, M, np.random.default_rng(8))
        p = pol.as_simplex(mdp).table[0]
        # tabular score: e_s (x) (onehot(a) - p_s), summed over steps
        scores = np.zeros((M, S, A))
        for t in range(H):
            np.add.at(scores, (np.arange(M), states[:, t]), np.eye(A)[actions[:, t]] - p[states[:, t]])
        cols = scores.reshape(M, -1) / H
        outer = cols[:, :, None] * cols[:, None, :]
        mean, se = outer.mean(0), outer.std(0) / np.sqrt(M)
        F = exact_fisher(mdp, pol)
        assert np.all(np.abs(mean - F) <= 3.5 * se + 1e-12)
