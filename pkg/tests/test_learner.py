import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aggrevated.environments.tree import make_binary_tree
from aggrevated.errors import ConfigurationError, FitError, NumericError
from aggrevated.learner import (RegretCurve, RunConfig, build_setup, cumulative_regret, fit_power,
                                mixing_rate, regret_grid, run_aggrevated, run_reinforce,
                                run_tree_bandit_ucb, slope_fit, step_size)
from aggrevated.mdp import state_distribution
from aggrevated.policies import SimplexPolicy, mix_policies


def tree_config(**over):
    cfg = RunConfig()
    cfg.env.leaf_means = (0.2, 0.8)
    for key, value in over.items():
        cfg = cfg.with_value(key.replace("__", "."), value)
    return cfg


class TestRunConfig:
    @pytest.mark.parametrize("key,value", [
        ("run.episodes", 0), ("run.rollouts", 0), ("learner.alpha0", 1.5),
        ("learner.alpha_decay", -0.1), ("learner.eta0", 0.0), ("env.kind", "maze"),
        ("learner.update", "sgd"), ("learner.eta_schedule", "cosine"),
    ])
    def test_rejects(self, key, value):
        with pytest.raises(ConfigurationError):
            RunConfig().with_value(key, value).validate()

    def test_eg_needs_simplex(self):
        with pytest.raises(ConfigurationError):
            tree_config(policy__family="linear-softmax").validate()

    def test_tree_only_updates(self):
        cfg = RunConfig().with_value("env.kind", "tabular").with_value("learner.update", "ftl")
        with pytest.raises(ConfigurationError):
            cfg.validate()

    def test_advantage_needs_value(self):
        cfg = tree_config(learner__update="ogd", policy__family="tabular-softmax",
                          learner__use_advantage=True, oracle__mode="monte-carlo",
                          oracle__value_mode="none")
        with pytest.raises(ConfigurationError):
            run_aggrevated(cfg)

    def test_items_cover_every_field(self):
        keys = [k for k, _ in RunConfig().items()]
        assert len(keys) == len(set(keys)) and "run.seed" in keys and "env.depth" in keys

    def test_schedules(self):
        cfg = tree_config(learner__alpha0=1.0, learner__alpha_decay=0.5, learner__eta0=2.0)
        assert [mixing_rate(cfg, n) for n in (1, 2, 3)] == [0.5, 0.25, 0.125]
        assert step_size(cfg, 4) == 1.0
        assert step_size(cfg.with_value("learner.eta_schedule", "constant"), 4) == 2.0


class TestCumulativeRegret:
    def test_zero_gap(self):
        assert np.all(cumulative_regret(np.zeros(10)) == 0)

    def test_constant_gap(self):
        assert cumulative_regret(np.full(50, 0.3))[-1] == pytest.approx(15.0)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=50), st.floats(0.0, 1.0))
    def test_prefix_identity(self, mus, star):
        curve = RegretCurve.from_costs(mus, star)
        R = np.concatenate([[0.0], curve.cum_regret])
        np.testing.assert_allclose(np.diff(R), np.asarray(mus) - star, atol=1e-12)

    def test_recorded_curve_matches_raw(self):
        curve, _ = run_aggrevated(tree_config(run__episodes=15))
        np.testing.assert_array_equal(curve.cum_regret, np.cumsum(curve.mu_pi - curve.mu_star))
        np.testing.assert_array_equal(cumulative_regret(curve), curve.cum_regret)


class TestSlopeFit:
    def test_sqrt(self):
        assert slope_fit(np.sqrt(np.arange(1, 1001))) == pytest.approx(0.5, abs=1e-9)

    def test_linear(self):
        assert slope_fit(3.0 * np.arange(1, 101)) == pytest.approx(1.0, abs=1e-9)

    def test_window(self):
        y = np.r_[np.ones(9), np.arange(10, 101) ** 0.7]
        assert slope_fit(y, (10, 100)) == pytest.approx(0.7, abs=1e-9)

    def test_nonpositive(self):
        with pytest.raises(FitError):
            slope_fit(np.r_[0.0, np.ones(5)])

    def test_bad_window(self):
        with pytest.raises(FitError):
            slope_fit(np.ones(10), (5, 11))

    @settings(max_examples=40, deadline=None)
    @given(st.floats(-3, 3), st.floats(-2, 2))
    def test_fit_power_recovers_exponent(self, a, b):
        x = np.geomspace(1, 1e4, 9)
        assert fit_power(x, np.exp(a) * x ** b) == pytest.approx(b, abs=1e-8)


class TestAggrevated:
    def test_depth2_eg_reaches_expert(self):
        curve, best = run_aggrevated(tree_config(learner__eta0=10.0, run__episodes=20))
        assert curve.mu_pi.min() == pytest.approx(0.2, abs=1e-6)
        assert curve.mu_star[0] == pytest.approx(0.2)

    def test_full_mixing_rolls_in_with_expert(self):
        setup = build_setup(tree_config())
        learner = SimplexPolicy.uniform(3, 2, 2)
        expert = state_distribution(setup.env, setup.expert).per_step
        mixed = state_distribution(setup.env, mix_policies(setup.expert, learner, 1.0)).per_step
        np.testing.assert_allclose(mixed, expert, atol=1e-15)

    def test_super_expert(self):
        cfg = tree_config(env__noise="deterministic", env__expert="right",
                          oracle__value_mode="expert", learner__eta0=10.0, run__episodes=30)
        curve, _ = run_aggrevated(cfg)
        assert curve.mu_star[0] == pytest.approx(0.8)
        assert curve.mu_pi.min() <= 0.7

    @pytest.mark.parametrize("update", ["ogd", "natural"])
    def test_gradient_updates_improve(self, update):
        cfg = tree_config(policy__family="tabular-softmax", learner__update=update,
                          run__episodes=40, run__rollouts=4)
        curve, best = run_aggrevated(cfg)
        assert curve.mu_pi.min() < curve.mu_pi[0] and best is not None

    def test_point_mass_runs(self):
        cfg = RunConfig()
        cfg.env.kind, cfg.env.horizon = "point-mass", 5
        cfg.policy.family, cfg.learner.update = "gaussian", "ogd"
        cfg.learner.estimator, cfg.learner.eta0 = "continuous", 0.05
        cfg.run.episodes, cfg.run.rollouts = 10, 4
        curve, _ = run_aggrevated(cfg)
        assert np.all(np.isfinite(curve.mu_pi)) and np.all(curve.inst_regret >= -1e-9)

    def test_numeric_failure_names_episode(self, monkeypatch):
        import aggrevated.learner as learner
        real = learner.ogd_step
        calls = []

        def flaky(theta, g, eta):
            calls.append(1)
            if len(calls) == 3:
                raise NumericError("non-finite update")
            return real(theta, g, eta)

        monkeypatch.setattr(learner, "ogd_step", flaky)
        cfg = tree_config(policy__family="tabular-softmax", learner__update="ogd", run__episodes=5)
        with pytest.raises(NumericError) as info:
            run_aggrevated(cfg)
        assert info.value.episode == 3 and "episode 3" in str(info.value)

    def test_deterministic(self):
        cfg = tree_config(env__leaf_means=None, env__depth=4, oracle__mode="leaf-sample",
                          run__episodes=50, run__rollouts=2, run__seed=3)
        a, _ = run_aggrevated(cfg)
        b, _ = run_aggrevated(cfg)
        assert a.mu_pi.tobytes() == b.mu_pi.tobytes()

    def test_parallel_rollouts_match_sequential(self):
        cfg = RunConfig()
        cfg.env.kind, cfg.env.num_states, cfg.env.num_actions, cfg.env.horizon = "tabular", 5, 3, 4
        cfg.policy.family, cfg.learner.update = "linear-softmax", "ogd"
        cfg.oracle.mode, cfg.run.episodes, cfg.run.rollouts = "monte-carlo", 10, 6
        serial, _ = run_aggrevated(cfg)
        parallel, _ = run_aggrevated(cfg.with_value("run.workers", 3))
        assert serial.mu_pi.tobytes() == parallel.mu_pi.tobytes()


class TestFollowTheLeaderRuns:
    @pytest.mark.parametrize("depth", [3, 5, 7])
    def test_exact_oracle_bound(self, depth):
        rng = np.random.default_rng(depth)
        means = tuple(rng.uniform(0, 1, 2 ** (depth - 1)))
        cfg = tree_config(env__depth=depth, env__leaf_means=means, learner__update="ftl",
                          run__episodes=3 * depth)
        curve, _ = run_aggrevated(cfg)
        R = curve.cum_regret
        assert np.all(R[depth - 1:] == R[-1])
        assert R[-1] <= (depth - 1) * 1.0


class TestWeightedMajorityRuns:
    def test_concentrates_on_best_leaf(self):
        cfg = tree_config(env__leaf_means=(0.9, 0.1, 0.7, 0.8), env__depth=3,
                          learner__update="weighted-majority", oracle__mode="leaf-sample",
                          learner__eta0=2.0, run__episodes=300)
        curve, best = run_aggrevated(cfg)
        assert curve.mu_pi[-1] < 0.2 and curve.mu_pi[0] == pytest.approx(0.625)


class TestReinforce:
    def test_single_action_is_flat(self):
        cfg = RunConfig()
        cfg.env.kind, cfg.env.num_states, cfg.env.num_actions, cfg.env.horizon = "tabular", 1, 1, 3
        cfg.policy.family, cfg.learner.update, cfg.run.episodes = "tabular-softmax", "reinforce", 10
        curve = run_reinforce(cfg)
        assert np.all(curve.mu_pi == curve.mu_pi[0]) and np.all(curve.inst_regret == 0)

    def test_depth2_tree_converges(self):
        cfg = tree_config(policy__family="tabular-softmax", learner__update="reinforce",
                          learner__eta0=5.0, run__episodes=200, run__rollouts=4)
        curve = run_reinforce(cfg)
        assert curve.mu_pi[-1] < 0.25 and curve.mu_pi[0] == pytest.approx(0.5, abs=0.1)


class TestUcb:
    def test_single_leaf(self):
        _, tree = make_binary_tree(1, (0.4,))
        assert run_tree_bandit_ucb(tree, 100, 0).final_regret == 0.0

    def test_two_arms(self):
        _, tree = make_binary_tree(2, (0.2, 0.8))
        curves = [run_tree_bandit_ucb(tree, 10_000, s) for s in range(3)]
        for c in curves:
            # the usual 8 ln N / gap^2 pull bound for the worse arm
            assert c.pulls[1] <= 8 * np.log(10_000) / 0.36
            assert c.cum_regret[-1] / c.cum_regret[999] < 3

    def test_regret_grows_with_leaves(self):
        R = []
        for depth in (3, 5, 7):
            _, tree = make_binary_tree(depth, np.r_[0.1, np.full(2 ** (depth - 1) - 1, 0.9)])
            R.append(run_tree_bandit_ucb(tree, 2000, 0).final_regret)
        assert R[0] < R[1] < R[2]


class TestRegretGrid:
    def test_shape_and_values(self):
        grid = regret_grid(lambda N, s: tree_config(run__episodes=N, run__seed=s), [5, 10], [0, 1, 2])
        assert grid.shape == (2, 3) and np.all(grid >= 0)
