import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aggrevated.environments import parsing
from aggrevated.environments.parsing import (LEFT_ARC, REDUCE, RIGHT_ARC, SHIFT, ParserState,
                                             Sentence, arc_eager_step, finalize, legal_actions,
                                             make_parse_corpus, uas)
from aggrevated.environments.point_mass import expert_cost, make_point_mass
from aggrevated.environments.tabular import hard_bandit_means, make_bandit_rows, make_random_tabular
from aggrevated.environments.tree import make_binary_tree, random_leaf_means, tree_expert
from aggrevated.errors import ConfigurationError, DataError, TransitionError
from aggrevated.learner import RunConfig, regret_grid
from aggrevated.mdp import expected_cost, optimal_values, sample_paths
from aggrevated.policies import SimplexPolicy

from conftest import enumerate_paths


class TestBinaryTree:
    def test_depth2(self, small_tree):
        mdp, spec = small_tree
        assert mdp.num_states == 3 and mdp.horizon == 2
        (q, _), _ = optimal_values(mdp)
        assert q[0, 0, 0] == pytest.approx(0.2)

    def test_depth10_size(self):
        mdp, spec = make_binary_tree(10, np.full(512, 0.5))
        assert mdp.num_states == spec.num_states == 1023

    def test_wrong_leaf_count(self):
        with pytest.raises(ConfigurationError):
            make_binary_tree(3, (0.1, 0.2, 0.3))

    def test_nonleaf_costs_zero_and_deterministic_moves(self):
        mdp, spec = make_binary_tree(4, np.linspace(0.1, 0.8, 8))
        for t in range(mdp.horizon):
            c = mdp.mean_cost(t)
            P = mdp.transition(t)
            for s in range(spec.first_leaf):
                assert np.all(c[s] == 0)
                assert np.all(np.isin(P[s], (0.0, 1.0)))

    def test_bernoulli_leaf_means(self):
        """Empirical leaf costs under the uniform policy sit within 3 sigma."""
        means = (0.1, 0.35, 0.6, 0.9)
        mdp, spec = make_binary_tree(3, means)
        states, _, costs, _ = sample_paths(mdp, SimplexPolicy.uniform(7, 2, 3), 100_000, np.random.default_rng(0))
        leaf = states[:, -1] - spec.first_leaf
        for j, m in enumerate(means):
            c = costs[leaf == j, -1]
            assert abs(c.mean() - m) < 3 * np.sqrt(m * (1 - m) / c.size)

    def test_expert_reaches_best_leaf(self):
        means = random_leaf_means(6, np.random.default_rng(3))
        mdp, spec = make_binary_tree(6, means)
        assert expected_cost(mdp, tree_expert(spec)) == pytest.approx(min(means))

    def test_tree_geometry(self):
        _, spec = make_binary_tree(4, np.linspace(0, 1, 8))
        path = spec.path(5)
        assert [st for st, _ in path][0] == 0 and len(path) == 4
        assert path[-1][0] == spec.leaf_state(5)
        assert all(spec.is_ancestor(st, 5) for st, _ in path[:-1])
        assert [a for _, a in path[:-1]] == [1, 0, 1]   # 5 = 0b101


class TestBanditRows:
    def test_zero_gap_has_no_regret(self):
        mdp = make_bandit_rows(1, 2, [[0.5, 0.5]])
        (_, v), _ = optimal_values(mdp)
        for p in (0.0, 0.3, 1.0):
            pol = SimplexPolicy(np.array([[[p, 1 - p]]]))
            assert expected_cost(mdp, pol) - mdp.initial @ v[0] == pytest.approx(0.0)

    def test_expert_gets_mean_of_row_minima(self):
        means = np.array([[0.2, 0.6], [0.7, 0.3], [0.5, 0.4], [0.1, 0.9]])
        mdp = make_bandit_rows(4, 2, means)
        expert = SimplexPolicy.deterministic(means.argmin(1), 2, 1)
        assert expected_cost(mdp, expert) == pytest.approx(means.min(1).mean())

    def test_hard_family_shape(self):
        m = hard_bandit_means(8, 4, 0.1, np.random.default_rng(0))
        assert np.all(np.sort(m, 1)[:, 0] == pytest.approx(0.4))
        assert np.all(np.sort(m, 1)[:, 1:] == pytest.approx(0.6))

    def test_rejects_bad_shape(self):
        with pytest.raises(ConfigurationError):
            make_bandit_rows(2, 2, np.zeros((2, 3)))

    def test_regret_tracks_sqrt_rate(self):
        """Constant fitted at small N predicts N=10^4 within a factor of 4."""
        S, A = 8, 4

        def config(N, seed):
            cfg = RunConfig()
            cfg.env.kind, cfg.env.num_states, cfg.env.num_actions, cfg.env.gap = "bandit", S, A, 0.1
            cfg.oracle.mode = "monte-carlo"
            cfg.learner.eta_schedule = "constant"
            cfg.learner.eta0 = np.sqrt(S * np.log(A) / N)
            cfg.run.episodes, cfg.run.seed = N, seed
            return cfg

        rate = lambda N: np.sqrt(S * np.log(A) * N)
        small = [1024, 2048]
        c = np.mean(regret_grid(config, small, [0]).ravel() / [rate(N) for N in small])
        R = regret_grid(config, [10_000], [0])[0, 0]
        assert c * rate(10_000) / 4 <= R <= 4 * c * rate(10_000)


class TestRandomTabular:
    def test_same_seed_identical(self):
        a, b = make_random_tabular(5, 3, 4, 21), make_random_tabular(5, 3, 4, 21)
        np.testing.assert_array_equal(a.P, b.P)
        np.testing.assert_array_equal(a.mean_costs, b.mean_costs)

    def test_rows_normalized(self):
        mdp = make_random_tabular(9, 4, 6, 2)
        assert np.abs(mdp.P.sum(-1) - 1).max() <= 1e-12

    def test_uniform_cost_matches_enumeration(self):
        mdp = make_random_tabular(6, 3, 4, 11)
        pol = SimplexPolicy.uniform(6, 3, 4)
        brute = 0.0
        for p, states, actions in enumerate_paths(mdp, pol):
            brute += p * sum(mdp.mean_cost(t)[s, a] for t, (s, a) in enumerate(zip(states, actions)))
        assert expected_cost(mdp, pol) == pytest.approx(brute, abs=1e-12)

    def test_rejects_empty(self):
        with pytest.raises(ConfigurationError):
            make_random_tabular(0, 2, 2, 0)


class TestPointMass:
    def test_origin_costs_nothing(self):
        env, _ = make_point_mass(6)
        s = np.zeros(2)
        for _ in range(6):
            assert env.step_cost(s, 0.0) == 0.0
            s = env.step(s, 0.0)

    def test_riccati_action_attains_value(self):
        env, expert = make_point_mass(8)
        s = np.array([0.7, -0.3])
        for t in range(8):
            assert expert.q(s, t, expert.act(s, t)) == pytest.approx(expert.v(s, t), abs=1e-12)

    def test_expert_q_matches_rollout(self):
        env, expert = make_point_mass(8)
        rng = np.random.default_rng(1)
        for _ in range(5):
            s, a, t0 = rng.normal(size=2), rng.normal(size=1), int(rng.integers(8))
            total, x, u = 0.0, s, a
            for t in range(t0, 8):
                total += env.step_cost(x, u)
                x = env.step(x, u)
                u = expert.act(x, t + 1) if t + 1 < 8 else None
            assert abs(total - expert.q(s, t0, a)) <= 1e-9 * max(1.0, total)

    def test_q_is_minimized_by_expert(self):
        env, expert = make_point_mass(5)
        s = np.array([1.0, 0.5])
        a_star = expert.act(s, 0)
        for da in (-0.3, 0.1, 0.5):
            assert expert.q(s, 0, a_star + da) > expert.q(s, 0, a_star)

    def test_expert_cost_matches_monte_carlo(self):
        env, expert = make_point_mass(6)
        rng = np.random.default_rng(2)
        totals = np.array([env.rollout(expert, rng).costs.sum() for _ in range(4000)])
        assert abs(totals.mean() - expert_cost(env, expert)) < 4 * totals.std() / np.sqrt(totals.size)

    @pytest.mark.parametrize("kw", [{"q_pos": 0.0}, {"r": -1.0}, {"q_vel": -0.5}])
    def test_rejects_indefinite_weights(self, kw):
        with pytest.raises(ConfigurationError):
            make_point_mass(5, **kw)


class TestArcEager:
    def _two_tokens(self):
        return Sentence(tokens=(6, 1), heads=(0, 1))

    def test_only_shift_with_empty_stack(self):
        mask = legal_actions(ParserState.initial(self._two_tokens()))
        assert mask.tolist() == [True, False, False, False]

    def test_illegal_action_raises(self):
        with pytest.raises(TransitionError):
            arc_eager_step(ParserState.initial(self._two_tokens()), REDUCE)

    def test_hand_sequence(self):
        sent = self._two_tokens()
        state = arc_eager_step(ParserState.initial(sent), SHIFT)
        state = arc_eager_step(state, RIGHT_ARC)
        assert state.terminal
        assert state.arcs == {(1, 2)}
        assert uas(finalize(state), sent.heads) == 1.0

    def test_left_arc_pops(self):
        sent = Sentence(tokens=(2, 1), heads=(2, 0))
        state = arc_eager_step(ParserState.initial(sent), SHIFT)
        state = arc_eager_step(state, LEFT_ARC)
        assert state.stack == () and state.arcs == {(2, 1)}

    def test_gold_sequence_rebuilds_every_tree(self):
        for sent in make_parse_corpus(100, 12, 30, 4):
            final, _ = parsing.parse_with(parsing.oracle_action, ParserState.initial(sent))
            assert uas(finalize(final), sent.heads) == 1.0

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10_000), st.data())
    def test_random_legal_walk_keeps_forest(self, seed, data):
        """Tokens are partitioned and arcs never give a token two heads or a cycle."""
        sent = make_parse_corpus(1, 10, 18, seed)[0]
        state = ParserState.initial(sent)
        n = len(sent)
        while not state.terminal:
            legal = np.flatnonzero(legal_actions(state))
            state = arc_eager_step(state, data.draw(st.sampled_from(legal.tolist())))
            assert len(state.stack) == len(set(state.stack))
            assert not set(state.stack) & set(state.buffer)
            # a popped token was reduced (has a head) or left-arced (has a head)
            placed = set(state.stack) | set(state.buffer)
            assert all(state.has_head(d) for d in range(1, n + 1) if d not in placed)
            for d in range(1, n + 1):
                seen, h = set(), d
                while h > 0 and state.heads[h] >= 0:
                    assert h not in seen
                    seen.add(h)
                    h = state.heads[h]


class TestCorpus:
    def test_projective_single_root(self):
        for sent in make_parse_corpus(200, 12, 30, 0):
            assert parsing.is_projective(sent.heads)
            assert 2 <= len(sent) <= 12

    def test_same_seed_same_corpus(self):
        assert make_parse_corpus(20, 12, 30, 5) == make_parse_corpus(20, 12, 30, 5)

    def test_round_trip_file(self, tmp_path):
        corpus = make_parse_corpus(15, 10, 24, 1)
        parsing.write_corpus(tmp_path / "c.txt", corpus)
        assert parsing.read_corpus(tmp_path / "c.txt") == corpus

    def test_malformed_file(self, tmp_path):
        (tmp_path / "bad.txt").write_text("1:0\t2-1\n")
        with pytest.raises(DataError):
            parsing.read_corpus(tmp_path / "bad.txt")

    def test_projectivity_detector(self):
        assert parsing.is_projective((2, 0, 2))
        assert not parsing.is_projective((3, 0, 2))   # 1<-3 crosses the root arc to 2
        assert not parsing.is_projective((0, 0))


class TestUas:
    def test_perfect(self):
        assert uas({(0, 1), (1, 2)}, (0, 1)) == 1.0

    def test_empty_prediction(self):
        assert uas(set(), (0, 1, 1)) == 0.0

    def test_three_of_four(self):
        assert uas({(0, 1), (1, 2), (1, 3), (1, 4)}, (0, 1, 1, 3)) == 0.75

    def test_empty_sentence(self):
        with pytest.raises(DataError):
            uas(set(), ())


class TestReachability:
    def _brute_best(self, state):
        if state.terminal:
            return uas(finalize(state), state.sentence.heads)
        return max(self._brute_best(arc_eager_step(state, a)) for a in np.flatnonzero(legal_actions(state)))

    def test_costs_match_exhaustive_search(self):
        """Expert cost-to-go equals one minus the best reachable UAS."""
        rng = np.random.default_rng(8)
        for sent in make_parse_corpus(12, 6, 18, 2):
            state = ParserState.initial(sent)
            while not state.terminal:
                best = self._brute_best(state)
                assert parsing.reachable_arcs(state) == pytest.approx(best * len(sent))
                legal = np.flatnonzero(legal_actions(state))
                state = arc_eager_step(state, int(rng.choice(legal)))
