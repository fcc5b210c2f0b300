"""Expert cost-to-go oracles.

An oracle answers "what does it cost to take action ``a`` in state ``s`` at
step ``t`` and follow the expert afterwards".  Exact oracles read a
dynamic-programming table (or a closed form); noisy oracles return one
unbiased sample per query and need a caller-supplied random stream.

Value baselines come in two flavours.  ``value_mode="min"`` uses
``V(s) = min_a Q(s, a)``, correct when the expert is optimal.  With a
deliberately sub-optimal expert the minimum is not the expert's value, so
``value_mode="expert"`` uses ``V(s) = E_{a ~ expert} Q(s, a)`` instead.
"""
import numpy as np

from .errors import ConfigurationError, QueryRangeError, UnsupportedModeError
from .mdp import FiniteMdp, as_table, exact_q, optimal_values

EXACT = "exact"
MONTE_CARLO = "monte-carlo"
LEAF_SAMPLE = "leaf-sample"
CLAIRVOYANT_PARSE = "clairvoyant-parse"
MODES = (EXACT, MONTE_CARLO, LEAF_SAMPLE, CLAIRVOYANT_PARSE)


class ExpertOracle:
    """Use the ``exact``, ``monte_carlo``, ``leaf_sample``, ``clairvoyant_parse``
    or ``analytic`` constructors rather than calling this directly."""

    def __init__(self, mode, env, expert=None, rollouts=1, q_max=None,
                 value_mode="min", q_table=None, v_table=None):
        if mode not in MODES:
            raise ConfigurationError(f"unknown oracle mode {mode!r}")
        if value_mode not in ("min", "expert"):
            raise ConfigurationError(f"unknown value mode {value_mode!r}")
        if int(rollouts) < 1:
            raise ConfigurationError("rollouts per query must be at least 1")
        self.mode = mode
        self.env = env
        self.expert = expert
        self.rollouts = int(rollouts)
        self.value_mode = value_mode
        self.q_table = q_table
        self.v_table = v_table
        self.horizon = env.horizon
        self.num_actions = env.num_actions if hasattr(env, "num_actions") else None
        self.q_max = q_max
        self._expert_table = None
        self._leaf_target = None

    # -- constructors --------------------------------------------------------

    @classmethod
    def exact(cls, mdp, expert=None, value_mode=None):
        """Exact ``Q*`` of an optimal expert (``expert=None``) or exact
        ``Q^expert`` of a given simplex policy."""
        q, v = _tables(mdp, expert, value_mode)
        return cls(EXACT, mdp, expert, q_max=float(q.max()),
                   value_mode=value_mode or ("min" if expert is None else "expert"),
                   q_table=q, v_table=v)

    @classmethod
    def monte_carlo(cls, mdp, expert=None, rollouts=1, with_value=True, value_mode=None):
        """Average of ``rollouts`` expert continuations per query.

        ``with_value`` attaches the exact value table so advantages are
        available; without it advantage queries are refused.
        """
        q, v = _tables(mdp, expert, value_mode)
        if expert is None:
            expert = optimal_values(mdp)[1]
        oracle = cls(MONTE_CARLO, mdp, expert, rollouts,
                     q_max=mdp.cost_bound * mdp.horizon,
                     value_mode=value_mode or "min",
                     v_table=v if with_value else None)
        oracle._exact_q = q
        oracle._expert_table = as_table(expert, mdp)
        return oracle

    @classmethod
    def leaf_sample(cls, mdp, tree, with_value=True):
        """Tree oracle: one draw of the cost of the best leaf reachable
        through ``(s, a)``, which is what a single expert rollout returns."""
        q, v = _tables(mdp, None, "min")
        oracle = cls(LEAF_SAMPLE, mdp, None, q_max=mdp.cost_bound,
                     v_table=v if with_value else None)
        oracle._exact_q = q
        target = np.empty((tree.num_states, 2), dtype=int)
        for s in range(tree.num_states):
            for a in range(2):
                child = s if tree.is_leaf(s) else 2 * s + 1 + a
                target[s, a] = tree.leaf_state(tree.best_leaf_below(child))
        oracle._leaf_target = target
        oracle.tree = tree
        return oracle

    @classmethod
    def clairvoyant_parse(cls, env):
        """Parsing oracle: ``1 - UAS`` after ``a`` and a clairvoyant completion."""
        return cls(CLAIRVOYANT_PARSE, env, q_max=1.0)

    @classmethod
    def analytic(cls, env, expert):
        """Closed-form quadratic ``Q*`` of an LQR expert on a continuous env."""
        oracle = cls(EXACT, env, expert, q_max=np.inf)
        oracle.continuous = True
        return oracle

    # -- properties ----------------------------------------------------------

    @property
    def noisy(self):
        return self.mode in (MONTE_CARLO, LEAF_SAMPLE)

    @property
    def is_tabular(self):
        return isinstance(self.env, FiniteMdp)

    @property
    def has_value(self):
        return self.mode == CLAIRVOYANT_PARSE or self.v_table is not None or getattr(self, "continuous", False)

    def exact_q_table(self):
        """Exact table behind a tabular oracle (noisy modes included)."""
        if self.q_table is not None:
            return self.q_table
        if hasattr(self, "_exact_q"):
            return self._exact_q
        raise UnsupportedModeError(f"{self.mode} oracle has no exact table")

    # -- queries -------------------------------------------------------------

    def _check(self, s, t, a=None):
        if not 0 <= int(t) < self.horizon:
            raise QueryRangeError(f"step {t} outside horizon {self.horizon}")
        if self.is_tabular:
            if not 0 <= int(s) < self.env.num_states:
                raise QueryRangeError(f"state {s} outside 0..{self.env.num_states - 1}")
            if a is not None and not 0 <= int(a) < self.env.num_actions:
                raise QueryRangeError(f"action {a} outside 0..{self.env.num_actions - 1}")

    def query_q(self, s, t, a, rng=None):
        self._check(s, t, a)
        if self.mode == CLAIRVOYANT_PARSE:
            return float(_parse_q(s)[int(a)])
        if self.mode == EXACT:
            if getattr(self, "continuous", False):
                return self.expert.q(s, t, a)
            return float(self.q_table[t, s, a])
        return float(self.query_batch(np.array([t]), np.array([s]), np.array([a]), rng)[0])

    def query_q_vector(self, s, t, rng=None):
        """Cost-to-go of every action; one independent sample each when noisy."""
        self._check(s, t)
        if self.mode == CLAIRVOYANT_PARSE:
            return _parse_q(s)
        if self.mode == EXACT:
            if getattr(self, "continuous", False):
                raise UnsupportedModeError("continuous actions have no cost-to-go vector")
            return self.q_table[t, s].copy()
        A = self.env.num_actions
        return self.query_batch(np.full(A, t), np.full(A, s), np.arange(A), rng)

    def query_batch(self, t, s, a, rng=None):
        """Vectorized tabular queries at index arrays of equal shape."""
        t, s, a = (np.asarray(x, dtype=int) for x in (t, s, a))
        if np.any((t < 0) | (t >= self.horizon)):
            raise QueryRangeError("query step outside the horizon")
        if self.mode == EXACT:
            return self.q_table[t, s, a]
        if rng is None:
            raise ConfigurationError("noisy oracle queries need a random stream")
        if self.mode == LEAF_SAMPLE:
            leaf = self._leaf_target[s, a]
            return self.env.sample_cost(np.zeros_like(t), leaf, np.zeros_like(a), rng)
        if self.mode == MONTE_CARLO:
            shape = t.shape
            m = self.rollouts
            total = _expert_rollouts(self.env, self._expert_table,
                                     np.repeat(t.ravel(), m), np.repeat(s.ravel(), m),
                                     np.repeat(a.ravel(), m), rng)
            return total.reshape(-1, m).mean(axis=1).reshape(shape)
        raise UnsupportedModeError(f"{self.mode} oracle does not take tabular queries")

    def value(self, s, t):
        self._check(s, t)
        if self.mode == CLAIRVOYANT_PARSE:
            q = _parse_q(s)
            return float(q.min())
        if getattr(self, "continuous", False):
            return self.expert.v(s, t)
        if self.v_table is None:
            raise UnsupportedModeError(f"{self.mode} oracle was built without a value estimate")
        return float(self.v_table[t, s])

    def value_batch(self, t, s):
        if self.v_table is None:
            raise UnsupportedModeError(f"{self.mode} oracle was built without a value estimate")
        return self.v_table[np.asarray(t, dtype=int), np.asarray(s, dtype=int)]

    def advantage(self, s, t, a, rng=None):
        """``Q(s, a) - V(s)``; noisy modes subtract the exact value from one sample."""
        v = self.value(s, t)
        return self.query_q(s, t, a, rng) - v

    def __repr__(self):
        return f"ExpertOracle({self.mode}, H={self.horizon})"


def _tables(mdp, expert, value_mode):
    if not isinstance(mdp, FiniteMdp):
        raise UnsupportedModeError("tabular oracles need a finite MDP")
    if expert is None:
        tables, _ = optimal_values(mdp)
        return tables.q, tables.v
    q, v = exact_q(mdp, expert)
    if (value_mode or "expert") == "min":
        v = q.min(axis=2)
    return q, v


def _expert_rollouts(mdp, expert_table, t, s, a, rng):
    """Total realized cost of taking ``a`` at ``(s, t)`` then following the
    expert to the end of the horizon, one sample per entry."""
    H = mdp.horizon
    total = mdp.sample_cost(t, s, a, rng).astype(float)
    s = s.copy()
    live = t + 1 < H
    if live.any():
        s[live] = mdp.sample_next(t[live], s[live], a[live], rng)
    for u in range(int(t.min()) + 1, H):
        live = t < u
        if not live.any():
            continue
        su = s[live]
        cdf = np.cumsum(expert_table[u, su], axis=1)
        au = np.minimum((rng.random(su.size)[:, None] >= cdf).sum(1), mdp.num_actions - 1)
        uu = np.full(su.size, u)
        total[live] += mdp.sample_cost(uu, su, au, rng)
        if u + 1 < H:
            s[live] = mdp.sample_next(uu, su, au, rng)
    return total


def _parse_q(state):
    from .environments.parsing import NUM_ACTIONS, arc_eager_step, legal_actions, reachable_arcs
    n = len(state.sentence)
    if state.terminal:
        return np.full(NUM_ACTIONS, 1.0 - reachable_arcs(state) / n)
    q = np.ones(NUM_ACTIONS)
    for a in np.flatnonzero(legal_actions(state)):
        q[a] = 1.0 - reachable_arcs(arc_eager_step(state, a)) / n
    return q
