"""Finite-horizon tabular MDPs: exact evaluation and sampling.

Conventions: steps are 0-based (``t = 0 .. H-1``), a cost is incurred at
every step including the last, and ``Q_H = 0``.  Transition and cost arrays
either carry a leading axis of length ``H`` or of length 1 (stationary,
broadcast over steps).
"""
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .config import TOL
from .errors import ConfigurationError, PolicyError
from .policies import SimplexPolicy, mix_policies  # noqa: F401  (re-exported)

DETERMINISTIC, BERNOULLI, UNIFORM = 0, 1, 2


class CostModel:
    """Per-(t, s, a) cost distributions from three parametric families.

    ``kind`` selects the family; ``a`` is the value / Bernoulli mean /
    interval low end and ``b`` the interval high end (unused otherwise).
    """

    def __init__(self, kind, a, b=None):
        self.a = np.asarray(a, dtype=float)
        self.kind = np.broadcast_to(np.asarray(kind, dtype=np.int8), self.a.shape)
        self.b = np.broadcast_to(np.asarray(self.a if b is None else b, dtype=float), self.a.shape)
        if self.a.ndim != 3:
            raise ConfigurationError("cost arrays must have shape (H or 1, S, A)")
        if not np.isin(self.kind, (DETERMINISTIC, BERNOULLI, UNIFORM)).all():
            raise ConfigurationError("unknown cost family")
        bern = self.kind == BERNOULLI
        if np.any(bern & ((self.a < 0) | (self.a > 1))):
            raise ConfigurationError("Bernoulli means must lie in [0, 1]")
        self.mean = np.where(self.kind == UNIFORM, 0.5 * (self.a + self.b), self.a)
        self.low = np.where(bern, 0.0, self.a)
        self.high = np.where(bern, 1.0, self.b)
        self._single = int(self.kind.flat[0]) if np.all(self.kind == self.kind.flat[0]) else None

    @classmethod
    def deterministic(cls, values):
        return cls(DETERMINISTIC, values)

    @classmethod
    def bernoulli(cls, means):
        return cls(BERNOULLI, means)

    def sample(self, t, s, a, rng):
        """Vectorized draw at index arrays ``(t, s, a)`` (``t`` already folded)."""
        if self._single == DETERMINISTIC:
            return self.a[t, s, a].astype(float)
        lo = self.a[t, s, a]
        u = rng.random(np.shape(lo))
        if self._single == BERNOULLI:
            return (u < lo).astype(float)
        kind = self.kind[t, s, a]
        hi = self.b[t, s, a]
        return np.where(kind == BERNOULLI, (u < lo).astype(float),
                        np.where(kind == UNIFORM, lo + u * (hi - lo), lo))


class FiniteMdp:
    """Tabular finite-horizon MDP ``(S, A, P_t, C_t, rho0, H)``."""

    def __init__(self, transitions, costs, initial, horizon, cost_bound=None):
        P = np.asarray(transitions, dtype=float)
        if P.ndim == 3:
            P = P[None]
        if P.ndim != 4 or P.shape[1] != P.shape[3]:
            raise ConfigurationError("transitions must have shape (H or 1, S, A, S)")
        if not isinstance(costs, CostModel):
            costs = CostModel.deterministic(np.asarray(costs, dtype=float).reshape((-1,) + P.shape[1:3]))
        rho = np.asarray(initial, dtype=float)
        S, A = P.shape[1], P.shape[2]
        H = int(horizon)
        if H < 1:
            raise ConfigurationError("horizon must be at least 1")
        if P.shape[0] not in (1, H) or costs.mean.shape[0] not in (1, H):
            raise ConfigurationError("leading axis must be 1 (stationary) or H")
        if costs.mean.shape[1:] != (S, A):
            raise ConfigurationError("cost model shape does not match (S, A)")
        if rho.shape != (S,):
            raise ConfigurationError("initial distribution must have length S")
        if np.any(P < 0) or np.max(np.abs(P.sum(-1) - 1.0)) > TOL.row_sum:
            raise ConfigurationError("transition rows must be distributions")
        if np.any(rho < 0) or abs(rho.sum() - 1.0) > TOL.row_sum:
            raise ConfigurationError("initial distribution must sum to 1")
        if cost_bound is None:
            cost_bound = float(costs.high.max())
        if costs.low.min() < 0 or costs.high.max() > cost_bound + 1e-12:
            raise ConfigurationError("realizable costs must lie in [0, cost_bound]")
        for arr in (P, rho):
            arr.flags.writeable = False
        self.P = P
        self.costs = costs
        self.initial = rho
        self.horizon = H
        self.num_states = S
        self.num_actions = A
        self.cost_bound = float(cost_bound)
        self._cdf = None
        self._rho_cdf = None

    def transition(self, t):
        return self.P[t if self.P.shape[0] > 1 else 0]

    def mean_cost(self, t):
        return self.costs.mean[t if self.costs.mean.shape[0] > 1 else 0]

    @property
    def mean_costs(self):
        """``(H, S, A)`` view of expected costs."""
        return np.broadcast_to(self.costs.mean, (self.horizon, self.num_states, self.num_actions))

    def _fold(self, t, arr):
        return t if arr.shape[0] > 1 else np.zeros_like(t)

    def sample_cost(self, t, s, a, rng):
        t = np.asarray(t)
        return self.costs.sample(self._fold(t, self.costs.a), s, a, rng)

    def sample_next(self, t, s, a, rng):
        if self._cdf is None:
            self._cdf = np.cumsum(self.P, axis=-1)
            self._cdf[..., -1] = 1.0
        t = np.asarray(t)
        cdf = self._cdf[self._fold(t, self.P), s, a]
        u = rng.random(np.shape(cdf)[:-1])
        return np.minimum((u[..., None] >= cdf).sum(-1), self.num_states - 1)

    def sample_initial(self, rng, size=None):
        if self._rho_cdf is None:
            self._rho_cdf = np.cumsum(self.initial)
            self._rho_cdf[-1] = 1.0
        u = rng.random(size)
        return np.minimum(np.searchsorted(self._rho_cdf, u, side="right"), self.num_states - 1)

    def __repr__(self):
        return f"FiniteMdp(S={self.num_states}, A={self.num_actions}, H={self.horizon})"


@dataclass(frozen=True)
class Trajectory:
    """One episode: per-step state, action, realized cost and the behavior
    probability (discrete) or density (continuous) of the taken action."""

    states: list
    actions: list
    costs: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        n = len(self.states)
        if not (len(self.actions) == len(self.costs) == len(self.probs) == n):
            raise ConfigurationError("trajectory fields differ in length")

    def __len__(self):
        return len(self.states)

    @property
    def total_cost(self):
        return float(np.sum(self.costs))


class StateDistribution(NamedTuple):
    per_step: np.ndarray   # (H, S)
    average: np.ndarray    # (S,)


class ValueTables(NamedTuple):
    q: np.ndarray   # (H, S, A)
    v: np.ndarray   # (H, S)


def as_table(policy, mdp):
    """``(H, S, A)`` action-probability table of any discrete policy."""
    table = policy.as_simplex(mdp).table
    if table.shape != (mdp.horizon, mdp.num_states, mdp.num_actions):
        raise ConfigurationError(
            f"policy table {table.shape} does not match MDP "
            f"{(mdp.horizon, mdp.num_states, mdp.num_actions)}")
    return table


def state_distribution(mdp, policy):
    """Forward recursion ``d_{t+1}(s') = sum_{s,a} d_t(s) pi(a|s,t) P_t(s'|s,a)``."""
    pi = as_table(policy, mdp)
    d = np.empty((mdp.horizon, mdp.num_states))
    d[0] = mdp.initial
    S, A = mdp.num_states, mdp.num_actions
    for t in range(mdp.horizon - 1):
        d[t + 1] = (d[t][:, None] * pi[t]).reshape(S * A) @ mdp.transition(t).reshape(S * A, S)
    return StateDistribution(d, d.mean(axis=0))


def expected_cost(mdp, policy):
    """Exact ``mu(pi) = sum_t E_{s ~ d_t, a ~ pi}[cbar_t(s, a)]``."""
    pi = as_table(policy, mdp)
    d = state_distribution(mdp, policy).per_step
    return float(np.einsum("ts,tsa,tsa->", d, pi, mdp.mean_costs))


def exact_q(mdp, policy):
    """Backward recursion for ``Q_t^pi`` and ``V_t^pi`` with ``Q_H = 0``."""
    pi = as_table(policy, mdp)
    H, S, A = mdp.horizon, mdp.num_states, mdp.num_actions
    q = np.empty((H, S, A))
    v = np.empty((H, S))
    v_next = np.zeros(S)
    for t in range(H - 1, -1, -1):
        q[t] = mdp.mean_cost(t) + mdp.transition(t) @ v_next
        v[t] = np.einsum("sa,sa->s", pi[t], q[t])
        v_next = v[t]
    return ValueTables(q, v)


def optimal_values(mdp):
    """Bellman-optimal ``Q*``, ``V*`` and a greedy deterministic policy
    (ties broken towards the lowest action index)."""
    H, S = mdp.horizon, mdp.num_states
    q = np.empty((H, S, mdp.num_actions))
    v = np.empty((H, S))
    v_next = np.zeros(S)
    for t in range(H - 1, -1, -1):
        q[t] = mdp.mean_cost(t) + mdp.transition(t) @ v_next
        v[t] = q[t].min(axis=1)
        v_next = v[t]
    greedy = SimplexPolicy.deterministic(q.argmin(axis=2), mdp.num_actions)
    return ValueTables(q, v), greedy


def performance_difference_residual(mdp, pi1, pi2):
    """``|(mu(pi1) - mu(pi2)) - sum_t E_{d_t^pi1, pi1}[Q^pi2 - V^pi2]|``.

    The identity is checked with the plain sum over steps; it holds exactly
    for finite-horizon MDPs without any extra factor of H.
    """
    t1 = as_table(pi1, mdp)
    d1 = state_distribution(mdp, pi1).per_step
    q2, v2 = exact_q(mdp, pi2)
    adv = q2 - v2[:, :, None]
    gap = expected_cost(mdp, pi1) - expected_cost(mdp, pi2)
    return abs(gap - float(np.einsum("ts,tsa,tsa->", d1, t1, adv)))


def _checked(p, tol=TOL.policy_norm):
    p = np.asarray(p, dtype=float)
    if np.any(p < -tol) or abs(p.sum() - 1.0) > tol or not np.all(np.isfinite(p)):
        raise PolicyError(f"invalid action distribution {p}")
    return p


def rollout(env, policy, rng):
    """Sample one length-H trajectory; delegates to ``env.rollout`` for
    non-tabular environments."""
    if not isinstance(env, FiniteMdp):
        return env.rollout(policy, rng)
    states, actions, costs, probs = [], [], [], []
    s = int(env.sample_initial(rng))
    for t in range(env.horizon):
        p = _checked(policy.action_probs(s, t))
        a = int(rng.choice(len(p), p=p / p.sum()))
        c = float(env.sample_cost(t, s, a, rng))
        states.append(s)
        actions.append(a)
        costs.append(c)
        probs.append(float(p[a]))
        if t + 1 < env.horizon:
            s = int(env.sample_next(t, s, a, rng))
    return Trajectory(states, actions, np.array(costs), np.array(probs))


def sample_paths(mdp, policy, n, rng):
    """Vectorized rollouts for tabular policies.

    Returns arrays ``states, actions, costs, probs`` of shape ``(n, H)``.
    """
    pi = as_table(policy, mdp)
    H = mdp.horizon
    states = np.empty((n, H), dtype=int)
    actions = np.empty((n, H), dtype=int)
    costs = np.empty((n, H))
    probs = np.empty((n, H))
    s = mdp.sample_initial(rng, size=n)
    for t in range(H):
        cdf = np.cumsum(pi[t, s], axis=1)
        a = np.minimum((rng.random(n)[:, None] >= cdf).sum(1), mdp.num_actions - 1)
        tt = np.full(n, t)
        states[:, t], actions[:, t] = s, a
        probs[:, t] = pi[t, s, a]
        costs[:, t] = mdp.sample_cost(tt, s, a, rng)
        if t + 1 < H:
            s = mdp.sample_next(tt, s, a, rng)
    return states, actions, costs, probs
