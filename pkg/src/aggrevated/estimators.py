"""Imitation surrogate loss and its gradients.

The surrogate at episode ``n`` is

    l_n(pi) = (1/H) sum_t E_{s ~ d_t^rollin} E_{a ~ pi(.|s)} [Q*_t(s, a)]

Exact versions enumerate states of a finite MDP; sampled versions average
over ``K`` roll-in trajectories.  The "discrete" estimator sums over all
actions (``sum_a grad pi(a|s) Q*(s, a)``), the "continuous" one is the
score-function form ``grad log pi(a_t|s_t) Q*(s_t, a_t)`` for the taken
action only and works for any action space.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, NumericError, UnsupportedModeError
from .mdp import FiniteMdp, as_table, state_distribution
from .policies import DifferentiablePolicy, _softmax, trajectory_log_gradient

EXACT_DISCRETE = "exact-discrete"
SAMPLED_DISCRETE = "sampled-discrete"
SAMPLED_CONTINUOUS = "sampled-continuous"
VR_DISCRETE = "vr-discrete"
VR_CONTINUOUS = "vr-continuous"


@dataclass(frozen=True)
class GradientEstimate:
    vector: np.ndarray
    kind: str
    num_rollouts: int = 0
    episode: int = -1

    def __post_init__(self):
        if not np.all(np.isfinite(self.vector)):
            raise NumericError(f"{self.kind} gradient has non-finite entries")


@dataclass(frozen=True)
class FisherFactor:
    """``d x K`` matrix ``S`` with Fisher estimate ``S S^T``."""

    matrix: np.ndarray
    num_rollouts: int = field(default=0)

    def matvec(self, x):
        return self.matrix @ (self.matrix.T @ x)

    @property
    def dim(self):
        return self.matrix.shape[0]


def _require_finite(mdp):
    if not isinstance(mdp, FiniteMdp):
        raise UnsupportedModeError("exact surrogate quantities need a finite MDP; use the sampled estimators")


def surrogate_loss_exact(mdp, oracle, learner, rollin):
    _require_finite(mdp)
    d = state_distribution(mdp, rollin).per_step
    pi = as_table(learner, mdp)
    q = oracle.exact_q_table()
    return float(np.einsum("ts,tsa,tsa->", d, pi, q)) / mdp.horizon


def _observations(policy, mdp):
    H, S = mdp.horizon, mdp.num_states
    if policy.featurizer is None:
        return np.broadcast_to(np.arange(S), (H, S))
    return policy.featurizer.table(S, H)


def exact_gradient_discrete(mdp, oracle, policy, rollin):
    """``(1/H) sum_t sum_s d_t(s) sum_a grad pi(a|s) Q*_t(s, a)``."""
    _require_finite(mdp)
    if not policy.discrete:
        raise UnsupportedModeError("exact gradients need a discrete policy")
    H, S = mdp.horizon, mdp.num_states
    d = state_distribution(mdp, rollin).per_step
    q = oracle.exact_q_table()
    obs = _observations(policy, mdp)
    flat = np.asarray(obs).reshape((H * S,) + np.shape(obs)[2:])
    p = _softmax(policy.family.logits_batch(policy.theta, flat))
    qf = q.reshape(H * S, -1)
    # d pi / d logits contracted with Q: p * (Q - p.Q)
    dlogits = p * (qf - np.sum(p * qf, axis=1, keepdims=True)) * (d.reshape(-1, 1) / H)
    g = policy.family.logits_vjp_batch(policy.theta, flat, dlogits)
    return GradientEstimate(g, EXACT_DISCRETE)


def _horizon(oracle, trajectories):
    h = getattr(oracle, "horizon", None)
    return h if h else max(len(tr) for tr in trajectories)


def _check_batch(trajectories):
    if not trajectories:
        raise DataError("no trajectories to estimate from")


def sampled_gradient_discrete(trajectories, oracle, policy, use_advantage=False, rng=None, episode=-1):
    """Sum-over-actions estimator averaged over ``K`` trajectories.

    Noisy oracles are queried afresh at every visited state.  Because
    ``sum_a grad pi(a|s) = 0``, subtracting a state baseline leaves this
    estimator unchanged; the advantage flag exists for interface symmetry
    and is checked for that exact equality.
    """
    _check_batch(trajectories)
    if use_advantage and not oracle.has_value:
        raise UnsupportedModeError("advantage estimates need an oracle with a value estimate")
    H = _horizon(oracle, trajectories)
    g = np.zeros(policy.dim)
    for tr in trajectories:
        for t, s in enumerate(tr.states):
            q = oracle.query_q_vector(s, t, rng)
            if use_advantage:
                q = q - oracle.value(s, t)
            obs, mask = policy.features(s, t)
            g += policy.grad_expected(obs, q, mask)
    g /= H * len(trajectories)
    return GradientEstimate(g, VR_DISCRETE if use_advantage else SAMPLED_DISCRETE, len(trajectories), episode)


def importance_weights(trajectories, policy):
    """Per-step ratios ``pi(a_t|s_t; theta) / recorded behaviour probability``."""
    _check_batch(trajectories)
    out = []
    for tr in trajectories:
        w = np.empty(len(tr))
        for t, (s, a, b) in enumerate(zip(tr.states, tr.actions, tr.probs)):
            if not b > 0:
                raise DataError(f"behaviour probability {b} at step {t} is not positive")
            obs, mask = policy.features(s, t)
            if policy.discrete:
                w[t] = policy.action_distribution(obs, mask)[int(a)] / b
            else:
                w[t] = np.exp(policy.log_prob(obs, a)) / b
        out.append(w)
    return out


def surrogate_loss_importance(trajectories, oracle, policy, rng=None):
    """Importance-weighted estimate of the surrogate at ``policy`` from
    trajectories recorded under a different behaviour policy."""
    H = _horizon(oracle, trajectories)
    weights = importance_weights(trajectories, policy)
    total = 0.0
    for tr, w in zip(trajectories, weights):
        for t, (s, a) in enumerate(zip(tr.states, tr.actions)):
            total += w[t] * oracle.query_q(s, t, a, rng)
    return total / (H * len(trajectories))


def sampled_gradient_continuous(trajectories, oracle, policy, use_advantage=False, rng=None, episode=-1):
    """Score-function estimator ``(1/HK) sum grad pi(a_t|s_t) / b_t * G_t``.

    ``b_t`` is the recorded behaviour probability, so trajectories drawn
    from the policy itself give the familiar ``grad log pi * G``.  ``G`` is
    the cost-to-go of the taken action, minus the expert value when
    ``use_advantage`` is set.
    """
    _check_batch(trajectories)
    if use_advantage and not oracle.has_value:
        raise UnsupportedModeError("advantage estimates need an oracle with a value estimate")
    H = _horizon(oracle, trajectories)
    weights = importance_weights(trajectories, policy)
    g = np.zeros(policy.dim)
    for tr, w in zip(trajectories, weights):
        for t, (s, a) in enumerate(zip(tr.states, tr.actions)):
            G = oracle.query_q(s, t, a, rng)
            if use_advantage:
                G -= oracle.value(s, t)
            obs, mask = policy.features(s, t)
            g += w[t] * G * policy.log_policy_gradient(obs, a, mask)
    g /= H * len(trajectories)
    return GradientEstimate(g, VR_CONTINUOUS if use_advantage else SAMPLED_CONTINUOUS, len(trajectories), episode)


def tabular_score_gradient(policy, states, actions, G, horizon, obs_table=None):
    """Vectorized score-function estimator on a finite MDP.

    ``states``, ``actions`` and ``G`` are ``(K, H)`` arrays of samples drawn
    from ``policy`` itself; ``obs_table`` is the featurizer's ``(H, S, ...)``
    table (state ids are used directly when it is omitted).
    """
    K = states.shape[0]
    t = np.broadcast_to(np.arange(states.shape[1]), states.shape)
    xs = states if obs_table is None else obs_table[t, states]
    xs = xs.reshape((-1,) + xs.shape[2:])
    p = _softmax(policy.family.logits_batch(policy.theta, xs))
    dlogits = -p
    dlogits[np.arange(p.shape[0]), actions.ravel()] += 1.0
    dlogits *= G.reshape(-1, 1)
    return policy.family.logits_vjp_batch(policy.theta, xs, dlogits) / (horizon * K)


def fisher_factor(trajectories, policy, horizon=None):
    """Columns ``grad log rho(tau_i) / (H sqrt(K))``."""
    _check_batch(trajectories)
    H = horizon or max(len(tr) for tr in trajectories)
    K = len(trajectories)
    cols = [trajectory_log_gradient(policy, tr) for tr in trajectories]
    return FisherFactor(np.column_stack(cols) / (H * np.sqrt(K)), K)


def exact_fisher(mdp, policy):
    """``E_tau[grad log rho grad log rho^T] / H^2`` by state-space enumeration.

    Per-step scores are conditionally zero-mean given the past, so the
    cross terms between different steps vanish and the trajectory Fisher is
    the visitation-weighted sum of per-step action Fishers.
    """
    _require_finite(mdp)
    d = state_distribution(mdp, policy).per_step
    F = np.zeros((policy.dim, policy.dim))
    for t in range(mdp.horizon):
        for s in np.flatnonzero(d[t] > 0):
            obs, mask = policy.features(s, t)
            p = policy.action_distribution(obs, mask)
            for a in np.flatnonzero(p > 0):
                g = policy.log_policy_gradient(obs, a, mask)
                F += d[t, s] * p[a] * np.outer(g, g)
    return F / mdp.horizon ** 2


__all__ = [
    "DifferentiablePolicy", "FisherFactor", "GradientEstimate", "exact_fisher",
    "exact_gradient_discrete", "fisher_factor", "importance_weights",
    "sampled_gradient_continuous", "sampled_gradient_discrete",
    "surrogate_loss_exact", "surrogate_loss_importance", "tabular_score_gradient",
]
