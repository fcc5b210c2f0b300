"""Random tabular MDPs and the horizon-1 bandit-rows MDP."""
import numpy as np

from ..errors import ConfigurationError
from ..mdp import CostModel, FiniteMdp
from ..streams import ENV, substream


def make_random_tabular(num_states, num_actions, horizon, seed):
    """Non-stationary MDP with uniform-then-normalized rows and U[0, 1] costs."""
    S, A, H = int(num_states), int(num_actions), int(horizon)
    if min(S, A, H) < 1:
        raise ConfigurationError("S, A and H must be at least 1")
    rng = substream(seed, ENV)
    P = rng.random((H, S, A, S))
    P /= P.sum(axis=-1, keepdims=True)
    costs = rng.random((H, S, A))
    rho = rng.random(S)
    rho /= rho.sum()
    return FiniteMdp(P, CostModel.deterministic(costs), rho, H, cost_bound=1.0)


def make_bandit_rows(num_states, num_actions, means):
    """H = 1, uniform initial state, each state an independent Bernoulli
    A-armed problem with the given ``(S, A)`` mean costs."""
    S, A = int(num_states), int(num_actions)
    means = np.asarray(means, dtype=float)
    if means.shape != (S, A):
        raise ConfigurationError(f"means must have shape ({S}, {A})")
    if np.any(means < 0) or np.any(means > 1):
        raise ConfigurationError("means must lie in [0, 1]")
    P = np.broadcast_to(np.eye(S)[:, None, :], (S, A, S))
    return FiniteMdp(P, CostModel.bernoulli(means[None]), np.full(S, 1.0 / S), 1, cost_bound=1.0)


def hard_bandit_means(num_states, num_actions, gap, rng):
    """Fixed-gap family: one action per state at ``0.5 - gap``, the rest at
    ``0.5 + gap``; the good action's position is random."""
    means = np.full((num_states, num_actions), 0.5 + gap)
    means[np.arange(num_states), rng.integers(num_actions, size=num_states)] = 0.5 - gap
    return means
