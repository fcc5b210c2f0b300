import itertools

import numpy as np
import pytest

from aggrevated.environments.tree import make_binary_tree
from aggrevated.policies import SimplexPolicy


def enumerate_paths(mdp, policy):
    """Yield ``(probability, states, actions)`` for every length-H path."""
    table = policy.as_simplex(mdp).table
    H, S, A = mdp.horizon, mdp.num_states, mdp.num_actions
    for states in itertools.product(range(S), repeat=H):
        p0 = mdp.initial[states[0]]
        if p0 == 0:
            continue
        for actions in itertools.product(range(A), repeat=H):
            p = p0
            for t in range(H):
                p *= table[t, states[t], actions[t]]
                if t + 1 < H:
                    p *= mdp.transition(t)[states[t], actions[t], states[t + 1]]
                if p == 0:
                    break
            if p > 0:
                yield p, states, actions


def random_simplex(rng, H, S, A):
    return SimplexPolicy(rng.dirichlet(np.ones(A), size=(H, S)))


def central_difference(f, x, h=1e-5):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        out[k] = (f(x + e) - f(x - e)) / (2 * h)
    return out


def rel_err(a, b):
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / max(np.linalg.norm(b), 1e-12))


@pytest.fixture
def small_tree():
    """Depth-2 tree with deterministic leaf costs 0.2 (left) and 0.8 (right)."""
    return make_binary_tree(2, (0.2, 0.8), noise="deterministic")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
