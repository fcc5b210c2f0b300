"""Binary-tree MDP with zero internal costs and random leaf costs.

States are numbered in heap order: the root is 0 and the children of ``s``
are ``2s + 1`` (action 0, go left) and ``2s + 2`` (action 1, go right).  A
tree of depth ``K`` has ``2**K - 1`` states, ``2**(K-1)`` leaves and horizon
``K``; the leaf cost is paid at the last step whatever the action.
"""
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError
from ..mdp import BERNOULLI, DETERMINISTIC, UNIFORM, CostModel, FiniteMdp
from ..policies import SimplexPolicy

LEFT, RIGHT = 0, 1


@dataclass(frozen=True)
class TreeSpec:
    depth: int
    leaf_means: tuple
    noise: str
    optimal_leaf: int

    @property
    def num_states(self):
        return 2 ** self.depth - 1

    @property
    def num_leaves(self):
        return 2 ** (self.depth - 1)

    @property
    def first_leaf(self):
        return self.num_leaves - 1

    def leaf_state(self, j):
        return self.first_leaf + j

    def is_leaf(self, s):
        return s >= self.first_leaf

    def level(self, s):
        return int(np.floor(np.log2(s + 1)))

    def leaf_range(self, s):
        """Leaves ``[lo, hi)`` below state ``s``."""
        lvl = self.level(s)
        span = 2 ** (self.depth - 1 - lvl)
        pos = s - (2 ** lvl - 1)
        return pos * span, (pos + 1) * span

    def path(self, j):
        """``[(state, action), ...]`` from the root to leaf ``j``; the final
        leaf step carries action ``LEFT``."""
        steps = []
        s = 0
        for lvl in range(self.depth - 1):
            bit = (j >> (self.depth - 2 - lvl)) & 1
            steps.append((s, bit))
            s = 2 * s + 1 + bit
        steps.append((s, LEFT))
        return steps

    def is_ancestor(self, s, j):
        lo, hi = self.leaf_range(s)
        return lo <= j < hi

    def direction(self, s, j):
        """Action at ``s`` leading towards leaf ``j`` (``s`` must be an ancestor)."""
        lo, hi = self.leaf_range(s)
        return LEFT if j < (lo + hi) // 2 else RIGHT

    def best_leaf_below(self, s):
        lo, hi = self.leaf_range(s)
        return lo + int(np.argmin(self.leaf_means[lo:hi]))

    def expert_actions(self):
        """Optimal deterministic action per state (ties go left)."""
        acts = np.zeros(self.num_states, dtype=int)
        for s in range(self.first_leaf):
            acts[s] = self.direction(s, self.best_leaf_below(s))
        return acts

    def leaf_policy(self, j):
        """Deterministic stationary policy reaching leaf ``j`` from the root."""
        acts = np.zeros(self.num_states, dtype=int)
        for s, a in self.path(j):
            acts[s] = a
        return acts


def make_binary_tree(depth, leaf_means, noise="bernoulli", halfwidth=0.1):
    """Depth-``K`` tree MDP; returns ``(FiniteMdp, TreeSpec)``.

    ``noise`` is ``"bernoulli"`` (default), ``"deterministic"`` or
    ``"uniform"`` (mean +/- halfwidth).
    """
    K = int(depth)
    if K < 1:
        raise ConfigurationError("tree depth must be at least 1")
    means = np.asarray(leaf_means, dtype=float)
    L = 2 ** (K - 1)
    if means.shape != (L,):
        raise ConfigurationError(f"depth {K} needs {L} leaf means, got {means.size}")
    if np.any(means < 0) or np.any(means > 1):
        raise ConfigurationError("leaf means must lie in [0, 1]")
    S = 2 ** K - 1
    P = np.zeros((S, 2, S))
    for s in range(L - 1):
        P[s, LEFT, 2 * s + 1] = 1.0
        P[s, RIGHT, 2 * s + 2] = 1.0
    for s in range(L - 1, S):
        P[s, :, s] = 1.0
    a = np.zeros((1, S, 2))
    a[0, L - 1:, :] = means[:, None]
    kind = np.zeros((1, S, 2), dtype=np.int8)
    b = None
    if noise == "bernoulli":
        kind[0, L - 1:, :] = BERNOULLI
    elif noise == "uniform":
        if np.any(means - halfwidth < 0) or np.any(means + halfwidth > 1):
            raise ConfigurationError("uniform leaf costs must stay in [0, 1]")
        kind[0, L - 1:, :] = UNIFORM
        b = a.copy()
        a[0, L - 1:, :] -= halfwidth
        b[0, L - 1:, :] += halfwidth
    elif noise != "deterministic":
        raise ConfigurationError(f"unknown leaf noise {noise!r}")
    else:
        kind[:] = DETERMINISTIC
    rho = np.zeros(S)
    rho[0] = 1.0
    mdp = FiniteMdp(P, CostModel(kind, a, b), rho, K, cost_bound=1.0)
    spec = TreeSpec(K, tuple(float(m) for m in means), noise, int(np.argmin(means)))
    return mdp, spec


def random_leaf_means(depth, rng, best=0.2, low=0.4, high=0.9):
    """One leaf at ``best`` (random position), the rest uniform in [low, high]."""
    L = 2 ** (depth - 1)
    means = rng.uniform(low, high, size=L)
    means[rng.integers(L)] = best
    return means


def tree_expert(tree):
    return SimplexPolicy.deterministic(tree.expert_actions(), 2, tree.depth)
