"""Policy representations with exact score functions.

Two kinds of policy live here.  ``SimplexPolicy`` is a raw table of action
distributions indexed by ``(t, s)``; it is what the exponentiated-gradient
and follow-the-leader learners manipulate directly.  ``DifferentiablePolicy``
wraps a flat parameter vector together with a family (tabular-softmax,
linear-softmax, mlp-softmax, gaussian) and a featurizer that turns
environment states into observations.

Time indices are 0-based throughout (``t = 0 .. H-1``).
"""
import struct

import numpy as np

from .config import TOL
from .errors import ConfigurationError, DataError, NumericError, PolicyError


# ---------------------------------------------------------------------------
# simplex tables
# ---------------------------------------------------------------------------


def _check_rows(table, tol=TOL.row_sum):
    if np.any(table < 0) or not np.all(np.isfinite(table)):
        raise PolicyError("policy table has negative or non-finite entries")
    dev = np.abs(table.sum(axis=-1) - 1.0)
    if np.any(dev > tol):
        raise PolicyError(f"policy rows must sum to 1 (max deviation {dev.max():.3e})")


class SimplexPolicy:
    """Per-(t, s) action distributions, shape ``(H, S, A)``.

    Stationary policies share one ``(S, A)`` block across all steps through a
    read-only broadcast view, so there is a single code path for both cases.
    """

    def __init__(self, table, validate=True):
        table = np.asarray(table, dtype=float)
        if table.ndim != 3:
            raise ConfigurationError("SimplexPolicy table must have shape (H, S, A)")
        if validate:
            _check_rows(table)
        if table.flags.writeable:
            table = table.copy()
            table.flags.writeable = False
        self.table = table

    @classmethod
    def stationary(cls, rows, horizon):
        rows = np.array(rows, dtype=float)
        _check_rows(rows)
        rows.flags.writeable = False
        return cls(np.broadcast_to(rows, (horizon,) + rows.shape), validate=False)

    @classmethod
    def uniform(cls, num_states, num_actions, horizon):
        return cls.stationary(np.full((num_states, num_actions), 1.0 / num_actions), horizon)

    @classmethod
    def deterministic(cls, actions, num_actions, horizon=None):
        """One-hot policy from an action array of shape ``(S,)`` or ``(H, S)``."""
        actions = np.asarray(actions, dtype=int)
        if actions.ndim == 1:
            rows = np.eye(num_actions)[actions]
            return cls.stationary(rows, horizon)
        return cls(np.eye(num_actions)[actions])

    @property
    def horizon(self):
        return self.table.shape[0]

    @property
    def num_states(self):
        return self.table.shape[1]

    @property
    def num_actions(self):
        return self.table.shape[2]

    @property
    def is_stationary(self):
        return self.table.strides[0] == 0 or self.horizon == 1

    def action_probs(self, state, t):
        return self.table[t, state]

    def as_simplex(self, mdp=None):
        return self

    def __repr__(self):
        return f"SimplexPolicy(H={self.horizon}, S={self.num_states}, A={self.num_actions})"


# ---------------------------------------------------------------------------
# featurizers
# ---------------------------------------------------------------------------


class StateIndex:
    """Tabular observation: the state id itself (shared over time)."""

    def __init__(self, num_states):
        self.num_obs = num_states

    def __call__(self, state, t):
        return int(state)

    def table(self, num_states, horizon):
        return np.broadcast_to(np.arange(num_states), (horizon, num_states))


class StateTimeIndex:
    """Tabular observation over (t, s) pairs: a non-stationary table."""

    def __init__(self, num_states, horizon):
        self.num_states = num_states
        self.num_obs = num_states * horizon

    def __call__(self, state, t):
        return int(t) * self.num_states + int(state)

    def table(self, num_states, horizon):
        return np.arange(horizon)[:, None] * num_states + np.arange(num_states)[None, :]


class OneHotState:
    """One-hot state indicator, optionally concatenated with a one-hot step."""

    def __init__(self, num_states, horizon=None):
        self.num_states = num_states
        self.horizon = horizon
        self.dim = num_states + (horizon or 0)

    def __call__(self, state, t):
        x = np.zeros(self.dim)
        x[int(state)] = 1.0
        if self.horizon:
            x[self.num_states + int(t)] = 1.0
        return x

    def table(self, num_states, horizon):
        out = np.zeros((horizon, num_states, self.dim))
        out[:, np.arange(num_states), np.arange(num_states)] = 1.0
        if self.horizon:
            out[np.arange(horizon), :, num_states + np.arange(horizon)] = 1.0
        return out


class Identity:
    """Continuous states used as-is (optionally with the step appended)."""

    def __init__(self, dim):
        self.dim = dim

    def __call__(self, state, t):
        return np.asarray(state, dtype=float)


# ---------------------------------------------------------------------------
# families
# ---------------------------------------------------------------------------


def _softmax(logits, mask=None):
    z = np.asarray(logits, dtype=float)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if not mask.any(axis=-1).all():
            raise PolicyError("no legal action available")
        z = np.where(mask, z, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class TabularSoftmax:
    tag = "tabular-softmax"
    discrete = True

    def __init__(self, num_obs, num_actions):
        self.num_obs = num_obs
        self.num_actions = num_actions
        self.dim = num_obs * num_actions

    def init(self, rng):
        return np.zeros(self.dim)

    def logits(self, theta, x):
        A = self.num_actions
        return theta[int(x) * A:(int(x) + 1) * A]

    def logits_batch(self, theta, xs):
        return theta.reshape(self.num_obs, self.num_actions)[np.asarray(xs, dtype=int)]

    def logits_vjp(self, theta, x, dlogits):
        g = np.zeros(self.dim)
        A = self.num_actions
        g[int(x) * A:(int(x) + 1) * A] = dlogits
        return g

    def logits_vjp_batch(self, theta, xs, dlogits):
        g = np.zeros((self.num_obs, self.num_actions))
        np.add.at(g, np.asarray(xs, dtype=int), dlogits)
        return g.ravel()


class LinearSoftmax:
    tag = "linear-softmax"
    discrete = True

    def __init__(self, num_features, num_actions):
        self.num_features = num_features
        self.num_actions = num_actions
        self.dim = num_actions * num_features + num_actions

    def init(self, rng):
        return np.zeros(self.dim)

    def _unpack(self, theta):
        F, A = self.num_features, self.num_actions
        return theta[:A * F].reshape(A, F), theta[A * F:]

    def logits(self, theta, x):
        W, b = self._unpack(theta)
        return W @ x + b

    def logits_batch(self, theta, xs):
        W, b = self._unpack(theta)
        return np.asarray(xs) @ W.T + b

    def logits_vjp(self, theta, x, dlogits):
        return np.concatenate([np.outer(dlogits, x).ravel(), dlogits])

    def logits_vjp_batch(self, theta, xs, dlogits):
        return np.concatenate([(dlogits.T @ np.asarray(xs)).ravel(), dlogits.sum(axis=0)])


class MlpSoftmax:
    """One hidden ReLU layer followed by a softmax head."""

    tag = "mlp-softmax"
    discrete = True

    def __init__(self, num_features, num_actions, hidden=16):
        self.num_features = num_features
        self.num_actions = num_actions
        self.hidden = hidden
        self.dim = hidden * num_features + hidden + num_actions * hidden + num_actions

    def init(self, rng):
        F, h, A = self.num_features, self.hidden, self.num_actions
        w1 = rng.uniform(-1, 1, size=(h, F)) / np.sqrt(F)
        b1 = rng.uniform(-1, 1, size=h) / np.sqrt(F)
        w2 = rng.uniform(-1, 1, size=(A, h)) / np.sqrt(h)
        b2 = rng.uniform(-1, 1, size=A) / np.sqrt(h)
        return np.concatenate([w1.ravel(), b1, w2.ravel(), b2])

    def _unpack(self, theta):
        F, h, A = self.num_features, self.hidden, self.num_actions
        i = 0
        w1 = theta[i:i + h * F].reshape(h, F); i += h * F
        b1 = theta[i:i + h]; i += h
        w2 = theta[i:i + A * h].reshape(A, h); i += A * h
        b2 = theta[i:i + A]
        return w1, b1, w2, b2

    def logits(self, theta, x):
        w1, b1, w2, b2 = self._unpack(theta)
        return w2 @ np.maximum(w1 @ x + b1, 0.0) + b2

    def logits_batch(self, theta, xs):
        w1, b1, w2, b2 = self._unpack(theta)
        return np.maximum(np.asarray(xs) @ w1.T + b1, 0.0) @ w2.T + b2

    def logits_vjp(self, theta, x, dlogits):
        w1, b1, w2, b2 = self._unpack(theta)
        pre = w1 @ x + b1
        h = np.maximum(pre, 0.0)
        dh = (w2.T @ dlogits) * (pre > 0)
        return np.concatenate([np.outer(dh, x).ravel(), dh, np.outer(dlogits, h).ravel(), dlogits])

    def logits_vjp_batch(self, theta, xs, dlogits):
        w1, b1, w2, b2 = self._unpack(theta)
        xs = np.asarray(xs)
        pre = xs @ w1.T + b1
        h = np.maximum(pre, 0.0)
        dh = (dlogits @ w2) * (pre > 0)
        return np.concatenate([(dh.T @ xs).ravel(), dh.sum(0), (dlogits.T @ h).ravel(), dlogits.sum(0)])


class Gaussian:
    """Linear-mean gaussian with a state-independent learnable log-std.

    ``std = sigma_min + exp(log_std)`` keeps the density finite and the
    parametrization smooth.
    """

    tag = "gaussian"
    discrete = False

    def __init__(self, num_features, action_dim=1, sigma_init=1.0, sigma_min=TOL.sigma_min):
        self.num_features = num_features
        self.action_dim = action_dim
        self.sigma_init = sigma_init
        self.sigma_min = sigma_min
        self.dim = action_dim * num_features + 2 * action_dim

    def init(self, rng):
        d = self.action_dim
        log_std = np.full(d, np.log(max(self.sigma_init - self.sigma_min, 1e-12)))
        return np.concatenate([np.zeros(d * self.num_features), np.zeros(d), log_std])

    def unpack(self, theta):
        F, d = self.num_features, self.action_dim
        W = theta[:d * F].reshape(d, F)
        b = theta[d * F:d * F + d]
        log_std = theta[d * F + d:]
        return W, b, log_std

    def mean_std(self, theta, x):
        W, b, log_std = self.unpack(theta)
        return W @ x + b, self.sigma_min + np.exp(log_std)

    def log_prob(self, theta, x, a):
        mean, std = self.mean_std(theta, x)
        z = (np.atleast_1d(a) - mean) / std
        return float(np.sum(-0.5 * z * z - np.log(std) - 0.5 * np.log(2 * np.pi)))

    def grad_log_prob(self, theta, x, a):
        W, b, log_std = self.unpack(theta)
        mean = W @ x + b
        e = np.exp(log_std)
        std = self.sigma_min + e
        diff = np.atleast_1d(a) - mean
        dmean = diff / std ** 2
        dstd = diff ** 2 / std ** 3 - 1.0 / std
        return np.concatenate([np.outer(dmean, x).ravel(), dmean, dstd * e])


FAMILIES = {cls.tag: cls for cls in (TabularSoftmax, LinearSoftmax, MlpSoftmax, Gaussian)}


# ---------------------------------------------------------------------------
# differentiable policies
# ---------------------------------------------------------------------------


class DifferentiablePolicy:
    """A parameter vector bound to a family and a featurizer.

    ``masker(state, t)``, when given, returns the boolean vector of legal
    actions; illegal actions receive probability exactly zero.
    """

    def __init__(self, family, theta, featurizer=None, masker=None, seed=0):
        theta = np.array(theta, dtype=float)
        if theta.shape != (family.dim,):
            raise ConfigurationError(f"theta has shape {theta.shape}, family expects ({family.dim},)")
        theta.flags.writeable = False
        self.family = family
        self.theta = theta
        self.featurizer = featurizer
        self.masker = masker
        self.seed = seed

    @classmethod
    def create(cls, family, featurizer=None, masker=None, seed=0):
        from .streams import INIT, substream
        return cls(family, family.init(substream(seed, INIT)), featurizer, masker, seed)

    @property
    def dim(self):
        return self.family.dim

    @property
    def discrete(self):
        return self.family.discrete

    def with_theta(self, theta):
        return DifferentiablePolicy(self.family, theta, self.featurizer, self.masker, self.seed)

    def _check_finite(self):
        if not np.all(np.isfinite(self.theta)):
            raise NumericError("policy parameters are not finite")

    # -- observation-level API ---------------------------------------------

    def action_distribution(self, obs, mask=None):
        """Probability vector (discrete) or ``(mean, std)`` (gaussian)."""
        self._check_finite()
        if not self.discrete:
            return self.family.mean_std(self.theta, obs)
        return _softmax(self.family.logits(self.theta, obs), mask)

    def log_prob(self, obs, action, mask=None):
        if not self.discrete:
            return self.family.log_prob(self.theta, obs, action)
        p = self.action_distribution(obs, mask)[int(action)]
        if p <= 0:
            raise NumericError(f"action {action} has zero probability")
        return float(np.log(p))

    def log_policy_gradient(self, obs, action, mask=None):
        """Exact gradient of ``log pi(action | obs; theta)``."""
        self._check_finite()
        if not self.discrete:
            return self.family.grad_log_prob(self.theta, obs, action)
        p = _softmax(self.family.logits(self.theta, obs), mask)
        if p[int(action)] <= 0:
            raise NumericError(f"action {action} has zero probability")
        dlogits = -p
        dlogits[int(action)] += 1.0
        return self.family.logits_vjp(self.theta, obs, dlogits)

    def grad_expected(self, obs, values, mask=None):
        """``sum_a grad pi(a | obs) * values[a]`` for discrete families."""
        p = _softmax(self.family.logits(self.theta, obs), mask)
        v = np.where(p > 0, np.asarray(values, dtype=float), 0.0)
        dlogits = p * (v - p @ v)
        return self.family.logits_vjp(self.theta, obs, dlogits)

    # -- state-level API (used by rollouts) --------------------------------

    def features(self, state, t):
        obs = self.featurizer(state, t) if self.featurizer is not None else state
        mask = self.masker(state, t) if self.masker is not None else None
        return obs, mask

    def action_probs(self, state, t):
        obs, mask = self.features(state, t)
        return self.action_distribution(obs, mask)

    def sample(self, state, t, rng):
        """Draw an action; returns ``(action, probability or density)``."""
        obs, mask = self.features(state, t)
        if self.discrete:
            p = self.action_distribution(obs, mask)
            a = int(rng.choice(len(p), p=p))
            return a, float(p[a])
        mean, std = self.action_distribution(obs)
        a = mean + std * rng.standard_normal(mean.shape)
        return a, float(np.exp(self.family.log_prob(self.theta, obs, a)))

    def as_simplex(self, mdp):
        """Evaluate the policy at every (t, s) of a finite MDP."""
        if not self.discrete:
            raise ConfigurationError("only discrete policies have simplex tables")
        H, S = mdp.horizon, mdp.num_states
        obs = self.featurizer.table(S, H) if self.featurizer is not None else np.broadcast_to(np.arange(S), (H, S))
        self._check_finite()
        flat = obs.reshape((H * S,) + obs.shape[2:])
        logits = self.family.logits_batch(self.theta, flat)
        return SimplexPolicy(_softmax(logits).reshape(H, S, -1), validate=False)

    def __repr__(self):
        return f"DifferentiablePolicy({self.family.tag}, d={self.dim})"


def trajectory_log_gradient(policy, trajectory):
    """``sum_t grad log pi(a_t | s_t)`` along one trajectory."""
    g = np.zeros(policy.dim)
    for t, (s, a) in enumerate(zip(trajectory.states, trajectory.actions)):
        obs, mask = policy.features(s, t)
        g += policy.log_policy_gradient(obs, a, mask)
    return g


class MixedPolicy:
    """Per-step mixture: the expert acts with probability ``alpha``."""

    def __init__(self, expert, learner, alpha):
        if not 0.0 <= alpha <= 1.0:
            raise ConfigurationError(f"mixing rate must lie in [0, 1], got {alpha}")
        self.expert = expert
        self.learner = learner
        self.alpha = float(alpha)

    def action_probs(self, state, t):
        if self.alpha == 0.0:
            return self.learner.action_probs(state, t)
        if self.alpha == 1.0:
            return self.expert.action_probs(state, t)
        return self.alpha * self.expert.action_probs(state, t) + (1 - self.alpha) * self.learner.action_probs(state, t)

    def sample(self, state, t, rng):
        p = self.action_probs(state, t)
        a = int(rng.choice(len(p), p=p))
        return a, float(p[a])

    def as_simplex(self, mdp):
        e = self.expert.as_simplex(mdp).table
        lr = self.learner.as_simplex(mdp).table
        return SimplexPolicy(self.alpha * e + (1 - self.alpha) * lr, validate=False)


def mix_policies(expert, learner, alpha):
    """``alpha * expert + (1 - alpha) * learner`` acting independently per step."""
    if not 0.0 <= alpha <= 1.0:
        raise ConfigurationError(f"mixing rate must lie in [0, 1], got {alpha}")
    if isinstance(expert, SimplexPolicy) and isinstance(learner, SimplexPolicy):
        if expert.table.shape != learner.table.shape:
            raise ConfigurationError("expert and learner tables differ in shape")
        return SimplexPolicy(alpha * expert.table + (1 - alpha) * learner.table, validate=False)
    return MixedPolicy(expert, learner, alpha)


# ---------------------------------------------------------------------------
# mixtures of deterministic tree policies
# ---------------------------------------------------------------------------


class BasePolicyMixture:
    """Weights over the root-to-leaf base policies of a binary tree."""

    def __init__(self, weights):
        w = np.array(weights, dtype=float)
        if np.any(w < 0) or abs(w.sum() - 1.0) > TOL.row_sum:
            raise ConfigurationError("mixture weights must lie on the simplex")
        w.flags.writeable = False
        self.weights = w

    @classmethod
    def uniform(cls, num_leaves):
        return cls(np.full(num_leaves, 1.0 / num_leaves))


def mixture_as_simplex(mix, tree):
    """Per-state policy that reproduces "pick leaf i with probability w_i".

    At an internal node the probability of going left is the weight of the
    leaves below the left child divided by the weight below the node.  Nodes
    carrying no weight are unreachable and get the uniform row.
    """
    K = tree.depth
    w = mix.weights
    if w.shape != (tree.num_leaves,):
        raise ConfigurationError("mixture size does not match the tree")
    S = tree.num_states
    rows = np.full((S, 2), 0.5)
    cum = np.concatenate([[0.0], np.cumsum(w)])
    for s in range(tree.num_leaves - 1):
        level = int(np.floor(np.log2(s + 1)))
        pos = s - (2 ** level - 1)
        span = 2 ** (K - 1 - level)
        lo, mid, hi = pos * span, pos * span + span // 2, (pos + 1) * span
        total = cum[hi] - cum[lo]
        if total > 0:
            left = (cum[mid] - cum[lo]) / total
            rows[s] = (left, 1.0 - left)
    return SimplexPolicy.stationary(np.clip(rows, 0.0, 1.0), K)


# ---------------------------------------------------------------------------
# parameter files
# ---------------------------------------------------------------------------

_MAGIC = b"AGVDPAR1"
_HEADER = struct.Struct("<8s16sQq")


def save_params(path, policy):
    """Write ``theta`` as: magic, family tag, dimension, seed, float64 LE data."""
    tag = policy.family.tag.encode("ascii")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, tag, policy.dim, int(policy.seed)))
        fh.write(np.asarray(policy.theta, dtype="<f8").tobytes())


def load_params(path):
    """Returns ``(family_tag, theta, seed)``."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise DataError("parameter file is truncated")
    magic, tag, dim, seed = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise DataError("not a parameter file")
    theta = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if theta.shape != (dim,):
        raise DataError(f"header declares {dim} parameters, file holds {theta.size}")
    return tag.rstrip(b"\0").decode("ascii"), theta.astype(float), seed
