"""Policy update rules.

* online gradient descent on a parameter vector;
* exponentiated gradient on simplex rows (closed form, plus a numerical
  KL-regularized minimizer used only to check it);
* natural gradient: damped conjugate gradient on a low-rank Fisher system
  and the KL step-size rule;
* follow-the-leader cost-sensitive classification and weighted majority over
  base tree policies.
"""
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.sparse.linalg import LinearOperator, cg

from .config import TOL
from .errors import (ConfigurationError, DataError, DegenerateDirectionError,
                     NumericError, OracleError)
from .policies import BasePolicyMixture


def ogd_step(theta, gradient, eta):
    theta = np.asarray(theta, dtype=float)
    gradient = np.asarray(gradient, dtype=float)
    if theta.shape != gradient.shape:
        raise ConfigurationError("parameter and gradient dimensions differ")
    if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(gradient)) and np.isfinite(eta)):
        raise NumericError("non-finite input to gradient step")
    if eta <= 0:
        raise ConfigurationError("step size must be positive")
    return theta - eta * gradient


# ---------------------------------------------------------------------------
# exponentiated gradient
# ---------------------------------------------------------------------------


@dataclass
class EgState:
    """Simplex rows ``(H, S, A)`` plus a per-state learning rate."""

    rows: np.ndarray
    rates: np.ndarray

    @classmethod
    def uniform(cls, num_states, num_actions, horizon=1, eta=1.0):
        return cls(np.full((horizon, num_states, num_actions), 1.0 / num_actions),
                   np.full(num_states, float(eta)))


def eg_weighted_costs(state_dist, q_star):
    """Visitation-weighted cost-to-go per state.

    ``Qt[s] = sum_t d_t(s) Q*_t(s) / (H dbar(s))``; rows of unvisited states
    come back as NaN and the returned mask marks the visited ones.
    """
    d = state_dist.per_step
    H = d.shape[0]
    dbar = state_dist.average
    visited = dbar > 0
    num = np.einsum("ts,tsa->sa", d, q_star)
    out = np.full(num.shape, np.nan)
    out[visited] = num[visited] / (H * dbar[visited, None])
    return out, visited


def eg_step_closed_form(row, eta, q_tilde):
    """``row[i] exp(-eta q[i])`` renormalized, with max-subtraction.

    Works on a single row or on a stack of rows (``eta`` broadcast per row).
    """
    row = np.asarray(row, dtype=float)
    q = np.asarray(q_tilde, dtype=float)
    if np.any(row.sum(axis=-1) <= 0):
        raise DataError("cannot update an all-zero row")
    if not np.all(np.isfinite(q)):
        raise NumericError("non-finite cost vector in EG step")
    eta = np.asarray(eta, dtype=float)
    if eta.ndim:
        eta = eta[..., None]
    z = -eta * q
    z = np.where(row > 0, z, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    w = row * np.exp(z)
    return w / w.sum(axis=-1, keepdims=True)


def eg_step_argmin_oracle(row, eta, q_tilde, tol=TOL.eg_argmin_residual):
    """Minimize ``x.q + KL(x || row) / eta`` over the simplex numerically.

    Independent of the closed form: BFGS on softmax logits over the support
    of ``row``; the result is accepted only when the projected first-order
    residual is below ``tol``.
    """
    row = np.asarray(row, dtype=float)
    q = np.asarray(q_tilde, dtype=float)
    support = np.flatnonzero(row > 0)
    if support.size == 0:
        raise DataError("cannot update an all-zero row")
    if eta <= 0:
        return row.copy()
    r, qs = row[support] / row[support].sum(), q[support]

    def unpack(z):
        z = z - z.max()
        x = np.exp(z)
        return x / x.sum()

    def objective(z):
        x = unpack(z)
        f = x @ qs + np.sum(x * (np.log(x) - np.log(r))) / eta
        # gradient in x, then through the softmax jacobian
        gx = qs + (np.log(x) - np.log(r) + 1.0) / eta
        return f, x * (gx - x @ gx)

    # log x carries ~eps relative error, amplified by 1/eta in the residual
    tol = max(tol, 64 * np.finfo(float).eps / eta)
    z0 = np.log(r)
    res = minimize(objective, z0, jac=True, method="BFGS", options={"gtol": 1e-14, "maxiter": 10000})
    x = unpack(res.x)
    # BFGS stalls around 1e-8; polish with equality-constrained Newton steps
    # in x (hessian diag(1 / (eta x)), multiplier from the sum constraint)
    for _ in range(50):
        gx = qs + (np.log(x) - np.log(r)) / eta
        residual = np.max(np.abs(gx - x @ gx))
        if residual <= tol:
            break
        dx = -eta * x * (gx - x @ gx)
        step = 1.0
        while np.any(x + step * dx <= 0):
            step *= 0.5
        x = x + step * dx
        x /= x.sum()
    gx = qs + (np.log(x) - np.log(r)) / eta
    residual = np.max(np.abs(gx - x @ gx))
    if residual > tol:
        raise OracleError(f"KL-regularized argmin did not converge (residual {residual:.2e})")
    out = np.zeros_like(row)
    out[support] = x
    return out


def eg_regret_bound_check(losses, mu):
    """Run EG on linear losses from the uniform point.

    Returns ``(regret, bound)`` where the bound is
    ``ln(d)/mu + (mu/2) sum_n sum_i w_n[i] y_n[i]^2``; the best fixed point
    of a linear loss is a vertex, so the comparator is exact.
    """
    Y = np.asarray(losses, dtype=float)
    N, d = Y.shape
    w = np.full(d, 1.0 / d)
    incurred, second = 0.0, 0.0
    for y in Y:
        incurred += w @ y
        second += w @ (y * y)
        w = eg_step_closed_form(w, mu, y)
    regret = incurred - Y.sum(axis=0).min()
    return float(regret), float(np.log(d) / mu + 0.5 * mu * second)


# ---------------------------------------------------------------------------
# natural gradient
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CgSettings:
    max_iterations: int = 50
    tolerance: float = TOL.cg_tolerance
    damping: float = TOL.damping
    kl_budget: float = 0.01

    def __post_init__(self):
        if self.tolerance <= 0 or self.kl_budget <= 0 or self.damping < 0 or self.max_iterations < 1:
            raise ConfigurationError("invalid conjugate-gradient settings")


@dataclass(frozen=True)
class CgResult:
    delta: np.ndarray
    residual: float
    iterations: int
    converged: bool


def cg_solve_low_rank(factor, g, settings=CgSettings()):
    """Solve ``(S S^T + lam I) delta = g`` with matrix-vector products only.

    Stopping at the iteration cap is a warning, not an error: a fixed
    iteration budget is a legitimate way to run natural gradient.
    """
    S = factor.matrix if hasattr(factor, "matrix") else np.asarray(factor, dtype=float)
    g = np.asarray(g, dtype=float)
    d = S.shape[0]
    if g.shape != (d,):
        raise ConfigurationError("gradient and Fisher factor dimensions differ")
    lam = settings.damping

    def matvec(x):
        x = np.ravel(x)
        y = S @ (S.T @ x) + lam * x
        if not np.all(np.isfinite(y)):
            raise NumericError("non-finite value inside conjugate gradient")
        return y

    if not np.any(g):
        return CgResult(np.zeros(d), 0.0, 0, True)
    op = LinearOperator((d, d), matvec=matvec, dtype=float)
    count = [0]

    def tick(_):
        count[0] += 1

    delta, info = cg(op, g, rtol=0.0, atol=settings.tolerance,
                     maxiter=settings.max_iterations, callback=tick)
    residual = float(np.linalg.norm(matvec(delta) - g))
    converged = info == 0 or residual <= settings.tolerance
    if not converged:
        warnings.warn(f"conjugate gradient stopped at residual {residual:.2e}", RuntimeWarning, stacklevel=2)
    return CgResult(delta, residual, count[0], converged)


def natural_step_size(kl_budget, g, delta):
    """``sqrt(kl_budget / (g . delta))``."""
    gd = float(np.dot(g, delta))
    if not gd > 0:
        raise DegenerateDirectionError(f"g . delta = {gd:.3e} is not a descent direction")
    if kl_budget <= 0:
        raise ConfigurationError("KL budget must be positive")
    return float(np.sqrt(kl_budget / gd))


# ---------------------------------------------------------------------------
# tree learners
# ---------------------------------------------------------------------------


@dataclass
class AggregatedDataset:
    """Append-only ``(state, cost-to-go vector)`` records with running sums."""

    num_actions: int = 2
    records: list = field(default_factory=list)
    sums: dict = field(default_factory=dict)

    def add(self, state, costs):
        costs = np.array(costs, dtype=float)
        self.records.append((state, costs))
        if state in self.sums:
            self.sums[state] = self.sums[state] + costs
        else:
            self.sums[state] = costs

    def __len__(self):
        return len(self.records)


def ftl_cost_sensitive(dataset, tree):
    """Per-state action with the least summed cost; unseen states go left
    and ties go to the lower action index."""
    if len(dataset) == 0:
        raise DataError("follow-the-leader needs at least one record")
    acts = np.zeros(tree.num_states, dtype=int)
    for s, total in dataset.sums.items():
        acts[s] = int(np.argmin(total))
    return acts


def base_policy_actions(tree):
    """``(L, S)`` action of every base policy at every state.

    Base policy ``j`` heads for leaf ``j``; off its own path it behaves like
    the expert, so any base policy costs at least as much as the expert.
    """
    expert = tree.expert_actions()
    acts = np.tile(expert, (tree.num_leaves, 1))
    for j in range(tree.num_leaves):
        for s, a in tree.path(j):
            acts[j, s] = a
    return acts


def weighted_majority_losses(states, base_actions, oracle, rng, horizon):
    """``q[j] = sum_{s in tau} Qt(s, pi^j(s)) / H`` with one oracle query per
    distinct visited ``(state, action)`` pair."""
    q = np.zeros(base_actions.shape[0])
    for t, s in enumerate(states):
        col = base_actions[:, s]
        for a in np.unique(col):
            q[col == a] += oracle.query_q(s, t, a, rng)
    return q / horizon


def weighted_majority_step(mix, trajectory, oracle, mu, tree, rng, base_actions=None):
    """Returns the updated mixture and the loss vector used."""
    if mu <= 0:
        raise ConfigurationError("step size must be positive")
    if base_actions is None:
        base_actions = base_policy_actions(tree)
    q = weighted_majority_losses(trajectory.states, base_actions, oracle, rng, tree.depth)
    w = eg_step_closed_form(mix.weights, mu, q)
    w = w / w.sum()
    return BasePolicyMixture(w), q
