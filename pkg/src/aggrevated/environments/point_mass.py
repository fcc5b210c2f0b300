"""Double-integrator point mass with a finite-horizon LQR expert.

State ``(position, velocity)``, scalar force action, step cost
``s' Q s + r a^2`` (zero at the origin), deterministic linear dynamics and a
gaussian initial state.  The expert's cost-to-go is an exact quadratic form
``Q*_t(s, a) = [s; a]' M_t [s; a]`` obtained from the Riccati recursion.
"""
import numpy as np

from ..errors import ConfigurationError
from ..mdp import Trajectory


class ContinuousEnv:
    def __init__(self, A, B, Q, R, horizon, init_mean, init_cov):
        self.A = np.asarray(A, dtype=float)
        self.B = np.asarray(B, dtype=float)
        self.Q = np.asarray(Q, dtype=float)
        self.R = np.asarray(R, dtype=float)
        self.horizon = int(horizon)
        self.init_mean = np.asarray(init_mean, dtype=float)
        self.init_cov = np.asarray(init_cov, dtype=float)
        self.state_dim = self.A.shape[0]
        self.action_dim = self.B.shape[1]

    def step_cost(self, s, a):
        a = np.atleast_1d(a)
        return float(s @ self.Q @ s + a @ self.R @ a)

    def step(self, s, a):
        return self.A @ s + self.B @ np.atleast_1d(a)

    def sample_initial(self, rng):
        return rng.multivariate_normal(self.init_mean, self.init_cov)

    def rollout(self, policy, rng):
        states, actions, costs, dens = [], [], [], []
        s = self.sample_initial(rng)
        for t in range(self.horizon):
            a, p = policy.sample(s, t, rng)
            a = np.atleast_1d(np.asarray(a, dtype=float))
            states.append(s)
            actions.append(a)
            costs.append(self.step_cost(s, a))
            dens.append(p)
            s = self.step(s, a)
        return Trajectory(states, actions, np.array(costs), np.array(dens))


class LqrExpert:
    """Time-varying linear feedback ``a = -K_t s`` with exact Q-matrices."""

    def __init__(self, env):
        self.env = env
        H = env.horizon
        A, B, Q, R = env.A, env.B, env.Q, env.R
        n, m = env.state_dim, env.action_dim
        self.M = np.empty((H, n + m, n + m))
        self.P = np.empty((H + 1, n, n))
        self.gains = np.empty((H, m, n))
        P = np.zeros((n, n))
        self.P[H] = P
        for t in range(H - 1, -1, -1):
            M = np.block([[Q + A.T @ P @ A, A.T @ P @ B],
                          [B.T @ P @ A, R + B.T @ P @ B]])
            K = np.linalg.solve(M[n:, n:], M[n:, :n])
            P = M[:n, :n] - M[:n, n:] @ K
            P = 0.5 * (P + P.T)
            self.M[t], self.gains[t], self.P[t] = M, K, P

    def act(self, s, t):
        return -self.gains[t] @ s

    def sample(self, s, t, rng):
        return self.act(s, t), 1.0

    def q(self, s, t, a):
        z = np.concatenate([s, np.atleast_1d(a)])
        return float(z @ self.M[t] @ z)

    def v(self, s, t):
        return float(s @ self.P[t] @ s)


def make_point_mass(horizon, q_pos=1.0, q_vel=0.1, r=0.1, dt=0.1,
                    init_mean=(1.0, 0.0), init_std=(0.2, 0.2)):
    """Returns ``(ContinuousEnv, LqrExpert)``."""
    if int(horizon) < 2:
        raise ConfigurationError("point-mass horizon must be at least 2")
    Q = np.diag([q_pos, q_vel]).astype(float)
    R = np.array([[r]], dtype=float)
    if np.any(np.linalg.eigvalsh(Q) <= 0) or r <= 0:
        raise ConfigurationError("cost weights must be positive definite")
    A = np.array([[1.0, dt], [0.0, 1.0]])
    B = np.array([[0.0], [dt]])
    env = ContinuousEnv(A, B, Q, R, horizon, init_mean, np.diag(np.square(init_std)))
    return env, LqrExpert(env)


def linear_gaussian_surrogate(env, expert, family, theta, theta_rollin):
    """Exact imitation loss of a linear-gaussian policy on the point mass.

    States are rolled in by ``theta_rollin`` (gaussian state moments are
    propagated in closed form); actions come from ``theta``; the loss is
    ``(1/H) sum_t E[Q*_t(s, a)]``.
    """
    n = env.state_dim
    Wr, br, _ = family.unpack(np.asarray(theta_rollin, dtype=float))
    sr = family.sigma_min + np.exp(family.unpack(np.asarray(theta_rollin, dtype=float))[2])
    W, b, log_std = family.unpack(np.asarray(theta, dtype=float))
    sd = family.sigma_min + np.exp(log_std)
    closed = env.A + env.B @ Wr
    m, C = env.init_mean.copy(), env.init_cov.copy()
    total = 0.0
    for t in range(env.horizon):
        # joint moments of z = [s; W s + b]
        L = np.vstack([np.eye(n), W])
        mz = L @ m + np.concatenate([np.zeros(n), b])
        Cz = L @ C @ L.T
        Cz[n:, n:] += np.diag(sd ** 2)
        M = expert.M[t]
        total += np.trace(M @ Cz) + mz @ M @ mz
        m = closed @ m + env.B @ br
        C = closed @ C @ closed.T + env.B @ np.diag(sr ** 2) @ env.B.T
    return total / env.horizon


def linear_gaussian_cost(env, family, theta):
    """Exact expected total cost ``mu`` of a linear-gaussian policy."""
    W, b, log_std = family.unpack(np.asarray(theta, dtype=float))
    sd = family.sigma_min + np.exp(log_std)
    closed = env.A + env.B @ W
    m, C = env.init_mean.copy(), env.init_cov.copy()
    total = 0.0
    for _ in range(env.horizon):
        am = W @ m + b
        aC = W @ C @ W.T + np.diag(sd ** 2)
        total += np.trace(env.Q @ C) + m @ env.Q @ m + np.trace(env.R @ aC) + am @ env.R @ am
        m = closed @ m + env.B @ b
        C = closed @ C @ closed.T + env.B @ np.diag(sd ** 2) @ env.B.T
    return float(total)


def expert_cost(env, expert):
    """``E[V*_0(s0)]`` for the gaussian initial state."""
    P = expert.P[0]
    return float(np.trace(P @ env.init_cov) + env.init_mean @ P @ env.init_mean)
