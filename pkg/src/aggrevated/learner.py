"""Interactive imitation learning loop, RL baselines and regret bookkeeping.

``run_aggrevated`` executes the mix / roll-in / query / update loop for
every supported combination of environment and update rule.  Each episode
logs the exact cost ``mu(pi_n)`` of the learner's current policy (not the
roll-in mixture), so regret curves carry no evaluation noise on finite
MDPs.
"""
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np
from scipy import sparse

from .environments import parsing
from .environments.point_mass import expert_cost, linear_gaussian_cost, make_point_mass
from .environments.tabular import hard_bandit_means, make_bandit_rows, make_random_tabular
from .environments.tree import make_binary_tree, random_leaf_means, tree_expert
from .errors import ConfigurationError, DegenerateDirectionError, FitError, NumericError
from .estimators import (sampled_gradient_continuous, sampled_gradient_discrete,
                         tabular_score_gradient)
from .mdp import FiniteMdp, as_table, expected_cost, optimal_values, rollout, sample_paths
from .optimizers import (AggregatedDataset, CgSettings, base_policy_actions, cg_solve_low_rank,
                         eg_step_closed_form, ftl_cost_sensitive, natural_step_size, ogd_step,
                         weighted_majority_losses)
from .oracles import ExpertOracle
from .policies import (FAMILIES, BasePolicyMixture, DifferentiablePolicy, Gaussian, Identity,
                       LinearSoftmax, MixedPolicy, MlpSoftmax, OneHotState, SimplexPolicy,
                       StateIndex, StateTimeIndex, TabularSoftmax, mix_policies)
from .streams import ENV, ORACLE, ROLLOUT, substream

ENV_KINDS = ("tree", "tabular", "bandit", "point-mass", "parse")
UPDATES = ("ogd", "eg", "natural", "ftl", "weighted-majority", "reinforce", "ucb")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass
class EnvConfig:
    kind: str = "tree"
    depth: int = 2
    leaf_means: tuple = None          # None: random, one leaf at best_leaf_cost
    best_leaf_cost: float = 0.2
    noise: str = "bernoulli"
    expert: str = "optimal"           # or "right": a deliberately poor tree expert
    num_states: int = 8
    num_actions: int = 2
    horizon: int = 5
    gap: float = 0.1
    num_sentences: int = 200
    validation_sentences: int = 50
    max_len: int = 12
    vocab: int = 30


@dataclass
class PolicyConfig:
    family: str = "simplex"           # or a differentiable family tag
    stationary: bool = True           # simplex rows shared across steps
    hidden: int = 16
    sigma_init: float = 1.0


@dataclass
class LearnerConfig:
    update: str = "eg"
    estimator: str = "discrete"       # or "continuous" (score function)
    use_advantage: bool = False
    eta0: float = 1.0
    eta_schedule: str = "inv-sqrt"    # or "constant"
    eg_weighting: str = "normalized"  # or "visitation"
    alpha0: float = 0.0
    alpha_decay: float = 0.9
    kl_budget: float = 0.01
    cg_iterations: int = 50
    damping: float = 1e-3


@dataclass
class OracleConfig:
    mode: str = "exact"
    rollouts: int = 1
    value_mode: str = "min"


@dataclass
class RunSettings:
    episodes: int = 20
    rollouts: int = 1
    seed: int = 0
    workers: int = 1
    timing: bool = False


@dataclass
class RunConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    run: RunSettings = field(default_factory=RunSettings)

    SECTIONS = ("env", "policy", "learner", "oracle", "run")

    def validate(self):
        e, lr, r = self.env, self.learner, self.run
        if e.kind not in ENV_KINDS:
            raise ConfigurationError(f"unknown environment kind {e.kind!r}")
        if lr.update not in UPDATES:
            raise ConfigurationError(f"unknown update rule {lr.update!r}")
        if r.episodes < 1 or r.rollouts < 1 or r.workers < 1:
            raise ConfigurationError("episodes, rollouts and workers must be at least 1")
        if not (0 <= lr.alpha0 <= 1 and 0 <= lr.alpha_decay <= 1):
            raise ConfigurationError("mixing schedule must stay in [0, 1] and be nonincreasing")
        if lr.eta_schedule not in ("inv-sqrt", "constant"):
            raise ConfigurationError(f"unknown step-size schedule {lr.eta_schedule!r}")
        if lr.eg_weighting not in ("normalized", "visitation"):
            raise ConfigurationError(f"unknown EG weighting {lr.eg_weighting!r}")
        if lr.estimator not in ("discrete", "continuous"):
            raise ConfigurationError(f"unknown estimator {lr.estimator!r}")
        if lr.eta0 <= 0:
            raise ConfigurationError("eta0 must be positive")
        simplex = self.policy.family == "simplex"
        if lr.update in ("eg",) and not simplex:
            raise ConfigurationError("exponentiated gradient needs the simplex policy family")
        if lr.update in ("ogd", "natural", "reinforce") and self.policy.family not in FAMILIES:
            raise ConfigurationError(f"{lr.update} needs a differentiable policy family")
        if lr.update in ("ftl", "weighted-majority", "ucb") and e.kind != "tree":
            raise ConfigurationError(f"{lr.update} is defined on tree environments only")
        if e.kind == "point-mass" and (self.policy.family != "gaussian" or lr.estimator != "continuous"):
            if lr.update not in ("reinforce",):
                raise ConfigurationError("point-mass runs need a gaussian policy and the continuous estimator")
        if self.policy.family == "gaussian" and lr.alpha0 > 0:
            raise ConfigurationError("mixing with the expert is only supported for discrete actions")
        if lr.estimator == "discrete" and self.policy.family == "gaussian":
            raise ConfigurationError("the discrete estimator needs a discrete policy")
        return self

    def items(self):
        """``(section.key, value)`` pairs with every default materialized."""
        for name in self.SECTIONS:
            section = getattr(self, name)
            for f in fields(section):
                yield f"{name}.{f.name}", getattr(section, f.name)

    def with_value(self, key, value):
        section, name = key.split(".", 1)
        return replace(self, **{section: replace(getattr(self, section), **{name: value})})


def mixing_rate(config, n):
    """``alpha_n = alpha0 * beta**n`` for episodes ``n = 1, 2, ...``."""
    return config.learner.alpha0 * config.learner.alpha_decay ** n


def step_size(config, n):
    lr = config.learner
    return lr.eta0 if lr.eta_schedule == "constant" else lr.eta0 / np.sqrt(n)


# ---------------------------------------------------------------------------
# regret bookkeeping
# ---------------------------------------------------------------------------


@dataclass
class RegretCurve:
    mu_pi: np.ndarray
    mu_star: np.ndarray
    inst_regret: np.ndarray
    cum_regret: np.ndarray
    wall_ms: np.ndarray

    @classmethod
    def from_costs(cls, mu_pi, mu_star, wall_ms=None):
        mu_pi = np.asarray(mu_pi, dtype=float)
        mu_star = np.broadcast_to(np.asarray(mu_star, dtype=float), mu_pi.shape).copy()
        inst = mu_pi - mu_star
        wall = np.zeros_like(mu_pi) if wall_ms is None else np.asarray(wall_ms, dtype=float)
        return cls(mu_pi, mu_star, inst, cumulative_regret(inst), wall)

    def __len__(self):
        return len(self.mu_pi)

    @property
    def final_regret(self):
        return float(self.cum_regret[-1])


def cumulative_regret(inst_regret):
    """``R_n = R_{n-1} + r_n`` with ``R_0 = 0``; accepts a curve too."""
    if isinstance(inst_regret, RegretCurve):
        inst_regret = inst_regret.mu_pi - inst_regret.mu_star
    return np.cumsum(np.asarray(inst_regret, dtype=float))


def slope_fit(series, window=None):
    """Least-squares slope of ``log R_n`` against ``log n`` (``n`` from 1).

    ``window = (lo, hi)`` selects episodes ``lo..hi`` inclusive.
    """
    y = np.asarray(series, dtype=float)
    n = np.arange(1, y.size + 1)
    if window is not None:
        lo, hi = window
        if not 1 <= lo < hi <= y.size:
            raise FitError(f"window {window} outside 1..{y.size}")
        y, n = y[lo - 1:hi], n[lo - 1:hi]
    return fit_power(n, y)


def fit_power(x, y):
    """Exponent ``b`` of the least-squares fit ``log y = a + b log x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise FitError("need at least two points to fit a slope")
    if np.any(y <= 0) or np.any(x <= 0):
        raise FitError("log-log fit needs positive values")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


# ---------------------------------------------------------------------------
# environment assembly
# ---------------------------------------------------------------------------


@dataclass
class Setup:
    env: object
    expert: object
    oracle: ExpertOracle
    mu_star: float
    tree: object = None
    validation: list = None


def build_setup(config):
    e, o, seed = config.env, config.oracle, config.run.seed
    tree = validation = None
    if e.kind == "tree":
        means = e.leaf_means
        if means is None:
            means = random_leaf_means(e.depth, substream(seed, ENV), best=e.best_leaf_cost)
        env, tree = make_binary_tree(e.depth, means, noise=e.noise)
        if e.expert == "optimal":
            expert = tree_expert(tree)
        elif e.expert == "right":
            expert = SimplexPolicy.deterministic(np.ones(tree.num_states, dtype=int), 2, tree.depth)
        else:
            raise ConfigurationError(f"unknown tree expert {e.expert!r}")
    elif e.kind == "tabular":
        env = make_random_tabular(e.num_states, e.num_actions, e.horizon, seed)
        expert = optimal_values(env)[1]
    elif e.kind == "bandit":
        means = hard_bandit_means(e.num_states, e.num_actions, e.gap, substream(seed, ENV))
        env = make_bandit_rows(e.num_states, e.num_actions, means)
        expert = optimal_values(env)[1]
    elif e.kind == "point-mass":
        env, expert = make_point_mass(e.horizon)
        return Setup(env, expert, ExpertOracle.analytic(env, expert), expert_cost(env, expert))
    else:
        corpus = parsing.make_parse_corpus(e.num_sentences + e.validation_sentences, e.max_len, e.vocab, seed)
        env = parsing.ParseEnv(corpus[:e.num_sentences])
        validation = corpus[e.num_sentences:]
        return Setup(env, parsing.OracleParsePolicy(), ExpertOracle.clairvoyant_parse(env), 0.0,
                     validation=validation)

    given = None if e.expert == "optimal" else expert
    value_mode = o.value_mode if given is None else "expert"
    if o.mode == "exact":
        oracle = ExpertOracle.exact(env, given, value_mode=value_mode if given is not None else None)
    elif o.mode == "monte-carlo":
        oracle = ExpertOracle.monte_carlo(env, given, o.rollouts, value_mode=value_mode)
    elif o.mode == "leaf-sample":
        if tree is None or given is not None:
            raise ConfigurationError("leaf-sample oracle needs a tree with the optimal expert")
        oracle = ExpertOracle.leaf_sample(env, tree)
    else:
        raise ConfigurationError(f"oracle mode {o.mode!r} does not fit a {e.kind} environment")
    return Setup(env, expert, oracle, expected_cost(env, expert), tree)


def make_policy(config, setup):
    """Initial learner policy for a differentiable family."""
    p, env = config.policy, setup.env
    seed = config.run.seed
    if p.family == "gaussian":
        fam = Gaussian(env.state_dim, env.action_dim, p.sigma_init)
        return DifferentiablePolicy.create(fam, Identity(env.state_dim), seed=seed)
    if isinstance(env, parsing.ParseEnv):
        feat = parsing.ParseFeaturizer(config.env.vocab)
        fam = {"linear-softmax": lambda: LinearSoftmax(feat.dim, parsing.NUM_ACTIONS),
               "mlp-softmax": lambda: MlpSoftmax(feat.dim, parsing.NUM_ACTIONS, p.hidden)}.get(p.family)
        if fam is None:
            raise ConfigurationError(f"{p.family} cannot read parser features")
        return DifferentiablePolicy.create(fam(), feat, parsing.parse_mask, seed=seed)
    S, A, H = env.num_states, env.num_actions, env.horizon
    if p.family == "tabular-softmax":
        feat = StateIndex(S) if p.stationary else StateTimeIndex(S, H)
        return DifferentiablePolicy.create(TabularSoftmax(feat.num_obs, A), feat, seed=seed)
    feat = OneHotState(S, None if p.stationary else H)
    if p.family == "linear-softmax":
        return DifferentiablePolicy.create(LinearSoftmax(feat.dim, A), feat, seed=seed)
    if p.family == "mlp-softmax":
        return DifferentiablePolicy.create(MlpSoftmax(feat.dim, A, p.hidden), feat, seed=seed)
    raise ConfigurationError(f"unknown policy family {p.family!r}")


def evaluate(setup, policy):
    """Exact ``mu`` on finite and point-mass envs; ``1 - UAS`` of greedy
    decoding on the held-out sentences for parsing."""
    env = setup.env
    if isinstance(env, FiniteMdp):
        return expected_cost(env, policy)
    if isinstance(env, parsing.ParseEnv):
        return 1.0 - parsing.greedy_uas(policy, setup.validation)
    return linear_gaussian_cost(env, policy.family, policy.theta)


class _Clock:
    def __init__(self, enabled):
        self.enabled = enabled
        self.ticks = []
        self._t = None

    def start(self):
        if self.enabled:
            self._t = time.perf_counter()

    def stop(self):
        self.ticks.append((time.perf_counter() - self._t) * 1e3 if self.enabled else 0.0)


# ---------------------------------------------------------------------------
# main loop
# ---------------------------------------------------------------------------


def run_aggrevated(config, setup=None, callback=None):
    """Returns ``(RegretCurve, best policy)``.

    ``callback(n, policy)`` is invoked after each evaluation, mostly for
    diagnostics.  Numeric failures are re-raised with the episode index.
    """
    config.validate()
    setup = setup or build_setup(config)
    lr = config.learner
    if lr.use_advantage and not setup.oracle.has_value:
        raise ConfigurationError("advantage estimates need an oracle with a value estimate")
    update = lr.update
    if update == "eg":
        return _run_eg(config, setup, callback)
    if update == "ftl":
        return _run_ftl(config, setup)
    if update == "weighted-majority":
        return _run_weighted_majority(config, setup)
    if update == "reinforce":
        return run_reinforce(config, setup), None
    if update == "ucb":
        return run_tree_bandit_ucb(setup.tree, config.run.episodes, config.run.seed, setup.env), None
    return _run_gradient(config, setup, callback)


def _episode_error(n, exc):
    err = NumericError(f"episode {n}: {exc}")
    err.episode = n
    return err


def _run_eg(config, setup, callback):
    """Exponentiated gradient on simplex rows.

    With an exact oracle the per-row loss uses the exact roll-in
    distribution; otherwise ``K`` roll-ins are sampled and every visited
    ``(t, s)`` gets a fresh cost-to-go sample for each action.  Rows that no
    roll-in reached are left unchanged.  ``eg_weighting="normalized"``
    divides by the visitation mass (the per-state average cost-to-go);
    ``"visitation"`` keeps the weights, so the loss of a row is
    ``sum_t d_t(s) Q_t(s) / H``.
    """
    mdp, oracle = setup.env, setup.oracle
    if not isinstance(mdp, FiniteMdp):
        raise ConfigurationError("exponentiated gradient runs on finite MDPs")
    H, S, A = mdp.horizon, mdp.num_states, mdp.num_actions
    lr, K = config.learner, config.run.rollouts
    stationary = config.policy.stationary
    rows = np.full((1 if stationary else H, S, A), 1.0 / A)
    expert_table = as_table(setup.expert, mdp)
    P = _flat_transitions(mdp)
    cost = mdp.mean_costs
    mus = np.empty(config.run.episodes)
    best, best_mu = None, np.inf
    clock = _Clock(config.run.timing)
    q_exact = oracle.exact_q_table() if oracle.mode == "exact" else None
    rng = substream(config.run.seed, ROLLOUT)
    qrng = substream(config.run.seed, ORACLE)
    t_idx = np.broadcast_to(np.arange(H), (K, H)).ravel()
    aa = np.tile(np.arange(A), K * H)
    tt = np.repeat(t_idx, A)
    for n in range(1, config.run.episodes + 1):
        clock.start()
        table = np.broadcast_to(rows, (H, S, A))
        d = _visitation(mdp.initial, table, P)
        mu = float(np.einsum("ts,tsa,tsa->", d, table, cost))
        mus[n - 1] = mu
        if mu < best_mu:
            best, best_mu = table.copy(), mu
        if callback:
            callback(n, SimplexPolicy(table, validate=False))
        alpha = mixing_rate(config, n)
        rollin = table if alpha == 0 else alpha * expert_table + (1 - alpha) * table
        if q_exact is not None:
            if alpha:
                d = _visitation(mdp.initial, rollin, P)
            weight = d[:, :, None] * q_exact / H
            count = np.broadcast_to(d[:, :, None], weight.shape)
        else:
            states, _, _, _ = sample_paths(mdp, SimplexPolicy(rollin, validate=False), K, rng)
            flat = states.ravel()
            q = oracle.query_batch(tt, np.repeat(flat, A), aa, qrng).reshape(-1, A)
            weight = np.zeros((H, S, A))
            np.add.at(weight, (t_idx, flat), q / (H * K))
            count = np.zeros((H, S, A))
            np.add.at(count, (t_idx, flat), 1.0 / (H * K))
        if stationary:
            weight, count = weight.sum(0, keepdims=True), count.sum(0, keepdims=True)
        visited = count[..., 0] > 0
        loss = weight[visited]
        if lr.eg_weighting == "normalized":
            loss = loss / count[visited]
        try:
            rows = rows.copy()
            rows[visited] = eg_step_closed_form(rows[visited], step_size(config, n), loss)
        except NumericError as exc:
            raise _episode_error(n, exc) from exc
        clock.stop()
    return RegretCurve.from_costs(mus, setup.mu_star, clock.ticks), SimplexPolicy(best, validate=False)


def _flat_transitions(mdp):
    """Per-step ``(S*A, S)`` kernels; sparse when most entries are zero (trees)."""
    S, A = mdp.num_states, mdp.num_actions
    flat = [mdp.transition(t).reshape(S * A, S) for t in range(mdp.horizon)]
    if np.count_nonzero(mdp.P) < 0.05 * mdp.P.size:
        return [sparse.csr_matrix(m) for m in flat]
    return flat


def _visitation(rho, table, P):
    H, S, A = table.shape
    d = np.empty((H, S))
    d[0] = rho
    for t in range(H - 1):
        d[t + 1] = P[t].T @ (d[t][:, None] * table[t]).reshape(S * A)
    return d


def _run_ftl(config, setup):
    tree, mdp, oracle = setup.tree, setup.env, setup.oracle
    data = AggregatedDataset(2)
    acts = np.zeros(tree.num_states, dtype=int)
    mus, best, best_mu = [], None, np.inf
    clock = _Clock(config.run.timing)
    for n in range(1, config.run.episodes + 1):
        clock.start()
        policy = SimplexPolicy.deterministic(acts, 2, tree.depth)
        mu = expected_cost(mdp, policy)
        mus.append(mu)
        if mu < best_mu:
            best, best_mu = policy, mu
        rng = substream(config.run.seed, ROLLOUT, n)
        qrng = substream(config.run.seed, ORACLE, n)
        for _ in range(config.run.rollouts):
            tr = rollout(mdp, policy, rng)
            for t, s in enumerate(tr.states):
                data.add(int(s), oracle.query_q_vector(s, t, qrng))
        acts = ftl_cost_sensitive(data, tree)
        clock.stop()
    return RegretCurve.from_costs(mus, setup.mu_star, clock.ticks), best


def _run_weighted_majority(config, setup):
    from .policies import mixture_as_simplex
    tree, oracle = setup.tree, setup.oracle
    base = base_policy_actions(tree)
    # exact cost of each base policy: it ends at leaf j when started at the root
    leaf_cost = np.array([expected_cost(setup.env, SimplexPolicy.deterministic(base[j], 2, tree.depth))
                          for j in range(tree.num_leaves)])
    mix = BasePolicyMixture.uniform(tree.num_leaves)
    mus, best_w, best_mu = [], None, np.inf
    clock = _Clock(config.run.timing)
    for n in range(1, config.run.episodes + 1):
        clock.start()
        w = mix.weights
        mu = float(w @ leaf_cost)
        mus.append(mu)
        if mu < best_mu:
            best_w, best_mu = w, mu
        rng = substream(config.run.seed, ROLLOUT, n)
        qrng = substream(config.run.seed, ORACLE, n)
        q = np.zeros(tree.num_leaves)
        K = config.run.rollouts
        for _ in range(K):
            j = int(rng.choice(tree.num_leaves, p=w))
            states = [s for s, _ in tree.path(j)]
            q += weighted_majority_losses(states, base, oracle, qrng, tree.depth) / K
        new = eg_step_closed_form(w, step_size(config, n), q)
        mix = BasePolicyMixture(new / new.sum())
        clock.stop()
    best = mixture_as_simplex(BasePolicyMixture(best_w), tree)
    return RegretCurve.from_costs(mus, setup.mu_star, clock.ticks), best


def _collect(config, setup, rollin, n):
    """``K`` roll-ins with one substream each; threads preserve the order."""
    seed, K = config.run.seed, config.run.rollouts

    def one(i):
        return rollout(setup.env, rollin, substream(seed, ROLLOUT, n, i))

    if config.run.workers > 1 and K > 1:
        with ThreadPoolExecutor(config.run.workers) as pool:
            return list(pool.map(one, range(K)))
    return [one(i) for i in range(K)]


def _gradient(config, setup, policy, trajectories, n):
    lr, seed = config.learner, config.run.seed
    est = sampled_gradient_discrete if lr.estimator == "discrete" else sampled_gradient_continuous

    def one(i):
        return est([trajectories[i]], setup.oracle, policy, lr.use_advantage,
                   substream(seed, ORACLE, n, i), n).vector

    K = len(trajectories)
    if config.run.workers > 1 and K > 1:
        with ThreadPoolExecutor(config.run.workers) as pool:
            parts = list(pool.map(one, range(K)))
    else:
        parts = [one(i) for i in range(K)]
    g = np.zeros(policy.dim)
    for part in parts:
        g += part
    return g / K


def _run_gradient(config, setup, callback):
    from .estimators import fisher_factor
    lr = config.learner
    policy = make_policy(config, setup)
    H = setup.env.horizon
    cg = CgSettings(lr.cg_iterations, damping=lr.damping, kl_budget=lr.kl_budget)
    mus, best, best_mu = [], None, np.inf
    clock = _Clock(config.run.timing)
    for n in range(1, config.run.episodes + 1):
        clock.start()
        try:
            mu = evaluate(setup, policy)
            mus.append(mu)
            if mu < best_mu:
                best, best_mu = policy, mu
            if callback:
                callback(n, policy)
            alpha = mixing_rate(config, n)
            rollin = policy if alpha == 0 else mix_policies(setup.expert, policy, alpha)
            trajs = _collect(config, setup, rollin, n)
            g = _gradient(config, setup, policy, trajs, n)
            if lr.update == "ogd":
                theta = ogd_step(policy.theta, g, step_size(config, n))
            else:
                factor = fisher_factor(trajs, policy, H)
                delta = cg_solve_low_rank(factor, g, cg).delta
                try:
                    eta = natural_step_size(cg.kl_budget, g, delta)
                    theta = policy.theta - eta * delta
                except DegenerateDirectionError:
                    theta = policy.theta
            if not np.all(np.isfinite(theta)):
                raise NumericError("parameters became non-finite")
            policy = policy.with_theta(theta)
        except NumericError as exc:
            raise _episode_error(n, exc) from exc
        clock.stop()
    return RegretCurve.from_costs(mus, setup.mu_star, clock.ticks), best


# ---------------------------------------------------------------------------
# RL baselines
# ---------------------------------------------------------------------------


def run_reinforce(config, setup=None):
    """Score-function policy gradient on realized returns-to-go (no oracle)."""
    config.validate()
    setup = setup or build_setup(config)
    env = setup.env
    policy = make_policy(config, setup)
    H, K = env.horizon, config.run.rollouts
    mus = []
    clock = _Clock(config.run.timing)
    obs_table = None
    if isinstance(env, FiniteMdp) and policy.featurizer is not None:
        obs_table = policy.featurizer.table(env.num_states, H)
    for n in range(1, config.run.episodes + 1):
        clock.start()
        try:
            mus.append(evaluate(setup, policy))
            rng = substream(config.run.seed, ROLLOUT, n)
            if obs_table is not None:
                states, actions, costs, _ = sample_paths(env, policy.as_simplex(env), K, rng)
                G = np.cumsum(costs[:, ::-1], axis=1)[:, ::-1]
                g = tabular_score_gradient(policy, states, actions, G, H, obs_table)
            else:
                g = np.zeros(policy.dim)
                for i in range(K):
                    tr = rollout(env, policy, substream(config.run.seed, ROLLOUT, n, i))
                    G = np.cumsum(tr.costs[::-1])[::-1]
                    for t, (s, a) in enumerate(zip(tr.states, tr.actions)):
                        obs, mask = policy.features(s, t)
                        g += G[t] * policy.log_policy_gradient(obs, a, mask)
                g /= H * K
            policy = policy.with_theta(ogd_step(policy.theta, g, step_size(config, n)))
        except NumericError as exc:
            raise _episode_error(n, exc) from exc
        clock.stop()
    return RegretCurve.from_costs(mus, setup.mu_star, clock.ticks)


def run_tree_bandit_ucb(tree, episodes, seed, mdp=None):
    """UCB over root-to-leaf paths, each path an arm.

    Costs are minimized, so the optimistic index is the lower confidence
    bound ``mean - sqrt(2 ln n / pulls)``.  Leaf costs are drawn from ``mdp``
    when given, else from Bernoulli(mean) (or the mean itself for
    deterministic trees).  Regret uses the leaf means (pseudo-regret).
    """
    means = np.asarray(tree.leaf_means)
    L = means.size
    rng = substream(seed, ROLLOUT, 0)
    pulls = np.zeros(L)
    sums = np.zeros(L)
    chosen = np.empty(episodes, dtype=int)
    for n in range(episodes):
        if n < L:
            j = n
        else:
            j = int(np.argmin(sums / pulls - np.sqrt(2.0 * np.log(n + 1) / pulls)))
        chosen[n] = j
        pulls[j] += 1
        if mdp is not None:
            sums[j] += float(mdp.sample_cost(np.array(0), tree.leaf_state(j), 0, rng))
        elif tree.noise == "deterministic":
            sums[j] += means[j]
        else:
            sums[j] += float(rng.random() < means[j])
    curve = RegretCurve.from_costs(means[chosen], means.min())
    curve.pulls = pulls
    return curve


# ---------------------------------------------------------------------------
# experiment harness
# ---------------------------------------------------------------------------


def regret_grid(make_config, horizons, seeds, runner=None):
    """Mean final regret of independent runs, one per ``(N, seed)``.

    ``make_config(N, seed)`` returns the ``RunConfig`` for that grid point,
    so step sizes tuned to the horizon ``N`` live with the caller.
    Returns an array of shape ``(len(horizons), len(seeds))``.
    """
    runner = runner or (lambda cfg: run_aggrevated(cfg)[0])
    out = np.empty((len(horizons), len(seeds)))
    for i, N in enumerate(horizons):
        for k, seed in enumerate(seeds):
            out[i, k] = runner(make_config(N, seed)).final_regret
    return out
