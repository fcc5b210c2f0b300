"""Acceptance checks shared by ``aggrevated verify`` and the test suite.

Each check returns a ``CheckResult``; suites group them by theme.  Sizes
and seeds are fixed so every check is deterministic.
"""
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .environments import parsing
from .environments.point_mass import linear_gaussian_surrogate, make_point_mass
from .environments.tabular import make_random_tabular
from .environments.tree import make_binary_tree, random_leaf_means
from .estimators import (exact_gradient_discrete, sampled_gradient_continuous,
                         sampled_gradient_discrete, surrogate_loss_exact)
from .learner import (RunConfig, fit_power, regret_grid, run_aggrevated,
                      run_tree_bandit_ucb)
from .mdp import performance_difference_residual, rollout
from .optimizers import (CgSettings, cg_solve_low_rank, eg_regret_bound_check,
                         eg_step_argmin_oracle, eg_step_closed_form, natural_step_size)
from .oracles import ExpertOracle
from .policies import (DifferentiablePolicy, Gaussian, LinearSoftmax, MlpSoftmax, OneHotState,
                       SimplexPolicy, StateIndex, TabularSoftmax)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail} ({self.seconds:.1f}s)"


def _timed(name, fn):
    t0 = time.perf_counter()
    passed, detail = fn()
    return CheckResult(name, bool(passed), detail, time.perf_counter() - t0)


def _random_policy(rng, S, A, H):
    return SimplexPolicy(rng.dirichlet(np.ones(A), size=(H, S)))


# ---------------------------------------------------------------------------
# 1. performance difference
# ---------------------------------------------------------------------------


def check_performance_difference(count=50, seed=0):
    def go():
        rng = np.random.default_rng(seed)
        worst = 0.0
        for i in range(count):
            S, A, H = rng.integers(1, 21), rng.integers(1, 5), rng.integers(1, 11)
            mdp = make_random_tabular(S, A, H, seed=1000 + i)
            r = performance_difference_residual(mdp, _random_policy(rng, S, A, H), _random_policy(rng, S, A, H))
            worst = max(worst, r)
        return worst < 1e-8, f"{count} random MDPs, max residual {worst:.2e}"
    return _timed("performance-difference identity", go)


# ---------------------------------------------------------------------------
# 2. gradients
# ---------------------------------------------------------------------------


def _relative_error(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12))


def _fd_surrogate(mdp, oracle, policy, rollin, h=1e-5):
    g = np.zeros(policy.dim)
    for k in range(policy.dim):
        e = np.zeros(policy.dim)
        e[k] = h
        up = surrogate_loss_exact(mdp, oracle, policy.with_theta(policy.theta + e), rollin)
        dn = surrogate_loss_exact(mdp, oracle, policy.with_theta(policy.theta - e), rollin)
        g[k] = (up - dn) / (2 * h)
    return g


def discrete_policy(kind, S, A, H, rng, seed):
    if kind == "tabular-softmax":
        pol = DifferentiablePolicy.create(TabularSoftmax(S, A), StateIndex(S), seed=seed)
    elif kind == "linear-softmax":
        feat = OneHotState(S, H)
        pol = DifferentiablePolicy.create(LinearSoftmax(feat.dim, A), feat, seed=seed)
    else:
        feat = OneHotState(S, H)
        pol = DifferentiablePolicy.create(MlpSoftmax(feat.dim, A, hidden=6), feat, seed=seed)
    return pol.with_theta(pol.theta + rng.normal(scale=0.5, size=pol.dim))


def check_gradients(count=100, seed=1):
    def go():
        rng = np.random.default_rng(seed)
        kinds = ("tabular-softmax", "linear-softmax", "mlp-softmax")
        worst = 0.0
        for i in range(count):
            S, A, H = rng.integers(2, 5), rng.integers(2, 4), rng.integers(1, 4)
            mdp = make_random_tabular(S, A, H, seed=2000 + i)
            oracle = ExpertOracle.exact(mdp)
            pol = discrete_policy(kinds[i % 3], S, A, H, rng, i)
            rollin = _random_policy(rng, S, A, H)
            g = exact_gradient_discrete(mdp, oracle, pol, rollin).vector
            worst = max(worst, _relative_error(g, _fd_surrogate(mdp, oracle, pol, rollin)))
        gworst = 0.0
        for i in range(count):
            F = int(rng.integers(1, 4))
            fam = Gaussian(F, action_dim=int(rng.integers(1, 3)))
            theta = rng.normal(size=fam.dim)
            x, a = rng.normal(size=F), rng.normal(size=fam.action_dim)
            g = fam.grad_log_prob(theta, x, a)
            fd = np.array([(fam.log_prob(theta + h, x, a) - fam.log_prob(theta - h, x, a)) / 2e-5
                           for h in np.eye(fam.dim) * 1e-5])
            gworst = max(gworst, _relative_error(g, fd))
        ok = worst < 1e-5 and gworst < 1e-5
        return ok, f"{count} discrete instances max rel err {worst:.1e}; gaussian score max rel err {gworst:.1e}"
    return _timed("gradient correctness", go)


# ---------------------------------------------------------------------------
# 3. unbiasedness and variance reduction
# ---------------------------------------------------------------------------


def _mean_se(samples):
    samples = np.asarray(samples)
    return samples.mean(0), samples.std(0, ddof=1) / np.sqrt(samples.shape[0])


def _within(mean, se, target, k=3.0):
    # components with no spread must match to rounding
    tol = np.where(se > 0, k * se, 1e-12)
    return np.abs(mean - target) <= tol


def check_unbiasedness(draws=100_000, seed=3):
    def go():
        rng = np.random.default_rng(seed)
        notes, ok = [], True

        # sum-over-actions estimator on a small random MDP with a noisy oracle
        mdp = make_random_tabular(2, 2, 2, seed=7)
        oracle = ExpertOracle.monte_carlo(mdp)
        pol = discrete_policy("tabular-softmax", 2, 2, 2, rng, 0)
        exact = exact_gradient_discrete(mdp, oracle, pol, pol.as_simplex(mdp)).vector
        samples = np.array([sampled_gradient_discrete([rollout(mdp, pol, rng)], oracle, pol, rng=rng).vector
                            for _ in range(draws)])
        m, se = _mean_se(samples)
        good = _within(m, se, exact).all()
        ok &= good
        notes.append(f"discrete {'ok' if good else 'BIASED'}")

        # score-function estimator on the point mass versus the analytic surrogate
        env, expert = make_point_mass(4)
        fam = Gaussian(2, 1, sigma_init=0.5)
        theta = np.array([-0.8, -0.6, 0.1, np.log(0.5 - fam.sigma_min)])
        gpol = DifferentiablePolicy(fam, theta, featurizer=lambda s, t: s)
        goracle = ExpertOracle.analytic(env, expert)
        h = 1e-6
        fd = np.array([(linear_gaussian_surrogate(env, expert, fam, theta + e, theta)
                        - linear_gaussian_surrogate(env, expert, fam, theta - e, theta)) / (2 * h)
                       for e in np.eye(fam.dim) * h])
        cs = np.array([sampled_gradient_continuous([env.rollout(gpol, rng)], goracle, gpol).vector
                       for _ in range(draws)])
        m, se = _mean_se(cs)
        good = _within(m, se, fd).all()
        ok &= good
        notes.append(f"continuous {'ok' if good else 'BIASED'}")

        # advantage baseline on a depth-3 tree with the leaf-sample oracle
        mdp, tree = make_binary_tree(3, [0.7, 0.2, 0.5, 0.9])
        toracle = ExpertOracle.leaf_sample(mdp, tree)
        tpol = discrete_policy("tabular-softmax", tree.num_states, 2, 3, rng, 1)
        plain, adv = [], []
        for _ in range(draws):
            tr = rollout(mdp, tpol, rng)
            plain.append(sampled_gradient_continuous([tr], toracle, tpol, rng=rng).vector)
            adv.append(sampled_gradient_continuous([tr], toracle, tpol, True, rng=rng).vector)
        plain, adv = np.array(plain), np.array(adv)
        mp, sp = _mean_se(plain)
        ma, sa = _mean_se(adv)
        agree = (np.abs(mp - ma) <= 3 * np.sqrt(sp ** 2 + sa ** 2)).all()
        live = plain.var(0) > 0
        reduced = np.mean(adv.var(0)[live] < plain.var(0)[live])
        ok &= agree and reduced >= 0.8
        notes.append(f"advantage means {'agree' if agree else 'DIFFER'}, variance lower on {reduced:.0%}")

        # with the sum over actions the baseline cancels exactly
        tr = rollout(mdp, tpol, rng)
        a = sampled_gradient_discrete([tr], ExpertOracle.exact(mdp), tpol).vector
        b = sampled_gradient_discrete([tr], ExpertOracle.exact(mdp), tpol, True).vector
        same = np.allclose(a, b, atol=1e-12)
        ok &= same
        notes.append("discrete baseline cancels" if same else "discrete baseline CHANGED estimate")
        return ok, f"{draws} draws; " + ", ".join(notes)
    return _timed("estimator unbiasedness", go)


# ---------------------------------------------------------------------------
# 4-5. exponentiated gradient
# ---------------------------------------------------------------------------


def check_eg_equivalence(count=100, seed=4):
    def go():
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(count):
            A = int(rng.integers(2, 10))
            row = rng.dirichlet(np.ones(A))
            q = rng.uniform(0, 2, size=A)
            eta = rng.uniform(0.01, 5.0)
            worst = max(worst, np.abs(eg_step_closed_form(row, eta, q) - eg_step_argmin_oracle(row, eta, q)).max())
        return worst < 1e-6, f"{count} instances, max deviation {worst:.1e}"
    return _timed("EG closed form vs argmin", go)


def _follow_the_leader_adversary(d, N, mu):
    """Unit loss on whichever coordinate EG currently weights most."""
    w = np.full(d, 1.0 / d)
    Y = np.zeros((N, d))
    for n in range(N):
        Y[n, int(np.argmax(w))] = 1.0
        w = eg_step_closed_form(w, mu, Y[n])
    return Y


def check_eg_regret_bound(count=100, N=1000, seed=5):
    def go():
        rng = np.random.default_rng(seed)
        violations = 0
        for _ in range(count):
            d = int(rng.integers(2, 65))
            mu = float(rng.uniform(0.01, 1.0))
            regret, bound = eg_regret_bound_check(rng.uniform(0, 1, size=(N, d)), mu)
            violations += regret > bound
        alternating = np.tile([[1.0, -1.0], [-1.0, 1.0]], (N // 2, 1))
        for Y, mu in ((alternating, 0.1), (_follow_the_leader_adversary(8, N, 0.1), 0.1)):
            regret, bound = eg_regret_bound_check(Y, mu)
            violations += regret > bound
        return violations == 0, f"{count} random + 2 adversarial sequences, {violations} violations"
    return _timed("EG regret bound", go)


# ---------------------------------------------------------------------------
# 6. follow-the-leader on the exact-oracle tree
# ---------------------------------------------------------------------------


def theorem2_means(depth=10):
    """Leaf costs whose best leaf needs a right turn at every internal level."""
    L = 2 ** (depth - 1)
    means = np.linspace(0.5, 0.9, L)
    means[L - 1] = 0.1
    return tuple(means)


def check_ftl_tree(depth=10, episodes=40):
    def go():
        cfg = RunConfig()
        cfg.env.depth = depth
        cfg.env.leaf_means = theorem2_means(depth)
        cfg.learner.update = "ftl"
        cfg.run.episodes = episodes
        curve, _ = run_aggrevated(cfg)
        hit = np.flatnonzero(curve.inst_regret <= 1e-12)
        first = int(hit[0]) + 1 if hit.size else None
        flat = first is not None and np.all(curve.inst_regret[first - 1:] <= 1e-12)
        ok = first is not None and first - 1 <= depth - 1 and flat and curve.final_regret <= (depth - 1) * 1.0
        return ok, (f"K={depth}: optimal from episode {first} "
                    f"({first - 1 if first else '?'} learning episodes), R_N={curve.final_regret:.3f}")
    return _timed("FTL tree (exact oracle)", go)


# ---------------------------------------------------------------------------
# 11. natural gradient
# ---------------------------------------------------------------------------


def check_natural_gradient(seed=11):
    def go():
        rng = np.random.default_rng(seed)
        worst_solve, worst_kl = 0.0, 0.0
        for _ in range(10):
            d, K = int(rng.integers(20, 201)), int(rng.integers(1, 21))
            S = rng.normal(size=(d, K)) / np.sqrt(K)
            g = rng.normal(size=d)
            cg = CgSettings(max_iterations=2 * d, damping=1e-3, kl_budget=0.01)
            res = cg_solve_low_rank(S, g, cg)
            dense = np.linalg.solve(S @ S.T + cg.damping * np.eye(d), g)
            worst_solve = max(worst_solve, np.linalg.norm(res.delta - dense) / np.linalg.norm(dense))
            eta = natural_step_size(cg.kl_budget, g, res.delta)
            step = eta * res.delta
            quad = step @ (S @ (S.T @ step)) + cg.damping * step @ step
            # an inexact solve perturbs the quadratic form by about eta^2 |delta| |r|
            allowed = 10 * eta ** 2 * np.linalg.norm(res.delta) * max(res.residual, 1e-16)
            worst_kl = max(worst_kl, abs(quad - cg.kl_budget) / allowed)
        cfg = RunConfig()
        cfg.env.leaf_means = (0.2, 0.8)
        cfg.policy.family = "tabular-softmax"
        cfg.learner.update = "natural"
        cfg.run.episodes = 50
        cfg.run.rollouts = 4
        curve, _ = run_aggrevated(cfg)
        reached = np.flatnonzero(curve.mu_pi <= 0.2 + 1e-3)
        ok = worst_solve < 1e-6 and worst_kl <= 1.0 and reached.size > 0
        when = int(reached[0]) + 1 if reached.size else None
        return ok, (f"dense agreement {worst_solve:.1e}, KL identity within {worst_kl:.2f} of allowance, "
                    f"tree reaches mu<=0.201 at episode {when}")
    return _timed("natural gradient", go)


# ---------------------------------------------------------------------------
# 12. super-expert
# ---------------------------------------------------------------------------


def check_super_expert():
    def go():
        cfg = RunConfig()
        cfg.env.leaf_means = (0.2, 0.8)
        cfg.env.noise = "deterministic"
        cfg.env.expert = "right"
        cfg.oracle.value_mode = "expert"
        cfg.learner.eta0 = 10.0
        cfg.run.episodes = 30
        curve, best = run_aggrevated(cfg)
        mu_best, mu_star = float(curve.mu_pi.min()), float(curve.mu_star[0])
        return mu_best <= mu_star - 0.1, f"best learned mu {mu_best:.4f} vs expert {mu_star:.4f}"
    return _timed("super-expert", go)


# ---------------------------------------------------------------------------
# 14. determinism
# ---------------------------------------------------------------------------


DETERMINISM_CONFIGS = {
    "tree-eg": """
env.kind = tree
env.depth = 4
learner.update = eg
oracle.mode = leaf-sample
run.episodes = 200
run.rollouts = 3
run.seed = 5
""",
    "tabular-natural-parallel": """
env.kind = tabular
env.num_states = 6
env.num_actions = 3
env.horizon = 4
policy.family = linear-softmax
learner.update = natural
oracle.mode = monte-carlo
run.episodes = 30
run.rollouts = 8
run.workers = 4
run.seed = 9
""",
    "point-mass-ogd": """
env.kind = point-mass
env.horizon = 5
policy.family = gaussian
learner.update = ogd
learner.estimator = continuous
learner.eta0 = 0.05
oracle.mode = exact
run.episodes = 20
run.rollouts = 4
run.workers = 2
""",
}


def check_determinism():
    from .cli import cmd_run

    def go():
        bad = []
        with tempfile.TemporaryDirectory() as tmp:
            tmp = Path(tmp)
            for name, text in DETERMINISM_CONFIGS.items():
                cfg_path = tmp / f"{name}.cfg"
                cfg_path.write_text(text)
                outs = []
                for k in range(2):
                    out = tmp / f"{name}-{k}"
                    if cmd_run(cfg_path, out) != 0:
                        bad.append(f"{name} failed")
                        break
                    outs.append((out / "curve.csv").read_bytes())
                else:
                    # re-running from the resolved config must reproduce the curve too
                    out = tmp / f"{name}-resolved"
                    cmd_run(tmp / f"{name}-0" / "resolved_config.txt", out)
                    outs.append((out / "curve.csv").read_bytes())
                    if len(set(outs)) != 1:
                        bad.append(name)
        return not bad, "byte-identical curves for " + ", ".join(DETERMINISM_CONFIGS) if not bad else "differs: " + ", ".join(bad)
    return _timed("determinism", go)


# ---------------------------------------------------------------------------
# 7-10. regret scaling
# ---------------------------------------------------------------------------


def _in(lo, x, hi):
    return lo <= x <= hi


def weighted_majority_config(depth, N, seed, c=0.5):
    """Tree learner over base policies; step tuned to the horizon.

    Base policies differ only where their paths split and the loss is
    divided by the horizon, so loss gaps shrink with depth; the step is
    scaled up by ``depth + 1`` to compensate.
    """
    cfg = RunConfig()
    cfg.env.depth = depth
    cfg.learner.update = "weighted-majority"
    cfg.learner.eta_schedule = "constant"
    cfg.learner.eta0 = c * (depth + 1) * np.sqrt(np.log(2 ** (depth - 1)) / N)
    cfg.oracle.mode = "leaf-sample"
    cfg.run.episodes = N
    cfg.run.seed = seed
    return cfg


def check_weighted_majority_scaling():
    def go():
        Ns = [2 ** k for k in range(10, 15)]
        R = regret_grid(lambda N, s: weighted_majority_config(8, N, s), Ns, [0]).mean(1)
        slope = fit_power(Ns, R)
        depths = (4, 6, 8)
        RK = np.array([regret_grid(lambda N, s: weighted_majority_config(K, N, s), [2 ** 14], range(3)).mean()
                       for K in depths])
        k_exp = fit_power(depths, RK)
        ok = _in(0.4, slope, 0.6) and bool(np.all(np.diff(RK) > 0)) and k_exp < 2.0
        return ok, (f"slope {slope:.3f}; R(2^14) at K=4,6,8 = {np.round(RK, 1).tolist()}, "
                    f"K-exponent {k_exp:.2f}")
    return _timed("weighted-majority regret (tree, noisy)", go)


def gap_leaf_means(depth, seed):
    """One good leaf (0.1), the rest in [0.8, 1]: a clear arm gap for the bandit side."""
    return tuple(random_leaf_means(depth, np.random.default_rng([seed, depth]), best=0.1, low=0.8, high=1.0))


def gap_config(depth, update, seed, N=10_000):
    cfg = RunConfig()
    cfg.env.depth = depth
    cfg.env.leaf_means = gap_leaf_means(depth, seed)
    cfg.learner.update = update
    cfg.learner.eta0 = 64.0
    cfg.oracle.mode = "leaf-sample"
    cfg.run.episodes = N
    cfg.run.seed = seed
    return cfg


def check_il_rl_gap(seeds=range(4)):
    def go():
        ratios, detail = [], []
        for K in (4, 6, 8, 10):
            rl = np.mean([run_aggrevated(gap_config(K, "ucb", s))[0].final_regret for s in seeds])
            il = np.mean([run_aggrevated(gap_config(K, "eg", s))[0].final_regret for s in seeds])
            ratios.append(rl / il)
            detail.append(f"K={K}: {rl:.0f}/{il:.2f}={rl / il:.0f}")
        ok = bool(np.all(np.diff(ratios) > 0)) and ratios[-1] > 3
        return ok, "UCB/EG regret " + ", ".join(detail)
    return _timed("imitation vs bandit regret gap", go)


def tabular_eg_config(S, N, seed=0, c=16.0):
    cfg = RunConfig()
    cfg.env.kind = "tabular"
    cfg.env.num_states = S
    cfg.env.num_actions = 4
    cfg.env.horizon = 5
    cfg.policy.stationary = False
    cfg.learner.eta_schedule = "constant"
    cfg.learner.eg_weighting = "visitation"
    cfg.learner.eta0 = c * np.sqrt(S * np.log(4) / N)
    cfg.oracle.mode = "monte-carlo"
    cfg.run.episodes = N
    cfg.run.seed = seed
    return cfg


def check_tabular_scaling():
    def go():
        Ns = [2 ** k for k in range(12, 17)]
        R = regret_grid(lambda N, s: tabular_eg_config(16, N, s), Ns, [0]).mean(1)
        slope = fit_power(Ns, R)
        sizes = (8, 16, 32, 64)
        RS = [R[-1] if S == 16 else regret_grid(lambda N, s: tabular_eg_config(S, N, s), [Ns[-1]], [0]).mean()
              for S in sizes]
        s_exp = fit_power(sizes, RS)
        ok = _in(0.4, slope, 0.6) and _in(0.3, s_exp, 0.7)
        return ok, f"N-slope {slope:.3f} (S=16); S-exponent {s_exp:.3f}, R(2^16) = {np.round(RS, 0).tolist()}"
    return _timed("tabular EG regret (general MDP)", go)


def bandit_config(N, seed, c=1.0, S=8, A=4):
    cfg = RunConfig()
    cfg.env.kind = "bandit"
    cfg.env.num_states = S
    cfg.env.num_actions = A
    cfg.env.gap = 0.1
    cfg.learner.eta_schedule = "constant"
    cfg.learner.eta0 = c * np.sqrt(S * np.log(A) / N)
    cfg.oracle.mode = "monte-carlo"
    cfg.run.episodes = N
    cfg.run.seed = seed
    return cfg


def check_bandit_scaling():
    def go():
        Ns = [2 ** k for k in range(10, 16)]
        R = regret_grid(bandit_config, Ns, range(4)).mean(1)
        slope = fit_power(Ns, R)
        return _in(0.4, slope, 0.6), f"slope {slope:.3f}, R = {np.round(R, 1).tolist()}"
    return _timed("bandit-rows EG regret", go)


# ---------------------------------------------------------------------------
# 13. parsing
# ---------------------------------------------------------------------------


def parsing_config():
    cfg = RunConfig()
    cfg.env.kind = "parse"
    cfg.policy.family = "linear-softmax"
    cfg.learner.update = "ogd"
    cfg.learner.estimator = "discrete"
    cfg.learner.eta0 = 300.0
    cfg.learner.eta_schedule = "constant"
    cfg.learner.alpha0 = 1.0
    cfg.learner.alpha_decay = 0.9
    cfg.oracle.mode = "exact"
    cfg.run.episodes = 200
    cfg.run.rollouts = 8
    cfg.run.seed = 0
    return cfg


def check_parsing():
    def go():
        corpus = parsing.make_parse_corpus(250, 12, 30, 0)[:200]
        expert = np.mean([parsing.uas(parsing.finalize(parsing.parse_with(
            parsing.oracle_action, parsing.ParserState.initial(s))[0]), s.heads) for s in corpus])
        curve, _ = run_aggrevated(parsing_config())
        best = 1.0 - float(curve.mu_pi.min())
        ok = expert == 1.0 and best >= 0.9
        return ok, f"expert UAS {expert:.3f} on 200 sentences; best held-out learner UAS {best:.3f}"
    return _timed("dependency parsing", go)


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------


CHECKS = {
    1: check_performance_difference,
    2: check_gradients,
    3: check_unbiasedness,
    4: check_eg_equivalence,
    5: check_eg_regret_bound,
    6: check_ftl_tree,
    7: check_weighted_majority_scaling,
    8: check_il_rl_gap,
    9: check_tabular_scaling,
    10: check_bandit_scaling,
    11: check_natural_gradient,
    12: check_super_expert,
    13: check_parsing,
    14: check_determinism,
}

SUITES = {
    "pdl": (1,),
    "gradients": (2, 3),
    "eg": (4, 5),
    "fisher": (11,),
    "regret-fast": (6, 12, 14),
    "regret-full": (7, 8, 9, 10, 13),
}


def run_check(number):
    return CHECKS[number]()


def run_suite(suite, report=None):
    results = []
    for number in SUITES[suite]:
        res = run_check(number)
        res.name = f"[{number}] {res.name}"
        if report is not None:
            report(res.line())
        results.append(res)
    return results
