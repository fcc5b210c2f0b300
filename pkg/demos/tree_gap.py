"""Imitation with a cost-to-go oracle against a bandit learner on trees.

A depth-K binary tree has 2^(K-1) leaves and only the leaf costs differ.
UCB must find the best leaf by trying paths, one arm per leaf.  The
imitation learner asks the expert oracle about both actions at every
visited node, so a single episode carries information about a whole path.
The printed ratio grows quickly with depth.
"""
from aggrevated.learner import build_setup, run_aggrevated, run_tree_bandit_ucb
from aggrevated.verification import gap_config

N = 2000
print(f"{'depth':>5} {'leaves':>7} {'UCB regret':>11} {'EG regret':>10} {'ratio':>7}")
for depth in (4, 6, 8):
    cfg = gap_config(depth, "eg", seed=0, N=N)
    curve, _ = run_aggrevated(cfg)
    setup = build_setup(cfg)
    ucb = run_tree_bandit_ucb(setup.tree, N, seed=0, mdp=setup.env)
    print(f"{depth:>5} {2 ** (depth - 1):>7} {ucb.final_regret:>11.1f} {curve.final_regret:>10.2f} "
          f"{ucb.final_regret / curve.final_regret:>7.0f}")
