"""Beating a poor demonstrator.

The expert on a depth-2 tree always goes right, to a leaf of cost 0.8,
while the left leaf costs 0.2.  Behaviour cloning would copy the mistake.
Minimizing the expert's cost-to-go instead prefers the left action, since
Q(root, left) = 0.2 < Q(root, right) = 0.8, so the learner ends up better
than the policy it learns from.
"""
from aggrevated.learner import RunConfig, run_aggrevated

cfg = RunConfig()
cfg.env.leaf_means = (0.2, 0.8)
cfg.env.noise = "deterministic"
cfg.env.expert = "right"
cfg.oracle.value_mode = "expert"
cfg.learner.eta0 = 10.0
cfg.run.episodes = 30

curve, best = run_aggrevated(cfg)
print(f"expert cost            {curve.mu_star[0]:.3f}")
for n in (1, 2, 5, 30):
    print(f"learner after {n:>2} eps   {curve.mu_pi[n - 1]:.3f}")
