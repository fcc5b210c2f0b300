"""Training an arc-eager dependency parser with a clairvoyant oracle.

The oracle scores an action by how many gold arcs stay reachable after it,
so its cost-to-go is exact.  Early episodes roll in mostly with the oracle
(alpha = 0.9, decaying), later ones with the learner's own policy.  Held-out
attachment accuracy is printed every 20 episodes.
"""
from aggrevated.learner import run_aggrevated
from aggrevated.verification import parsing_config

cfg = parsing_config()

curve, best = run_aggrevated(cfg)
for n in range(0, len(curve), 20):
    print(f"episode {n + 1:>3}  held-out UAS {1 - curve.mu_pi[n]:.3f}")
print(f"best held-out UAS {1 - curve.mu_pi.min():.3f}")
