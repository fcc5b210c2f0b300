"""Square-root regret of exponentiated gradient on a random MDP.

Each horizon N gets its own run with a constant step c*sqrt(S ln A / N).
A log-log fit of final regret against N should come out near 0.5.
Smaller than the acceptance run so it finishes in about a minute.
"""
from aggrevated.learner import fit_power, regret_grid
from aggrevated.verification import tabular_eg_config

Ns = [2 ** k for k in range(9, 14)]
R = regret_grid(lambda N, seed: tabular_eg_config(8, N, seed), Ns, [0, 1]).mean(1)
for N, r in zip(Ns, R):
    print(f"N = {N:>6}  regret {r:8.1f}")
print(f"fitted exponent {fit_power(Ns, R):.3f}")
