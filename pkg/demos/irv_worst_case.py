"""How badly can SD treat the agents who never get to choose?

Agents that are picked rather than picking may end up below their own outside
option.  The constructed profile below pushes every such agent to the bottom
of its list, which is the worst case the IRV metric can see.
"""
import numpy as np

from matchkit.core import is_individually_rational, run_sd
from matchkit.datagen import euclidean_preferences, sample_contexts
from matchkit.metrics import ir_violation_general as ir_violation
from matchkit.verify import adversarial_irv_profile, random_market

for n, m in [(1, 1), (2, 3), (4, 4), (6, 3)]:
    profile, ranking = adversarial_irv_profile(n, m)
    M = run_sd(profile, ranking)
    print(f"n={n} m={m}  IRV={ir_violation(M, profile):.3f}  IR={is_individually_rational(M, profile)}")

# uniformly random preference lists with random rankings sit well below that
rng = np.random.default_rng(0)
vals = []
for _ in range(2000):
    n, m = rng.integers(1, 7, size=2)
    inst, profile = random_market(n, m, rng)
    vals.append(ir_violation(run_sd(profile, rng.permutation(n + m)), profile))
vals = np.array(vals)
print(f"\nrandom lists: mean IRV {vals.mean():.4f}, max {vals.max():.4f}")

# distance-threshold preferences make acceptability symmetric, so every pick
# is mutual and nobody is pushed below the outside option
vals = []
for _ in range(2000):
    n, m = rng.integers(1, 7, size=2)
    X_W, X_F = sample_contexts(n, m, 10, rng)
    profile = euclidean_preferences(X_W, X_F)
    vals.append(ir_violation(run_sd(profile, rng.permutation(n + m)), profile))
print(f"Euclidean:    mean IRV {np.mean(vals):.4f}, max {np.max(vals):.4f}")
