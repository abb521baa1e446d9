"""Dataset generators and the rank-based comparison machinery.

Generates the benchmark datasets, shows their shapes, and walks the
Mann-Whitney / Bonferroni pipeline used to call one configuration better
or worse than another.
"""

import numpy as np

from mggp import (
    bonferroni,
    compare_vs_baseline,
    gen_k11c,
    gen_sigmoid,
    gen_ub5d,
    mann_whitney_u,
    rotation_matrix,
    split,
)

rng = np.random.default_rng(0)

print("benchmark shapes")
for name, (train, test) in {
    "s5d": gen_sigmoid(5, False, rng),
    "rs5d": gen_sigmoid(5, True, rng),
    "k11c": gen_k11c(rng),
    "ub5d": gen_ub5d(rng),
}.items():
    print(f"  {name:<5} train {train.n:>7} x {train.dim}   test {test.n:>7} x {test.dim}")

R = rotation_matrix(5)
print("\nrotation matrix orthogonality |R'R - I|:", np.max(np.abs(R.T @ R - np.eye(5))))

# A random 0.7/0.3 split, as used for CSV-loaded real-world data.
full, _ = gen_sigmoid(2, False, np.random.default_rng(1))
train, test = split(full, 0.7, np.random.default_rng(2))
print(f"split of {full.n} rows -> {train.n} train / {test.n} test")

# The comparison pipeline: exact Mann-Whitney for small samples.
a = [1.0, 2.0, 3.0]
b = [4.0, 5.0, 6.0]
res = mann_whitney_u(a, b)
print(f"\nexact test on disjoint triples: U={res.u_statistic}, p={res.p_two_sided}")

# Bonferroni guard for a family of comparisons.
print("threshold for 11 comparisons at alpha=0.05:", round(bonferroni(0.05, 11), 6))

# Verdicts compare medians once the adjusted threshold is met.
base_scores = np.random.default_rng(3).normal(0.90, 0.01, size=30)
cfg_scores = base_scores + 0.05
verdict = compare_vs_baseline(cfg_scores, base_scores, alpha=0.05, m=11)
print(f"shifted configuration vs baseline: p={verdict.p_two_sided:.2e} -> {verdict.verdict}")
