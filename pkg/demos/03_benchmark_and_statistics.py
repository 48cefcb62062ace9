"""
Benchmark matrix and its statistical analysis
=============================================

Five stochastic generators tuned to fixed match rates stand in for fine-tuned models.
Each runs 50 times; the resulting matrix goes through the normality, variance and
mean-difference tests.
"""

import random

import numpy as np

from codesurgeon.benchmark import BernoulliGenerator, EvalProtocol, run_matrix
from codesurgeon.repair_format import DiffHunk, RepairTask
from codesurgeon.statlab import anova_oneway, density_points, levene, qq_points, shapiro_wilk, tukey_hsd

rng = random.Random(0)
tasks = []
for i in range(1000):
    lines = [f"x{i}_{j} = {rng.random():.4f}" for j in range(rng.randint(2, 8))]
    k = rng.randint(1, len(lines))
    tasks.append(RepairTask(f"t{i}.py", f"task {i}", (k,), "\n".join(lines), (DiffHunk(k, k, (f"fixed_{i}",)),)))

rates = {"base": 0.117, "base_extra": 0.161, "base_synth": 0.172, "base_synth_extra": 0.173, "base_synth_all": 0.152}
matrix = run_matrix(tasks, {name: BernoulliGenerator(p) for name, p in rates.items()}, EvalProtocol.top1(runs=50, seed=1))
for row in matrix.summary():
    print(f"{row['configuration']:<18} mean={row['mean']:.4f} std={row['std']:.4f}")

groups = [matrix.row(c) for c in matrix.configurations]

# normality per configuration
for name, g in zip(matrix.configurations, groups):
    res = shapiro_wilk(g)
    print(f"Shapiro-Wilk {name:<18} W={res.statistic:.4f} p={res.p_value:.3f}")

print("Levene", levene(groups))
print("ANOVA ", anova_oneway(groups))
for c in tukey_hsd(groups, matrix.configurations):
    flag = "*" if c.reject else " "
    print(f"  {flag} {c.group_a} vs {c.group_b}: diff={c.mean_diff:+.4f} p_adj={c.p_adj:.3f}")

# plot-ready arrays: Q-Q pairs and a kernel density curve
qq = np.array(qq_points(groups[0]))
dens = np.array(density_points(groups[0]))
print("qq slope:", np.polyfit(qq[:, 0], qq[:, 1], 1)[0])
print("density peak at:", dens[dens[:, 1].argmax(), 0])
