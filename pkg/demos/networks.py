"""
Networks with fitness
=====================

A Bianconi-Barabasi tree, Dereich's multigraph and the disordered Chinese
restaurant process, each driven by the same fitness laws.
"""
import numpy as np

from competing_growth import make_model, simulate_bb_tree, simulate_crp, simulate_dereich
from competing_growth.extremal import extract_extremes

uniform = make_model("weibull_alpha", alpha=1.0)
rng = np.random.default_rng(7)

tree = simulate_bb_tree(uniform, 20_000, rng, embed=True)
k, ratio = extract_extremes(tree.size)
print(f"BB tree: largest degree {tree.size.max()} at vertex {k} with fitness {tree.fitness[k - 1]:.4f}")
print(f"         degree ratio of the top two {ratio:.3f}, clock {tree.meta['clock']:.2f}")

net = simulate_dereich(uniform, 0.5, 20_000, rng)
print(f"Dereich: {net.edge_count} edges, largest indegree {net.size.max()}")

crp = simulate_crp(uniform, 1.0, 100_000, rng, checkpoints=[1000, 10_000, 100_000])
print(f"CRP: {crp.table_count} tables")
for n, r in zip(crp.checkpoints, crp.checkpoint_ratio):
    print(f"  after {n:>6} customers the top two tables have ratio {r:.3f}")
