"""Certified multiplication: the pairwise block and the binary product tree.

Shows how the certificate (width, depth, norm budget) grows with d while the
error stays within (2^D - 1) times the block error.
"""

import numpy as np

from normnet.deterministic import build_product2, build_product_d, tree_level_errors
from normnet.network import check_norm_constraint, evaluate

k, alpha = 64, 1.0
block = build_product2(k, alpha, "silu")
print(f"pair block: K = {block.cert.K:.1f}, bound = {block.predicted_bound:.2e}")

rng = np.random.default_rng(0)
for d in (2, 3, 4, 8):
    a = build_product_d(d, k, alpha, "silu")
    x = rng.uniform(-1, 1, size=(20000, d))
    err = np.max(np.abs(evaluate(a.network, x)[:, 0] - np.prod(x, axis=1)))
    c = a.cert
    print(f"d={d}: W={c.W} L={c.L} K={c.K:.3g} measured={err:.2e} bound={a.predicted_bound:.2e} "
          f"norms ok={check_norm_constraint(a.network).ok}")
    if d > 2:
        levels = tree_level_errors(a, x)
        print("   per-level errors:", ", ".join(f"{e:.2e}" for e in levels))
