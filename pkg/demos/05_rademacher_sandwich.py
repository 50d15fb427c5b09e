"""Empirical Rademacher complexity between its closed-form lower and upper bounds."""

import numpy as np

from normnet import rademacher as rad

g = np.random.default_rng(3)
for n, d in ((8, 2), (12, 3), (12, 4)):
    panel = rad.random_panel(n, d, g)
    K = 2.0
    lin = rad.rademacher_exact(rad.build_rad_witness_relu(K, d), panel)
    fam = rad.random_lipschitz_family(d, K, 2, 6, 20, g)
    rnd_fam = rad.rademacher_exact(fam, panel)
    print(f"n={n:>2} d={d}: lower {rad.bound_lower_relu(K, 0, panel.s_stat, n):.3f} "
          f"<= witness {lin:.3f};  random family {rnd_fam:.3f} "
          f"<= upper {rad.bound_upper(1.0, K, n, 2, d):.3f}")

print("lower rate for d=5, r=1 at K=10, L=4:", f"{rad.minimax_lower_rate(10, 4, 5, 1.0):.4f}")
