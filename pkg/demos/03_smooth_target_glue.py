"""Approximating a smooth function on the unit square with local Taylor pieces.

Each cube of the mesh carries a Taylor polynomial; hat bumps normalised to a
partition of unity blend them.  The error falls like h^r until the product
blocks' own error takes over.
"""

import numpy as np

from normnet.deterministic import LiprBuildParams, build_lipr, choose_k, fit_loglog
from normnet.experiments import lipr_default_target, measure
from normnet.network import EvalGrid

f = lipr_default_target(2, 1)  # mean of cos(x_i), smoothness r = 2
ks, errs = [], []
for k in (4, 8, 16, 32, 64):
    a = build_lipr(LiprBuildParams(2, 1, 1.0, 1.0, k, f))
    err = measure(a, EvalGrid((0.0, 0.0), (1.0, 1.0), 301))
    ks.append(k)
    errs.append(err)
    print(f"k={k:>3} cubes/axis={a.info['n_axis']:>2} measured={err:.2e} "
          f"bound={a.predicted_bound:.2e} declared K={a.cert.K:.3g}")
print(f"fitted error exponent in k: {fit_loglog(ks, errs).slope:.2f}")

# fitting a width / norm budget
k = choose_k(W=600, K=5e3, d=1, r=1.0, alpha=1.0, activation="silu")
a = build_lipr(LiprBuildParams(1, 0, 1.0, 1.0, k, lipr_default_target(1, 0)))
print(f"budget (W=600, K=5e3) -> k={k}, cert W={a.cert.W} K={a.cert.K:.1f}")
