"""Random-weight square and product networks against their concentration bounds.

Inner weights are k^(-alpha/2) sqrt(U); the output layer is fixed.  The
empirical success frequency over many draws is compared with the closed-form
lower bound at several tolerances.
"""

from normnet.experiments import rand_verify

for name in ("square", "bilinear"):
    print(f"--- {name} ---")
    rows = rand_verify(name, k=1000, alpha=1.0, eps_list=[0.003, 0.03, 0.1], trials=2000, seed=1)
    for r in rows:
        flag = "vacuous" if r.vacuous else f"bound {r.predicted:.3f}"
        print(f"{r.case:<22} eps={r.eps:<6} freq={r.freq:.3f}  {flag}"
              f"{'  VIOLATION' if r.violation else ''}")
