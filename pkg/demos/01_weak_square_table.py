"""Two-neuron square approximants for activations with only a weak even-part modulus.

Builds the symmetric block for cases A-D at k = 8..64, prints the error table
and writes the approximation / error figures for cases A-C.
"""

import sys
from pathlib import Path

from normnet.experiments import plot_case, table_c, table_c_text

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("demo_out")
out.mkdir(exist_ok=True)

rows = table_c(alpha=1.0, k_list=[8, 16, 32, 64], cases=["A", "B", "C", "D"])
print(table_c_text(rows))

# every row respects its bound; case D cancels exactly
for r in rows:
    assert r.err_unclipped <= r.predicted * (1 + 1e-6) + 1e-12

for case in "ABC":
    for p in plot_case(case, [8, 16, 32, 64], out, "png"):
        print("wrote", p)
