"""Why squeezed axial attention: op counts vs full attention as maps grow.

Run: python3 demos/03_attention_scaling.py
"""

import numpy as np

from pfan.bench import format_table, run_attention_bench

sizes = [(n, n) for n in (8, 16, 32, 64)]
records = run_attention_bench(sizes, c=64, reps=3, seed=0)
print(format_table(records))

by_kind = {"sea": [], "full": []}
for r in records:
    by_kind[r.kind].append(r.measured_flops)

logn = np.log([float(n) for n, _ in sizes])
full_slope = np.polyfit(logn, np.log(by_kind["full"]), 1)[0]
sea_slope = np.polyfit(logn, np.log(by_kind["sea"]), 1)[0]

print(f"\nlog-log slope, full attention: {full_slope:.3f}  (N^4: quadratic "
      "in token count)")
print(f"log-log slope, squeezed axial:  {sea_slope:.3f}  (dominated by N^2 "
      "terms)")
print("\nsea/full op ratio by size:")
for (n, _), s, f in zip(sizes, by_kind["sea"], by_kind["full"]):
    print(f"  {n:3d}x{n:<3d}  {s / f:.4f}")
