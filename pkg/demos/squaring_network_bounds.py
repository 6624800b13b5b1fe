"""Bounds on the squaring networks, depth by depth.

Builds the deep ReLU nets whose output is the tent-map partial sum
converging to x^2, computes all five certified bounds in the linf norm,
and contrasts their growth: the worst bound explodes like 4^depth, the
abs-product bound grows linearly, and the abs-chunk bound K4 matches the
exact Lipschitz constant at every depth.
"""

import numpy as np

from lipcert import benchgen, bounds_dense

depths = range(1, 7)

print("variant: symmetric hat  g(x) = 1 - R(2x-1) - R(1-2x)")
print(f"{'depth':>5} {'L':>10} {'K*':>8} {'K1':>10} {'K2':>10} {'K3':>6} {'K4':>10}")
series = {k: [] for k in ("K*", "K1", "K2", "K3", "K4")}
for depth in depths:
    net = benchgen.build_x2_net(depth, "symmetric")
    pp = bounds_dense.PartialProducts(bounds_dense.dense_weights(net))
    row = {
        "L": benchgen.exact_L_x2(depth),
        "K*": bounds_dense.k_star(net, "linf"),
        "K1": bounds_dense.k1(net, "linf", products=pp),
        "K2": bounds_dense.k2(net, "linf"),
        "K3": bounds_dense.k3(net, "linf"),
        "K4": bounds_dense.k4(net, "linf", products=pp),
    }
    for k in series:
        series[k].append(row[k])
    print(
        f"{depth:>5} {row['L']:>10.6f} {row['K*']:>8.1f} {row['K1']:>10.5f}"
        f" {row['K2']:>10.5f} {row['K3']:>6.1f} {row['K4']:>10.6f}"
    )

print("\ngrowth rates G (ratio of consecutive increments):")
for k, vals in series.items():
    rates = benchgen.growth_rate(vals)
    print(f"  {k:>3}: " + "  ".join(f"{g:.3f}" for g in rates))
print("\nK4 increments halve (G = 0.5): the bound converges to the exact")
print("constant 2 - 2^-depth, while K* quadruples every layer.")
