"""Networks converging to x*y, and how their bounds grow with depth.

Each extra series term costs one two-ReLU block built from 13 mesh hat
functions and a folding map; the sup error drops by 4x per term while every
bound grows geometrically.  The symmetric four-term hat gives smaller
bounds and growth rates than the three-term one, despite being wider.
"""

import numpy as np

from lipcert import benchgen, bounds_dense, netmodel

grid_1d = np.linspace(-1, 1, 41)
grid = np.stack(np.meshgrid(grid_1d, grid_1d), axis=-1).reshape(-1, 2)
target = grid[:, 0] * grid[:, 1]

for variant in ("hata", "hatb"):
    print(f"variant {variant}:")
    print(f"{'terms':>5} {'sup err':>10} {'K*':>12} {'K1':>12} {'K3':>10} {'K4':>10}")
    series = {k: [] for k in ("K*", "K1", "K3", "K4")}
    for n in range(5):
        net = benchgen.build_xy_net(n, variant)
        out = np.array([netmodel.forward(net, p)[0] for p in grid])
        err = np.abs(out - target).max()
        pp = bounds_dense.PartialProducts(bounds_dense.dense_weights(net))
        vals = {
            "K*": bounds_dense.k_star(net, "linf"),
            "K1": bounds_dense.k1(net, "linf", products=pp),
            "K3": bounds_dense.k3(net, "linf"),
            "K4": bounds_dense.k4(net, "linf", products=pp),
        }
        for k in series:
            series[k].append(vals[k])
        print(
            f"{n:>5} {err:>10.2e} {vals['K*']:>12.4e} {vals['K1']:>12.4e}"
            f" {vals['K3']:>10.3e} {vals['K4']:>10.3e}"
        )
    for k, vals in series.items():
        rates = benchgen.growth_rate(vals)
        print(f"  G({k}): " + "  ".join(f"{g:.2f}" for g in rates))
    print()
