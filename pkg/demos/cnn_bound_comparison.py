"""Explicit vs implicit max-pool bounds on the three CNN architectures.

Lowers each 28x28 model (random glorot weights) with both max-pool
representations and prints the 2 approaches x 2 norms x 4 bounds grid.
The implicit form needs fewer subset terms (one block per pool instead of
one per 1-D reduction stage) and usually lands at or below the explicit
numbers.
"""

from lipcert import benchgen, bounds_conv, lowering

SEED = 0

for model in ("A", "B", "C"):
    net = benchgen.build_mnist_cnn(model, seed=SEED)
    print(f"model {model} (seed {SEED}):")
    for approach in ("explicit", "implicit"):
        plan = lowering.lower_network(net, approach)
        pp = bounds_conv.PlanProducts(plan)
        for norm in ("l1", "linf"):
            rep = bounds_conv.conv_bounds(plan, norm, products=pp)
            cells = "  ".join(f"{k}={rep.values[k]:.4e}" for k in ("K*", "K1", "K3", "K4"))
            print(f"  {approach:>8} {norm:>4}  {cells}  (2^{rep.effective_depth} terms)")
    print()
