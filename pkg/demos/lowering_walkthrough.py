"""The pooling-to-matrix machinery on the 3x3 running example.

Shows the average-pooling matrix, the two explicit max-pool stage pairs
(M+/M-), the implicit window pattern, and an input-dependent selector, then
verifies the Euler identity max_pool(x) = (pattern @ x + selector @ x) / 2.
"""

import numpy as np

from lipcert import lowering
from lipcert.netmodel import AvgPool2d, MaxPool2d

shape = (3, 3, 1)
pool = (2, 2)
stride = (1, 1)

print("average pooling (2,2)/1 on a 3x3 grid lowers to:")
avg = lowering.lower_avgpool(AvgPool2d(pool=pool, stride=stride), shape)
print(avg.matrix)

print("\nexplicit max-pooling: pairwise-max stages with M+ / M- splits")
expl, _ = lowering.lower_maxpool_explicit(MaxPool2d(pool=pool, stride=stride), shape)
for i, stage in enumerate(expl.stages):
    print(f"stage {i} M+ =\n{stage.m_plus.astype(int)}")
    print(f"stage {i} M- =\n{stage.m_minus.astype(int)}")

impl = lowering.lower_maxpool_implicit(MaxPool2d(pool=pool, stride=stride), shape)
print("\nimplicit max-pooling: window membership pattern")
print(impl.ones.astype(int))

x = np.array([9.0, 1.0, 0.0, 2.0, 8.0, 3.0, 4.0, 10.0, 5.0])
z = lowering.zm_at(impl, x)
print(f"\nselector for x = {x.astype(int)} (one +1 per window at its argmax):")
print(z.astype(int))

half_sum = 0.5 * (impl.ones @ x) + 0.5 * (z @ x)
direct = x[impl.windows].max(axis=1)
print(f"\n(pattern @ x + selector @ x)/2 = {half_sum}")
print(f"direct max-pool                = {direct}")
assert np.array_equal(half_sum, direct)
print("identity holds exactly.")
