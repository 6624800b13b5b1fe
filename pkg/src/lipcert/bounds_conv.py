"""Lipschitz bounds for lowered convolutional plans, both max-pool approaches.

Every block i carries a pair (W+_i, W-_i): linear blocks have W+ = W- = W,
explicit stages have (M+, M-), implicit max-pool blocks have W+ = the window
pattern and W- = the input-dependent selector whose absolute value and norm
equal the pattern's.  Chunks cut at a separator use the W- of the block just
below the cut; cutting at an implicit block instead pulls the selector out as
a standalone factor R with ||R|| = ||pattern|| (and R^abs = pattern).
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import DepthTooLarge, TooManyNeurons, UnsupportedNorm
from .linalg import L1, LINF
from .lowering import (
    BRANCH_SEP,
    EXPLICIT,
    IMPLICIT,
    NO_SEP,
    RELU_SEP,
    SIGN_SEP,
    LinearBlock,
    LoweredPlan,
    MaxPoolStage,
)

CONV_DEPTH_CAP = 22
CONV_SELECTOR_CAP = 20


def _w_plus(block) -> np.ndarray:
    if isinstance(block, LinearBlock):
        return block.matrix
    if isinstance(block, MaxPoolStage):
        return block.m_plus
    return block.ones


class PlanProducts:
    """Memoized chunk products over a plan's W+/W- matrices.

    product(t, s) multiplies W+ of blocks s..t-1; minus_chunk(t, s) replaces
    the top factor by the block's W- (only meaningful under a sign cut).
    """

    def __init__(self, plan: LoweredPlan):
        self.blocks = plan.blocks
        self.plus = [_w_plus(b) for b in plan.blocks]
        self._prod = {}
        self._minus = {}
        self._abs = {}
        self._norms = {}

    def product(self, t, s):
        if t == s:
            return None  # identity chunk
        key = (t, s)
        if key not in self._prod:
            if t == s + 1:
                self._prod[key] = self.plus[s]
            else:
                self._prod[key] = self.plus[t - 1] @ self.product(t - 1, s)
        return self._prod[key]

    def minus_chunk(self, t, s):
        key = (t, s)
        if key not in self._minus:
            minus = self.blocks[t - 1].m_minus
            inner = self.product(t - 1, s)
            self._minus[key] = minus if inner is None else minus @ inner
        return self._minus[key]

    def abs_of(self, kind, t, s):
        key = (kind, t, s)
        if key not in self._abs:
            mat = self.product(t, s) if kind == "plus" else self.minus_chunk(t, s)
            self._abs[key] = None if mat is None else np.abs(mat)
        return self._abs[key]

    def norm_of(self, kind, t, s, p):
        key = (kind, t, s, p)
        if key not in self._norms:
            mat = self.product(t, s) if kind == "plus" else self.minus_chunk(t, s)
            self._norms[key] = 1.0 if mat is None else linalg.norm(mat, p)
        return self._norms[key]


@dataclass
class ConvBoundReport:
    approach: str
    norm: str
    values: dict = field(default_factory=dict)
    effective_depth: int = 0
    term_count: int = 0
    timings: dict = field(default_factory=dict)

    def check_ordering(self, slack: float = 1e-9) -> list:
        v = self.values
        bad = []
        for x, y in [("K4", "K1"), ("K4", "K3"), ("K1", "K*"), ("K3", "K*"), ("K", "K4")]:
            if x in v and y in v and v[x] > v[y] * (1 + slack) + slack:
                bad.append(f"{x} > {y}")
        return bad


def _dof_positions(plan: LoweredPlan):
    return [t for t in range(1, len(plan.blocks)) if plan.separators[t - 1] != NO_SEP]


def _chunk_info(plan, t, s):
    """(kind, t, s, r_block_index) describing the chunk below cut t.

    kind 'plus' uses product(t, s); 'minus' the sign-cut chunk; 'drop' the
    implicit branch cut, where the chunk is product(t-1, s) and the selector
    factor is the pattern of block t-1.
    """
    if t == len(plan.blocks):
        return ("plus", t, s, None)
    sep = plan.separators[t - 1]
    if sep == BRANCH_SEP:
        return ("drop", t, s, t - 1)
    if isinstance(plan.blocks[t - 1], MaxPoolStage):
        return ("minus", t, s, None)
    return ("plus", t, s, None)


def conv_bounds(plan: LoweredPlan, norm: str, cap: int = CONV_DEPTH_CAP,
                products: PlanProducts | None = None,
                include_brute: bool = False,
                selector_cap: int = CONV_SELECTOR_CAP) -> ConvBoundReport:
    """K*, K1, K3, K4 for a lowered plan in l1 or linf."""
    if norm not in (L1, LINF):
        raise UnsupportedNorm("conv bounds are only valid in l1 and linf")
    depth = plan.effective_depth
    if depth > cap:
        raise DepthTooLarge(f"effective depth {depth} exceeds cap {cap}")
    pp = products or PlanProducts(plan)
    m = len(plan.blocks)
    report = ConvBoundReport(
        approach=plan.approach, norm=norm, effective_depth=depth, term_count=2**depth
    )

    start = time.perf_counter()
    report.values["K*"] = float(np.prod([linalg.norm(w, norm) for w in pp.plus]))
    report.timings["K*"] = time.perf_counter() - start

    start = time.perf_counter()
    prod = np.abs(pp.plus[-1])
    for w in pp.plus[-2::-1]:
        prod = prod @ np.abs(w)
    report.values["K3"] = linalg.norm(prod, norm)
    report.timings["K3"] = time.perf_counter() - start

    positions = _dof_positions(plan)
    start = time.perf_counter()
    k1_total = 0.0
    k4_total = 0.0
    for mask in range(2**depth):
        cuts = [positions[i] for i in range(depth) if mask >> i & 1]
        edges = [m] + list(reversed(cuts)) + [0]
        k1_term = 1.0
        k4_prod = None
        for hi, lo in zip(edges[:-1], edges[1:]):
            kind, t, s, r_idx = _chunk_info(plan, hi, lo)
            if kind == "drop":
                r_pattern = pp.plus[r_idx]
                k1_term *= linalg.norm(r_pattern, norm) * pp.norm_of("plus", t - 1, s, norm)
                k4_prod = r_pattern if k4_prod is None else k4_prod @ r_pattern
                block_abs = pp.abs_of("plus", t - 1, s)
            else:
                k1_term *= pp.norm_of(kind, t, s, norm)
                block_abs = pp.abs_of(kind, t, s)
            if block_abs is not None:
                k4_prod = block_abs if k4_prod is None else k4_prod @ block_abs
        k1_total += k1_term
        k4_total += linalg.norm(k4_prod, norm)
    report.values["K1"] = k1_total / 2.0**depth
    report.values["K4"] = k4_total / 2.0**depth
    report.timings["K1"] = report.timings["K4"] = time.perf_counter() - start

    if include_brute:
        start = time.perf_counter()
        try:
            report.values["K"] = brute_force_k_conv(plan, norm, cap=selector_cap)
        except TooManyNeurons:
            pass
        report.timings["K"] = time.perf_counter() - start
    return report


def conv_bounds_explicit(plan: LoweredPlan, norm: str, **kw) -> ConvBoundReport:
    if plan.approach != EXPLICIT:
        raise ValueError("plan was not lowered with the explicit approach")
    return conv_bounds(plan, norm, **kw)


def conv_bounds_implicit(plan: LoweredPlan, norm: str, **kw) -> ConvBoundReport:
    if plan.approach != IMPLICIT:
        raise ValueError("plan was not lowered with the implicit approach")
    return conv_bounds(plan, norm, **kw)


def _selector_slots(plan: LoweredPlan):
    """(kind, block_index, arity_per_unit, units) per degree of freedom."""
    slots = []
    for t in range(1, len(plan.blocks)):
        sep = plan.separators[t - 1]
        if sep == NO_SEP:
            continue
        below = plan.blocks[t - 1]
        if sep == RELU_SEP:
            slots.append(("relu", t - 1, 2, below.out_dim))
        elif sep == SIGN_SEP:
            slots.append(("sign", t - 1, 2, below.out_dim))
        else:
            slots.append(("branch", t - 1, below.window_size, below.out_dim))
    return slots


def brute_force_k_conv(plan: LoweredPlan, norm: str, cap: int = CONV_SELECTOR_CAP) -> float:
    """Exact max over activation corners, stage signs and window argmaxes."""
    slots = _selector_slots(plan)
    bits = sum(units * np.log2(arity) for _, _, arity, units in slots)
    if bits > cap:
        raise TooManyNeurons(f"{bits:.1f} selector bits exceed cap {cap}")

    def grad_for(choices):
        mats = []
        for i, block in enumerate(plan.blocks):
            if isinstance(block, LinearBlock):
                mats.append(block.matrix)
            elif isinstance(block, MaxPoolStage):
                z = choices[("sign", i)]
                mats.append(0.5 * block.m_plus + 0.5 * (z[:, None] * block.m_minus))
            else:
                sel = choices[("branch", i)]
                z = -block.ones.copy()
                rows = np.arange(block.out_dim)
                z[rows, block.windows[rows, sel]] = 1.0
                mats.append(0.5 * (block.ones + z))
            if i < len(plan.separators) and plan.separators[i] == RELU_SEP:
                d = choices[("relu", i)]
                mats.append(np.diag(d))
        prod = mats[-1]
        for w in mats[-2::-1]:
            prod = prod @ w
        return prod

    best = 0.0
    arities = []
    for kind, idx, arity, units in slots:
        arities.extend([(kind, idx, arity)] * units)
    total = int(np.prod([a for _, _, a in arities])) if arities else 1
    counters = np.zeros(len(arities), dtype=int)
    for _ in range(total):
        choices = {}
        pos = 0
        for kind, idx, arity, units in slots:
            vals = counters[pos : pos + units]
            pos += units
            if kind == "relu":
                choices[("relu", idx)] = vals.astype(float)
            elif kind == "sign":
                choices[("sign", idx)] = vals.astype(float) * 2.0 - 1.0
            else:
                choices[("branch", idx)] = vals.copy()
        best = max(best, linalg.norm(grad_for(choices), norm))
        for j in range(len(arities)):
            counters[j] += 1
            if counters[j] < arities[j][2]:
                break
            counters[j] = 0
    return best
