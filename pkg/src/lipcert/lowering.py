"""Lowering of conv/pool layers to matrices and of max-pooling to either
explicit (M+/M- pair stages) or implicit (window-pattern + selector) form.

A lowered plan is a flat sequence of blocks with one separator between each
adjacent pair.  A separator carries at most one degree of freedom:

* ``relu``   - a 0/1 diagonal from an activation layer,
* ``sign``   - the +-1 diagonal bundled with the explicit max-pool stage
               directly below it,
* ``branch`` - the window/selector split of the implicit max-pool block
               directly below it,
* ``none``   - a fixed identity (e.g. a linear block feeding a max-pool
               with no activation in between).

Identity blocks are inserted so that no separator ever carries two degrees
of freedom and the plan never ends in a max-pool block.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch, UnsupportedLayer
from .netmodel import (
    Activation,
    AvgPool2d,
    Conv2d,
    Dense,
    MaxPool2d,
    NetworkSpec,
    RELU,
    _as_spatial,
    _flat_dim,
    conv_out_hw,
    pool_out_hw,
    same_padding,
)

EXPLICIT = "explicit"
IMPLICIT = "implicit"

RELU_SEP = "relu"
SIGN_SEP = "sign"
BRANCH_SEP = "branch"
NO_SEP = "none"


@dataclass
class LinearBlock:
    matrix: np.ndarray
    bias: np.ndarray
    origin: str = "dense"

    @property
    def out_dim(self):
        return self.matrix.shape[0]

    @property
    def in_dim(self):
        return self.matrix.shape[1]


@dataclass
class MaxPoolStage:
    """One pairwise-max reduction: each row of m_plus holds two ones, m_minus
    is m_plus with the second entry negated."""

    m_plus: np.ndarray
    m_minus: np.ndarray

    @property
    def out_dim(self):
        return self.m_plus.shape[0]

    @property
    def in_dim(self):
        return self.m_plus.shape[1]


@dataclass
class MaxPoolExplicitBlock:
    stages: list  # of MaxPoolStage, applied first to last


@dataclass
class MaxPoolImplicitBlock:
    """Window membership pattern: ones[r, j] = 1 iff input j feeds output r."""

    ones: np.ndarray
    window_size: int
    windows: np.ndarray  # (n_out, window_size) input indices, row-major scan

    @property
    def out_dim(self):
        return self.ones.shape[0]

    @property
    def in_dim(self):
        return self.ones.shape[1]


def _flat_index(y, x, ch, w, c):
    return (y * w + x) * c + ch


def lower_conv(layer: Conv2d, in_shape) -> LinearBlock:
    """Matrix m with m @ flatten(x) == flatten(conv(x)); zero padding."""
    h, w, c = _as_spatial(in_shape)
    kernel = np.asarray(layer.kernel, dtype=float)
    oc, ic, kh, kw = kernel.shape
    if ic != c:
        raise ShapeMismatch(f"conv expects {ic} channels, input has {c}")
    sh, sw = layer.stride
    oh, ow = conv_out_hw(h, w, kh, kw, sh, sw, layer.padding)
    pt = pl = 0
    if layer.padding == "same":
        pt, _, pl, _ = same_padding(h, w, kh, kw, sh, sw)
    mat = np.zeros((oh * ow * oc, h * w * c))
    oy, ox = np.meshgrid(np.arange(oh), np.arange(ow), indexing="ij")
    for dy in range(kh):
        for dx in range(kw):
            iy = oy * sh + dy - pt
            ix = ox * sw + dx - pl
            valid = (iy >= 0) & (iy < h) & (ix >= 0) & (ix < w)
            if not valid.any():
                continue
            obase = (oy[valid] * ow + ox[valid]) * oc
            ibase = (iy[valid] * w + ix[valid]) * c
            rows = obase[:, None, None] + np.arange(oc)[None, :, None]
            cols = ibase[:, None, None] + np.arange(c)[None, None, :]
            np.add.at(
                mat,
                (np.broadcast_to(rows, rows.shape[:1] + (oc, c)),
                 np.broadcast_to(cols, cols.shape[:1] + (oc, c))),
                kernel[:, :, dy, dx][None, :, :],
            )
    bias = np.tile(np.asarray(layer.bias, dtype=float), oh * ow)
    return LinearBlock(matrix=mat, bias=bias, origin="conv")


def _pool_windows(in_shape, pool, stride) -> np.ndarray:
    """(n_out, ph*pw) flat input indices per pooling window, (dy, dx) order."""
    h, w, c = _as_spatial(in_shape)
    ph, pw = pool
    sh, sw = stride
    oh, ow = pool_out_hw(h, w, ph, pw, sh, sw)
    oy, ox, och = np.meshgrid(np.arange(oh), np.arange(ow), np.arange(c), indexing="ij")
    members = []
    for dy in range(ph):
        for dx in range(pw):
            members.append(_flat_index(oy * sh + dy, ox * sw + dx, och, w, c))
    return np.stack(members, axis=-1).reshape(oh * ow * c, ph * pw)


def lower_avgpool(layer: AvgPool2d, in_shape) -> LinearBlock:
    """Each row has ph*pw entries equal to 1/(ph*pw)."""
    windows = _pool_windows(in_shape, layer.pool, layer.stride)
    n_out, win = windows.shape
    mat = np.zeros((n_out, _flat_dim(_as_spatial(in_shape))))
    mat[np.arange(n_out)[:, None], windows] = 1.0 / win
    return LinearBlock(matrix=mat, bias=np.zeros(n_out), origin="avgpool")


def lower_maxpool_implicit(layer: MaxPool2d, in_shape) -> MaxPoolImplicitBlock:
    windows = _pool_windows(in_shape, layer.pool, layer.stride)
    n_out, win = windows.shape
    ones = np.zeros((n_out, _flat_dim(_as_spatial(in_shape))))
    ones[np.arange(n_out)[:, None], windows] = 1.0
    return MaxPoolImplicitBlock(ones=ones, window_size=win, windows=windows)


def zm_at(block: MaxPoolImplicitBlock, x) -> np.ndarray:
    """Selector matrix: +1 at each window argmax (first-index tie-break),
    -1 at the other window positions, 0 outside."""
    v = np.asarray(x, dtype=float).reshape(-1)
    if v.size != block.in_dim:
        raise ShapeMismatch(f"input dim {v.size}, block expects {block.in_dim}")
    z = -block.ones.copy()
    rows = np.arange(block.out_dim)
    best = np.argmax(v[block.windows], axis=1)
    z[rows, block.windows[rows, best]] = 1.0
    return z


def _axis_pairs(length, pool, stride):
    """Pair index lists realizing a 1-D max over windows of `pool` at `stride`.

    Stages 1..pool-2 build stride-1 running maxes of adjacent pairs; the last
    stage pairs the two running maxes covering each strided window.
    """
    if pool == 1:
        return []
    stages = []
    for k in range(1, pool):
        cur_len = length - (k - 1)
        if k < pool - 1:
            stages.append([(j, j + 1) for j in range(cur_len - 1)])
        else:
            out_len = (length - pool) // stride + 1
            stages.append([(i * stride, i * stride + 1) for i in range(out_len)])
    return stages


def _pair_stage_matrices(h, w, c, axis, pairs):
    """Stage matrices pairing positions along `axis` (0 = height, 1 = width).

    Output rows are row-major over the reduced (h', w', c) grid.
    """
    if axis == 1:
        out_h, out_w = h, len(pairs)
    else:
        out_h, out_w = len(pairs), w
    n_out, n_in = out_h * out_w * c, h * w * c
    plus = np.zeros((n_out, n_in))
    minus = np.zeros((n_out, n_in))
    for oy in range(out_h):
        for ox in range(out_w):
            if axis == 1:
                a, b = pairs[ox]
                ia = _flat_index(oy, a, np.arange(c), w, c)
                ib = _flat_index(oy, b, np.arange(c), w, c)
            else:
                a, b = pairs[oy]
                ia = _flat_index(a, ox, np.arange(c), w, c)
                ib = _flat_index(b, ox, np.arange(c), w, c)
            r = _flat_index(oy, ox, np.arange(c), out_w, c)
            plus[r, ia] = 1.0
            plus[r, ib] = 1.0
            minus[r, ia] = 1.0
            minus[r, ib] = -1.0
    return MaxPoolStage(m_plus=plus, m_minus=minus), (out_h, out_w, c)


def lower_maxpool_explicit(layer: MaxPool2d, in_shape):
    """Stage sequence (width-direction reductions, then height-direction).

    Returns (MaxPoolExplicitBlock, selection) where selection is an optional
    LinearBlock subsampling a pool-1 axis with stride > 1.
    """
    h, w, c = _as_spatial(in_shape)
    ph, pw = layer.pool
    sh, sw = layer.stride
    pool_out_hw(h, w, ph, pw, sh, sw)  # validates divisibility
    stages = []
    shape = (h, w, c)
    for pairs in _axis_pairs(w, pw, sw):
        stage, shape = _pair_stage_matrices(*shape, axis=1, pairs=pairs)
        stages.append(stage)
    for pairs in _axis_pairs(shape[0], ph, sh):
        stage, shape = _pair_stage_matrices(*shape, axis=0, pairs=pairs)
        stages.append(stage)
    selection = None
    if (pw == 1 and sw > 1) or (ph == 1 and sh > 1):
        # Degenerate axes reduce to plain subsampling, which is linear.
        windows = _pool_windows(in_shape, layer.pool, layer.stride)
        keep = windows[:, 0] if pw == 1 and ph == 1 else None
        if keep is None:
            raise UnsupportedLayer(
                "mixed pool-1/stride>1 axis with a pooled axis is not supported"
            )
        mat = np.zeros((len(keep), h * w * c))
        mat[np.arange(len(keep)), keep] = 1.0
        selection = LinearBlock(matrix=mat, bias=np.zeros(len(keep)), origin="avgpool")
    return MaxPoolExplicitBlock(stages=stages), selection


# ---------------------------------------------------------------------------
# Whole-network lowering
# ---------------------------------------------------------------------------

@dataclass
class LoweredPlan:
    approach: str
    input_dim: int
    blocks: list = field(default_factory=list)
    separators: list = field(default_factory=list)  # between consecutive blocks
    name: str = "plan"

    @property
    def effective_depth(self) -> int:
        """Number of separators carrying a degree of freedom."""
        return sum(1 for s in self.separators if s != NO_SEP)


def _identity_block(dim) -> LinearBlock:
    return LinearBlock(matrix=np.eye(dim), bias=np.zeros(dim), origin="identity")


def lower_network(net: NetworkSpec, approach: str) -> LoweredPlan:
    """Compile a network to a lowered plan; consecutive linear blocks are
    merged, and identity blocks keep one degree of freedom per separator."""
    if approach not in (EXPLICIT, IMPLICIT):
        raise ValueError(f"unknown approach {approach!r}")
    blocks = []  # (block, relu_after) with relu_after mutable
    pending_relu = False

    def push(block):
        nonlocal pending_relu
        if pending_relu and not blocks:
            blocks.append([_identity_block(net.input_dim), True])
        elif pending_relu:
            blocks[-1][1] = True
        pending_relu = False
        if (
            blocks
            and not blocks[-1][1]
            and isinstance(blocks[-1][0], LinearBlock)
            and isinstance(block, LinearBlock)
        ):
            prev = blocks.pop()[0]
            merged = LinearBlock(
                matrix=block.matrix @ prev.matrix,
                bias=block.matrix @ prev.bias + block.bias,
                origin="merged",
            )
            blocks.append([merged, False])
        else:
            blocks.append([block, False])

    shape = net.input_shape
    for layer, out_shape in zip(net.layers, net.shapes[1:]):
        if isinstance(layer, Activation):
            if layer.fn == RELU:
                if pending_relu:
                    raise UnsupportedLayer("two consecutive activations")
                # A ReLU right after a max-pool needs its own separator slot.
                if blocks and not isinstance(blocks[-1][0], LinearBlock) and not blocks[-1][1]:
                    push(_identity_block(_flat_dim(shape)))
                pending_relu = True
        elif isinstance(layer, Dense):
            push(LinearBlock(matrix=np.asarray(layer.weight, float),
                             bias=np.asarray(layer.bias, float), origin="dense"))
        elif isinstance(layer, Conv2d):
            push(lower_conv(layer, shape))
        elif isinstance(layer, AvgPool2d):
            push(lower_avgpool(layer, shape))
        elif isinstance(layer, MaxPool2d):
            if approach == IMPLICIT:
                push(lower_maxpool_implicit(layer, shape))
            else:
                expl, selection = lower_maxpool_explicit(layer, shape)
                for stage in expl.stages:
                    push(stage)
                if selection is not None:
                    push(selection)
        else:
            raise UnsupportedLayer(f"cannot lower {layer!r}")
        shape = out_shape
    if pending_relu:
        push(_identity_block(_flat_dim(shape)))
    if blocks and not isinstance(blocks[-1][0], LinearBlock):
        push(_identity_block(blocks[-1][0].out_dim))

    plan = LoweredPlan(approach=approach, input_dim=net.input_dim, name=net.name)
    plan.blocks = [b for b, _ in blocks]
    for i in range(1, len(plan.blocks)):
        below = plan.blocks[i - 1]
        if isinstance(below, MaxPoolStage):
            plan.separators.append(SIGN_SEP)
        elif isinstance(below, MaxPoolImplicitBlock):
            plan.separators.append(BRANCH_SEP)
        elif blocks[i - 1][1]:
            plan.separators.append(RELU_SEP)
        else:
            plan.separators.append(NO_SEP)
    return plan


def plan_forward(plan: LoweredPlan, x) -> np.ndarray:
    """Evaluate the plan with input-dependent max-pool selectors."""
    v = np.asarray(x, dtype=float).reshape(-1)
    if v.size != plan.input_dim:
        raise ShapeMismatch(f"input dim {v.size}, plan expects {plan.input_dim}")
    for i, block in enumerate(plan.blocks):
        if isinstance(block, LinearBlock):
            v = block.matrix @ v + block.bias
        elif isinstance(block, MaxPoolStage):
            diff = block.m_minus @ v
            v = 0.5 * (block.m_plus @ v) + 0.5 * np.abs(diff)
        else:
            v = v[block.windows].max(axis=1)
        if i < len(plan.separators) and plan.separators[i] == RELU_SEP:
            v = np.maximum(v, 0.0)
    return v


def plan_to_json(plan: LoweredPlan) -> str:
    """Dump a plan for inspection (same float formatting as the interchange)."""
    def block_doc(block):
        if isinstance(block, LinearBlock):
            return {
                "kind": "linear",
                "origin": block.origin,
                "matrix": block.matrix.tolist(),
                "bias": block.bias.tolist(),
            }
        if isinstance(block, MaxPoolStage):
            return {
                "kind": "maxpool_stage",
                "m_plus": block.m_plus.tolist(),
                "m_minus": block.m_minus.tolist(),
            }
        return {
            "kind": "maxpool_implicit",
            "window_size": int(block.window_size),
            "ones": block.ones.tolist(),
        }

    doc = {
        "name": plan.name,
        "approach": plan.approach,
        "input_dim": int(plan.input_dim),
        "effective_depth": plan.effective_depth,
        "separators": list(plan.separators),
        "blocks": [block_doc(b) for b in plan.blocks],
    }
    return json.dumps(doc, indent=1)
