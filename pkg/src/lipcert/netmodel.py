"""Network description, validation, forward evaluation and pointwise Jacobians.

Layers are kept as small dataclasses; a :class:`NetworkSpec` is an ordered
list of layers plus an input shape.  Image tensors are flattened row-major
(height, then width, then channel), so flat index = (y*w + x)*c + ch.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, ShapeMismatch, UnknownLayerKind

RELU = "relu"
IDENTITY = "identity"

VALID = "valid"
SAME = "same"


@dataclass
class Dense:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)

    kind = "dense"


@dataclass
class Conv2d:
    kernel: np.ndarray  # (out_ch, in_ch, kh, kw)
    bias: np.ndarray  # (out_ch,)
    stride: tuple = (1, 1)
    padding: str = VALID

    kind = "conv2d"


@dataclass
class AvgPool2d:
    pool: tuple
    stride: tuple

    kind = "avgpool2d"


@dataclass
class MaxPool2d:
    pool: tuple
    stride: tuple

    kind = "maxpool2d"


@dataclass
class Activation:
    fn: str = RELU

    kind = "activation"


@dataclass
class NetworkSpec:
    input_shape: object  # int (flat) or (h, w, c)
    layers: list = field(default_factory=list)
    name: str = "net"

    def __post_init__(self):
        self.shapes = infer_shapes(self.input_shape, self.layers)

    @property
    def input_dim(self) -> int:
        return _flat_dim(self.input_shape)

    @property
    def output_dim(self) -> int:
        return _flat_dim(self.shapes[-1])


def _flat_dim(shape) -> int:
    if isinstance(shape, (int, np.integer)):
        return int(shape)
    h, w, c = shape
    return int(h * w * c)


def _as_spatial(shape):
    if isinstance(shape, (int, np.integer)):
        raise ShapeMismatch("layer needs a spatial (h, w, c) input shape")
    return tuple(int(v) for v in shape)


def conv_out_hw(h, w, kh, kw, sh, sw, padding):
    if padding == VALID:
        if h < kh or w < kw:
            raise ShapeMismatch(f"kernel ({kh},{kw}) larger than input ({h},{w})")
        return (h - kh) // sh + 1, (w - kw) // sw + 1
    if padding == SAME:
        return -(-h // sh), -(-w // sw)
    raise ShapeMismatch(f"unknown padding {padding!r}")


def same_padding(h, w, kh, kw, sh, sw):
    """Zero-padding amounts (top, bottom, left, right), TF convention."""
    oh, ow = -(-h // sh), -(-w // sw)
    ph = max((oh - 1) * sh + kh - h, 0)
    pw = max((ow - 1) * sw + kw - w, 0)
    return ph // 2, ph - ph // 2, pw // 2, pw - pw // 2


def pool_out_hw(h, w, ph, pw, sh, sw):
    # Ragged borders are rejected so that lowered matrices stay exact.
    if (h - ph) % sh or (w - pw) % sw or h < ph or w < pw:
        raise ShapeMismatch(
            f"pool ({ph},{pw}) stride ({sh},{sw}) does not tile input ({h},{w})"
        )
    return (h - ph) // sh + 1, (w - pw) // sw + 1


def infer_shapes(input_shape, layers):
    """Shapes after each layer; validates the whole network."""
    if not isinstance(input_shape, (int, np.integer)):
        if len(input_shape) != 3:
            raise ShapeMismatch("spatial input shape must be (h, w, c)")
    shapes = [input_shape]
    prev_act = False
    shape = input_shape
    for layer in layers:
        if isinstance(layer, Activation):
            if prev_act:
                raise ShapeMismatch("two consecutive activation layers")
            if layer.fn not in (RELU, IDENTITY):
                raise UnknownLayerKind(f"unknown activation {layer.fn!r}")
            prev_act = True
            shapes.append(shape)
            continue
        prev_act = False
        if isinstance(layer, Dense):
            w = np.asarray(layer.weight, dtype=float)
            b = np.asarray(layer.bias, dtype=float)
            if w.ndim != 2:
                raise ShapeMismatch("dense weight must be 2-D")
            if b.shape != (w.shape[0],):
                raise ShapeMismatch(
                    f"dense bias length {b.shape} does not match weight rows {w.shape[0]}"
                )
            if w.shape[1] != _flat_dim(shape):
                raise ShapeMismatch(
                    f"dense expects input dim {w.shape[1]}, got {_flat_dim(shape)}"
                )
            shape = w.shape[0]
        elif isinstance(layer, Conv2d):
            h, w_, c = _as_spatial(shape)
            k = np.asarray(layer.kernel, dtype=float)
            if k.ndim != 4:
                raise ShapeMismatch("conv kernel must be 4-D (out_ch, in_ch, kh, kw)")
            oc, ic, kh, kw = k.shape
            if ic != c:
                raise ShapeMismatch(f"conv expects {ic} input channels, got {c}")
            if np.asarray(layer.bias).shape != (oc,):
                raise ShapeMismatch("conv bias length does not match out channels")
            sh, sw = layer.stride
            if sh < 1 or sw < 1:
                raise ShapeMismatch("stride components must be >= 1")
            oh, ow = conv_out_hw(h, w_, kh, kw, sh, sw, layer.padding)
            shape = (oh, ow, oc)
        elif isinstance(layer, (AvgPool2d, MaxPool2d)):
            h, w_, c = _as_spatial(shape)
            ph, pw = layer.pool
            sh, sw = layer.stride
            if min(ph, pw, sh, sw) < 1:
                raise ShapeMismatch("pool/stride components must be >= 1")
            oh, ow = pool_out_hw(h, w_, ph, pw, sh, sw)
            shape = (oh, ow, c)
        else:
            raise UnknownLayerKind(f"unsupported layer {layer!r}")
        shapes.append(shape)
    return shapes


# ---------------------------------------------------------------------------
# Evaluation helpers.  All accept a batch axis in front of (h, w, c).
# ---------------------------------------------------------------------------

def _pad_same(x, kh, kw, sh, sw):
    h, w = x.shape[-3], x.shape[-2]
    pt, pb, pl, pr = same_padding(h, w, kh, kw, sh, sw)
    pads = [(0, 0)] * (x.ndim - 3) + [(pt, pb), (pl, pr), (0, 0)]
    return np.pad(x, pads)


def conv2d_apply(x, kernel, stride, padding, bias=None):
    """x: (..., h, w, c) -> (..., oh, ow, oc)."""
    oc, ic, kh, kw = kernel.shape
    sh, sw = stride
    h, w = x.shape[-3], x.shape[-2]
    oh, ow = conv_out_hw(h, w, kh, kw, sh, sw, padding)
    xp = _pad_same(x, kh, kw, sh, sw) if padding == SAME else x
    out = np.zeros(x.shape[:-3] + (oh, ow, oc))
    for dy in range(kh):
        for dx in range(kw):
            patch = xp[..., dy : dy + oh * sh : sh, dx : dx + ow * sw : sw, :]
            out += np.einsum("...hwc,oc->...hwo", patch, kernel[:, :, dy, dx])
    if bias is not None:
        out = out + bias
    return out


def _window_stack(x, ph, pw, sh, sw):
    """Stack of the ph*pw window elements: (ph*pw, ..., oh, ow, c).

    Window elements appear in row-major (dy, dx) order, which fixes the
    first-index tie-break used for max-pool subgradients.
    """
    h, w = x.shape[-3], x.shape[-2]
    oh, ow = pool_out_hw(h, w, ph, pw, sh, sw)
    slices = []
    for dy in range(ph):
        for dx in range(pw):
            slices.append(x[..., dy : dy + oh * sh : sh, dx : dx + ow * sw : sw, :])
    return np.stack(slices, axis=0)


def avgpool_apply(x, pool, stride):
    return _window_stack(x, pool[0], pool[1], stride[0], stride[1]).mean(axis=0)


def maxpool_apply(x, pool, stride):
    return _window_stack(x, pool[0], pool[1], stride[0], stride[1]).max(axis=0)


def maxpool_argmax(x, pool, stride):
    """Per-window argmax as (dy*pw + dx) indices, first-index tie-break."""
    return _window_stack(x, pool[0], pool[1], stride[0], stride[1]).argmax(axis=0)


# ---------------------------------------------------------------------------
# Forward / Jacobian / merging.
# ---------------------------------------------------------------------------

def forward(net: NetworkSpec, x) -> np.ndarray:
    """Evaluate the network on a flat input vector."""
    v = np.asarray(x, dtype=float).reshape(-1)
    if v.size != net.input_dim:
        raise ShapeMismatch(f"input has dim {v.size}, expected {net.input_dim}")
    shape = net.input_shape
    for layer, out_shape in zip(net.layers, net.shapes[1:]):
        if isinstance(layer, Activation):
            v = np.maximum(v, 0.0) if layer.fn == RELU else v
        elif isinstance(layer, Dense):
            v = layer.weight @ v + layer.bias
        else:
            img = v.reshape(_as_spatial(shape))
            if isinstance(layer, Conv2d):
                img = conv2d_apply(img, layer.kernel, layer.stride, layer.padding, layer.bias)
            elif isinstance(layer, AvgPool2d):
                img = avgpool_apply(img, layer.pool, layer.stride)
            else:
                img = maxpool_apply(img, layer.pool, layer.stride)
            v = img.reshape(-1)
        shape = out_shape
    return v


def jacobian_at(net: NetworkSpec, x) -> np.ndarray:
    """Chain-rule Jacobian at x.

    ReLU uses subgradient 0 at 0; max-pool rows are argmax indicators with
    first-index tie-break.
    """
    v = np.asarray(x, dtype=float).reshape(-1)
    if v.size != net.input_dim:
        raise ShapeMismatch(f"input has dim {v.size}, expected {net.input_dim}")
    n_in = v.size
    jac = np.eye(n_in)
    shape = net.input_shape
    for layer, out_shape in zip(net.layers, net.shapes[1:]):
        if isinstance(layer, Activation):
            if layer.fn == RELU:
                mask = v > 0.0
                jac = jac * mask[:, None]
                v = np.maximum(v, 0.0)
        elif isinstance(layer, Dense):
            jac = layer.weight @ jac
            v = layer.weight @ v + layer.bias
        else:
            spatial = _as_spatial(shape)
            img = v.reshape(spatial)
            cols = jac.T.reshape((n_in,) + spatial)
            if isinstance(layer, Conv2d):
                img = conv2d_apply(img, layer.kernel, layer.stride, layer.padding, layer.bias)
                cols = conv2d_apply(cols, layer.kernel, layer.stride, layer.padding)
            elif isinstance(layer, AvgPool2d):
                img = avgpool_apply(img, layer.pool, layer.stride)
                cols = avgpool_apply(cols, layer.pool, layer.stride)
            else:
                sel = maxpool_argmax(img, layer.pool, layer.stride)
                ph, pw = layer.pool
                sh, sw = layer.stride
                h, w, c = spatial
                oh, ow = pool_out_hw(h, w, ph, pw, sh, sw)
                oy, ox, och = np.meshgrid(
                    np.arange(oh), np.arange(ow), np.arange(c), indexing="ij"
                )
                dy, dx = sel // pw, sel % pw
                src = ((oy * sh + dy) * w + (ox * sw + dx)) * c + och
                jac = jac[src.reshape(-1)]
                v = maxpool_apply(img, layer.pool, layer.stride).reshape(-1)
                shape = out_shape
                continue
            v = img.reshape(-1)
            jac = cols.reshape(n_in, -1).T
        shape = out_shape
    return jac


def kink_margin(net: NetworkSpec, x) -> float:
    """Distance of x from the nearest activation/pooling kink.

    Minimum over ReLU layers of min |pre-activation| and over max-pool
    windows of (max - runner-up).  Entries that are exactly zero (flat
    regions produced by an earlier ReLU) and exact window ties are treated
    as safe: they are locally constant, not kinks, for generic inputs.
    Used to reject points where finite differences would straddle a kink.
    """
    v = np.asarray(x, dtype=float).reshape(-1)
    margin = np.inf
    shape = net.input_shape
    for layer, out_shape in zip(net.layers, net.shapes[1:]):
        if isinstance(layer, Activation):
            if layer.fn == RELU:
                nonzero = np.abs(v[v != 0.0])
                if nonzero.size:
                    margin = min(margin, float(nonzero.min()))
                v = np.maximum(v, 0.0)
        elif isinstance(layer, Dense):
            v = layer.weight @ v + layer.bias
        else:
            img = v.reshape(_as_spatial(shape))
            if isinstance(layer, Conv2d):
                img = conv2d_apply(img, layer.kernel, layer.stride, layer.padding, layer.bias)
            elif isinstance(layer, AvgPool2d):
                img = avgpool_apply(img, layer.pool, layer.stride)
            else:
                stack = _window_stack(img, *layer.pool, *layer.stride)
                if stack.shape[0] > 1:
                    part = np.sort(stack, axis=0)
                    gaps = (part[-1] - part[-2]).reshape(-1)
                    gaps = gaps[gaps > 0.0]
                    if gaps.size:
                        margin = min(margin, float(gaps.min()))
                img = stack.max(axis=0)
            v = img.reshape(-1)
        shape = out_shape
    return margin


def merge_linear(net: NetworkSpec) -> NetworkSpec:
    """Collapse adjacent Dense pairs (identity activations are dropped first).

    Applying W1 then W0 merges to weight W0@W1 and bias W0@b1 + b0; forward
    outputs are unchanged.
    """
    layers = [l for l in net.layers if not (isinstance(l, Activation) and l.fn == IDENTITY)]
    out = []
    for layer in layers:
        if out and isinstance(layer, Dense) and isinstance(out[-1], Dense):
            first = out.pop()
            out.append(
                Dense(
                    weight=np.asarray(layer.weight) @ np.asarray(first.weight),
                    bias=np.asarray(layer.weight) @ np.asarray(first.bias)
                    + np.asarray(layer.bias),
                )
            )
        else:
            out.append(layer)
    return NetworkSpec(input_shape=net.input_shape, layers=out, name=net.name)


# ---------------------------------------------------------------------------
# Interchange format.
# ---------------------------------------------------------------------------

def _layer_to_json(layer):
    if isinstance(layer, Dense):
        return {
            "kind": "dense",
            "weight": np.asarray(layer.weight).tolist(),
            "bias": np.asarray(layer.bias).tolist(),
        }
    if isinstance(layer, Activation):
        return {"kind": "activation", "fn": layer.fn}
    if isinstance(layer, Conv2d):
        return {
            "kind": "conv2d",
            "kernel": np.asarray(layer.kernel).tolist(),
            "bias": np.asarray(layer.bias).tolist(),
            "stride": list(layer.stride),
            "padding": layer.padding,
        }
    if isinstance(layer, (AvgPool2d, MaxPool2d)):
        return {
            "kind": layer.kind,
            "pool": list(layer.pool),
            "stride": list(layer.stride),
        }
    raise UnknownLayerKind(f"cannot serialize {layer!r}")


def dump(net: NetworkSpec) -> str:
    """Serialize to interchange JSON (floats keep full round-trip precision)."""
    shape = net.input_shape
    doc = {
        "name": net.name,
        "input_shape": [int(shape)] if isinstance(shape, (int, np.integer)) else list(shape),
        "layers": [_layer_to_json(l) for l in net.layers],
    }
    return json.dumps(doc, indent=1)


def _require(doc, key, types, ctx):
    if key not in doc:
        raise ParseError(f"{ctx}: missing field {key!r}")
    val = doc[key]
    if types is not None and not isinstance(val, types):
        raise ParseError(f"{ctx}: field {key!r} has wrong type")
    return val


def _array(val, ctx):
    try:
        arr = np.asarray(val, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{ctx}: not a numeric array") from exc
    if arr.dtype.kind != "f" or not np.isfinite(arr).all():
        raise ParseError(f"{ctx}: entries must be finite numbers")
    return arr


def load(text) -> NetworkSpec:
    """Parse and validate an interchange JSON document."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError("top level must be an object")
    name = _require(doc, "name", str, "document")
    shape_list = _require(doc, "input_shape", list, "document")
    if len(shape_list) == 1:
        input_shape = int(shape_list[0])
    elif len(shape_list) == 3:
        input_shape = tuple(int(v) for v in shape_list)
    else:
        raise ParseError("input_shape must have length 1 or 3")
    layers_doc = _require(doc, "layers", list, "document")
    layers = []
    for i, ld in enumerate(layers_doc):
        ctx = f"layer {i}"
        if not isinstance(ld, dict):
            raise ParseError(f"{ctx}: must be an object")
        kind = _require(ld, "kind", str, ctx)
        if kind == "dense":
            layers.append(
                Dense(weight=_array(_require(ld, "weight", list, ctx), ctx),
                      bias=_array(_require(ld, "bias", list, ctx), ctx))
            )
        elif kind == "activation":
            fn = _require(ld, "fn", str, ctx)
            if fn not in (RELU, IDENTITY):
                raise UnknownLayerKind(f"{ctx}: unknown activation {fn!r}")
            layers.append(Activation(fn=fn))
        elif kind == "conv2d":
            stride = _require(ld, "stride", list, ctx)
            padding = _require(ld, "padding", str, ctx)
            if padding not in (VALID, SAME):
                raise ParseError(f"{ctx}: unknown padding {padding!r}")
            layers.append(
                Conv2d(
                    kernel=_array(_require(ld, "kernel", list, ctx), ctx),
                    bias=_array(_require(ld, "bias", list, ctx), ctx),
                    stride=tuple(int(v) for v in stride),
                    padding=padding,
                )
            )
        elif kind in ("avgpool2d", "maxpool2d"):
            pool = tuple(int(v) for v in _require(ld, "pool", list, ctx))
            stride = tuple(int(v) for v in _require(ld, "stride", list, ctx))
            cls = AvgPool2d if kind == "avgpool2d" else MaxPool2d
            layers.append(cls(pool=pool, stride=stride))
        else:
            raise UnknownLayerKind(f"{ctx}: unknown kind {kind!r}")
    return NetworkSpec(input_shape=input_shape, layers=layers, name=name)
