"""Benchmark network generators with closed-form reference behaviour.

Three families:

* squaring nets: deep ReLU nets whose output is the partial sum
  S_l(x) = x - sum_{r=1..l} g_r(x)/4^r of the tent-map series for x - x^2,
  so S_l -> x^2 on [0, 1] at rate 4^{-l};
* product nets: ReLU nets converging to T(x, y) = x*y on [-1, 1]^2 built
  from a 13-node piecewise-linear finite-element mesh and a folding map;
* random dense nets and small LeNet-style CNN architectures (models A/B/C)
  with seeded random weights.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSeries
from .netmodel import (
    Activation,
    AvgPool2d,
    Conv2d,
    Dense,
    MaxPool2d,
    NetworkSpec,
    RELU,
)

X2_SYMMETRIC = "symmetric"  # g(x) = 1 - R(2x-1) - R(1-2x)
X2_ASYMMETRIC = "asymmetric"  # g(x) = R(2x) - R(4x-2)

XY_HAT_A = "hata"  # reference hat with 3 inner ReLU terms
XY_HAT_B = "hatb"  # symmetric 4-term variant


@dataclass
class BenchSpec:
    """Parameters of a generated benchmark network."""

    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def build(self) -> NetworkSpec:
        if self.kind == "x2":
            return build_x2_net(**self.params)
        if self.kind == "xy":
            return build_xy_net(**self.params)
        if self.kind == "random":
            return build_random_net(seed=self.seed, **self.params)
        if self.kind == "mnist-cnn":
            return build_mnist_cnn(seed=self.seed, **self.params)
        raise ValueError(f"unknown benchmark kind {self.kind!r}")


# ---------------------------------------------------------------------------
# x^2 approximants
# ---------------------------------------------------------------------------

def build_x2_net(depth: int, variant: str = X2_SYMMETRIC) -> NetworkSpec:
    """ReLU net with `depth` hidden layers of width 3 computing S_depth.

    Two hat neurons rebuild the tent map, one accumulator neuron carries the
    running partial sum; consecutive linear pairs are already merged.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if variant == X2_SYMMETRIC:
        w_first = np.array([[2.0], [-2.0], [1.0]])
        b_first = np.array([-1.0, 1.0, 0.0])
        hat_rows = np.array([[-2.0, -2.0, 0.0], [2.0, 2.0, 0.0]])
        hat_bias = np.array([1.0, -1.0])
        # g = 1 - u1 - u2: the accumulator subtracts g/4^r.
        g_row = np.array([-1.0, -1.0])
        g_const = 1.0
    elif variant == X2_ASYMMETRIC:
        w_first = np.array([[2.0], [4.0], [1.0]])
        b_first = np.array([0.0, -2.0, 0.0])
        hat_rows = np.array([[2.0, -2.0, 0.0], [4.0, -4.0, 0.0]])
        hat_bias = np.array([0.0, -2.0])
        # g = u1 - u2.
        g_row = np.array([1.0, -1.0])
        g_const = 0.0
    else:
        raise ValueError(f"unknown x2 variant {variant!r}")

    layers = [Dense(weight=w_first, bias=b_first), Activation(RELU)]
    for r in range(1, depth):
        acc = np.array([-g_row[0] / 4.0**r, -g_row[1] / 4.0**r, 1.0])
        w = np.vstack([hat_rows, acc])
        b = np.array([hat_bias[0], hat_bias[1], -g_const / 4.0**r])
        layers.append(Dense(weight=w, bias=b))
        layers.append(Activation(RELU))
    out = np.array([[-g_row[0] / 4.0**depth, -g_row[1] / 4.0**depth, 1.0]])
    layers.append(Dense(weight=out, bias=np.array([-g_const / 4.0**depth])))
    return NetworkSpec(input_shape=1, layers=layers, name=f"x2-{variant}-l{depth}")


def exact_L_x2(depth: int) -> float:
    """Exact Lipschitz constant of S_depth on [0, 1].

    Enumerates the 2^depth dyadic intervals; on interval j the tent iterate
    g_r has slope +-2^r with sign given by the parity of j >> (depth - r).
    The maximum equals 2 - 2^{-depth}.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    best = 0.0
    for j in range(2**depth):
        slope = 1.0
        for r in range(1, depth + 1):
            sign = 1.0 if ((j >> (depth - r)) % 2 == 0) else -1.0
            slope -= sign * 2.0**r / 4.0**r
        best = max(best, abs(slope))
    return best


# ---------------------------------------------------------------------------
# x*y approximants on the 13-node mesh
# ---------------------------------------------------------------------------

_ROT = np.array([[1.0, 1.0], [-1.0, 1.0]])  # 45-degree rotation, scale sqrt(2)

# Canonical node order.  Cell centers sit at (+-1/2, +-1/2); lattice nodes
# walk a serpentine over {-1,0,1}^2 with C at the origin.
_NODE_TABLE = [
    ("alpha", (0.5, 0.5), "hat", 2.0 * np.eye(2)),
    ("beta", (0.5, -0.5), "hat", 2.0 * np.eye(2)),
    ("gamma", (-0.5, -0.5), "hat", 2.0 * np.eye(2)),
    ("delta", (-0.5, 0.5), "hat", 2.0 * np.eye(2)),
    ("A", (1.0, 1.0), "corner", None),
    ("B", (0.0, 1.0), "hat", _ROT),
    ("C", (0.0, 0.0), "hat", _ROT),
    ("D", (1.0, 0.0), "hat", _ROT),
    ("E", (1.0, -1.0), "corner", None),
    ("F", (0.0, -1.0), "hat", _ROT),
    ("G", (-1.0, -1.0), "corner", None),
    ("H", (-1.0, 0.0), "hat", _ROT),
    ("I", (-1.0, 1.0), "corner", None),
]

# Coefficients over the canonical node order.
LAMBDA1_ROW = np.array([1.0, -1.0, 1.0, -1.0, 0, 0, 0, 0, 0, 0, 0, 0, 0])
LAMBDA2_ROW = np.array([0, 0, 0, 0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0])
E0_ROW = np.array([0.25, -0.25, 0.25, -0.25, 1.0, 0, 0, 0, -1.0, 0, 1.0, 0, -1.0])


class MeshBasis:
    """Geometry and direct evaluation of the 13 piecewise-linear basis hats.

    Used as the mesh-side oracle: all evaluation here goes through the
    closed-form hat max(0, 1 - max(|u|, |v|)), not through any network.
    """

    def __init__(self):
        self.names = [row[0] for row in _NODE_TABLE]
        self.coords = np.array([row[1] for row in _NODE_TABLE])
        self.kinds = [row[2] for row in _NODE_TABLE]
        self.maps = [row[3] for row in _NODE_TABLE]

    def phi_values(self, points) -> np.ndarray:
        """(n, 2) points -> (n, 13) basis values."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros((len(pts), 13))
        for j, (coord, kind, mat) in enumerate(zip(self.coords, self.kinds, self.maps)):
            if kind == "hat":
                uv = (pts - coord) @ mat.T
                out[:, j] = np.maximum(0.0, 1.0 - np.abs(uv).max(axis=1))
            else:
                sx, sy = np.sign(coord)
                out[:, j] = np.maximum(0.0, sx * pts[:, 0] + sy * pts[:, 1] - 1.0)
        return out

    def lambda_map(self, points) -> np.ndarray:
        phi = self.phi_values(points)
        return np.stack([phi @ LAMBDA1_ROW, phi @ LAMBDA2_ROW], axis=1)

    def e0(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        t = pts[:, 0] * pts[:, 1]
        lam = self.lambda_map(pts)
        return t - 0.25 * lam[:, 0] * lam[:, 1]

    def series(self, points, terms: int) -> np.ndarray:
        """Partial sum sum_{r=0..terms} e0(Lambda^r) / 4^r, evaluated directly."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        total = np.zeros(len(pts))
        cur = pts
        for r in range(terms + 1):
            total += self.e0(cur) / 4.0**r
            cur = self.lambda_map(cur)
        return total

    def triangles(self):
        """Vertex coordinate triples of the 16 mesh triangles."""
        by_name = dict(zip(self.names, self.coords))
        squares = [
            ("alpha", ["C", "D", "A", "B"]),
            ("beta", ["F", "E", "D", "C"]),
            ("gamma", ["G", "F", "C", "H"]),
            ("delta", ["H", "C", "B", "I"]),
        ]
        tris = []
        for center, ring in squares:
            c = by_name[center]
            for i in range(4):
                tris.append((c, by_name[ring[i]], by_name[ring[(i + 1) % 4]]))
        return tris


_HAT_LAYERS = {
    XY_HAT_A: (
        np.array([[1.0, 1.0], [1.0, -1.0], [-1.0, 0.0]]),
        np.array([0.0, 0.0, 1.0]),
        np.array([-1.0, -1.0, -1.0]),
        2.0,
    ),
    XY_HAT_B: (
        np.array([[0.5, 0.5], [0.5, -0.5], [-0.5, 0.5], [-0.5, -0.5]]),
        np.array([0.0, 0.0, 0.0, 0.0]),
        np.array([-1.0, -1.0, -1.0, -1.0]),
        1.0,
    ),
}


def build_xy_net(terms: int, variant: str = XY_HAT_A) -> NetworkSpec:
    """ReLU net computing sum_{r=0..terms} g_r/4^r with g_r = e0 o Lambda^r.

    Each term costs one two-ReLU block; the running sum rides through the
    blocks on a two-neuron identity channel R(s) - R(-s).
    """
    if terms < 0:
        raise ValueError("terms must be >= 0")
    if variant not in _HAT_LAYERS:
        raise ValueError(f"unknown xy variant {variant!r}")
    f0_rows, f0_bias, f1_row, f1_bias = _HAT_LAYERS[variant]
    k = len(f0_rows)
    mesh = MeshBasis()

    def block_layer0(lam_rows, lam_bias, carry_row):
        """First linear layer of a block.

        lam_rows: (2, prev) rows producing (Lambda1, Lambda2) from the
        previous features; carry_row: row producing the incoming sum, or
        None for the first block.
        """
        rows, bias = [], []
        for coord, kind, mat in zip(mesh.coords, mesh.kinds, mesh.maps):
            if kind == "hat":
                local = f0_rows @ mat  # (k, 2) acting on (Lambda1, Lambda2)
                shift = local @ np.asarray(coord)
                rows.append(local @ lam_rows)
                bias.append(f0_bias - shift + local @ lam_bias)
            else:
                s = np.sign(coord)
                rows.append(s[None, :] @ lam_rows)
                bias.append(np.array([-1.0]) + s @ lam_bias)
        if carry_row is not None:
            rows.append(carry_row[None, :])
            rows.append(-carry_row[None, :])
            bias.append(np.zeros(1))
            bias.append(np.zeros(1))
        return np.vstack(rows), np.concatenate(bias)

    def block_layer1(with_carry):
        width0 = 9 * k + 4 + (2 if with_carry else 0)
        n_out = 13 + (2 if with_carry else 0)
        w = np.zeros((n_out, width0))
        b = np.zeros(n_out)
        pos = 0
        for j, kind in enumerate(mesh.kinds):
            if kind == "hat":
                w[j, pos : pos + k] = f1_row
                b[j] = f1_bias
                pos += k
            else:
                w[j, pos] = 1.0
                pos += 1
        if with_carry:
            w[13, pos], w[13, pos + 1] = 1.0, -1.0
            w[14, pos], w[14, pos + 1] = -1.0, 1.0
        return w, b

    input_rows = np.eye(2)  # block 0 reads (x, y) directly
    input_bias = np.zeros(2)
    layers = []
    carry_row = None
    for r in range(terms + 1):
        w0, b0 = block_layer0(input_rows, input_bias, carry_row)
        layers += [Dense(weight=w0, bias=b0), Activation(RELU)]
        w1, b1 = block_layer1(with_carry=carry_row is not None)
        layers += [Dense(weight=w1, bias=b1), Activation(RELU)]
        n_feat = w1.shape[0]
        # Features after this block: 13 basis values (+ carry pair).
        lam_rows = np.zeros((2, n_feat))
        lam_rows[0, :13] = LAMBDA1_ROW
        lam_rows[1, :13] = LAMBDA2_ROW
        input_rows, input_bias = lam_rows, np.zeros(2)
        carry_row = np.zeros(n_feat)
        carry_row[:13] = E0_ROW / 4.0**r
        if n_feat > 13:
            carry_row[13], carry_row[14] = 1.0, -1.0
    layers.append(Dense(weight=carry_row[None, :], bias=np.zeros(1)))
    return NetworkSpec(input_shape=2, layers=layers, name=f"xy-{variant}-n{terms}")


# ---------------------------------------------------------------------------
# Random dense nets and CNN architectures
# ---------------------------------------------------------------------------

def build_random_net(dims, seed: int = 0) -> NetworkSpec:
    """Dense ReLU net with i.i.d. standard normal weights and zero biases."""
    dims = [int(d) for d in dims]
    if len(dims) < 2:
        raise ValueError("dims needs at least input and output size")
    rng = np.random.default_rng(seed)
    layers = []
    for i in range(len(dims) - 1):
        w = rng.standard_normal((dims[i + 1], dims[i]))
        layers.append(Dense(weight=w, bias=np.zeros(dims[i + 1])))
        if i < len(dims) - 2:
            layers.append(Activation(RELU))
    return NetworkSpec(input_shape=dims[0], layers=layers, name=f"random-{seed}")


_MNIST_ARCH = {
    # (conv1 filters, pool1 kind, conv2 filters, dense width)
    "A": (5, "avg", 10, 20),
    "B": (5, "max", 10, 20),
    "C": (10, "max", 20, 40),
}


def build_mnist_cnn(model: str, seed: int = 0) -> NetworkSpec:
    """LeNet-style 28x28x1 CNN, models A/B/C; 5x5 valid convs, 2x2/2 pools.

    Weights use seeded fan-scaled normal init (glorot); second pool is always
    max, ReLU after both convs and the first dense layer.
    """
    model = model.upper()
    if model not in _MNIST_ARCH:
        raise ValueError(f"unknown model {model!r} (choose A, B or C)")
    c1, pool1, c2, dense_w = _MNIST_ARCH[model]
    rng = np.random.default_rng(seed)

    def glorot_conv(oc, ic, kh, kw):
        std = np.sqrt(2.0 / (ic * kh * kw + oc * kh * kw))
        return rng.normal(0.0, std, size=(oc, ic, kh, kw))

    def glorot_dense(out_d, in_d):
        std = np.sqrt(2.0 / (in_d + out_d))
        return rng.normal(0.0, std, size=(out_d, in_d))

    pool1_cls = AvgPool2d if pool1 == "avg" else MaxPool2d
    layers = [
        Conv2d(kernel=glorot_conv(c1, 1, 5, 5), bias=np.zeros(c1)),
        Activation(RELU),
        pool1_cls(pool=(2, 2), stride=(2, 2)),
        Conv2d(kernel=glorot_conv(c2, c1, 5, 5), bias=np.zeros(c2)),
        Activation(RELU),
        MaxPool2d(pool=(2, 2), stride=(2, 2)),
        Dense(weight=glorot_dense(dense_w, 4 * 4 * c2), bias=np.zeros(dense_w)),
        Activation(RELU),
        Dense(weight=glorot_dense(10, dense_w), bias=np.zeros(10)),
    ]
    return NetworkSpec(input_shape=(28, 28, 1), layers=layers, name=f"mnist-{model}-{seed}")


def growth_rate(series) -> list:
    """G[i] = (s[i+2] - s[i+1]) / (s[i+1] - s[i]) for consecutive bounds."""
    s = [float(v) for v in series]
    if len(s) < 3:
        raise ValueError("series needs at least 3 values")
    out = []
    for i in range(len(s) - 2):
        den = s[i + 1] - s[i]
        if den == 0.0:
            raise DegenerateSeries(f"zero increment at index {i}")
        out.append((s[i + 2] - s[i + 1]) / den)
    return out
