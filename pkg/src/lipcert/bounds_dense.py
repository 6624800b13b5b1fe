"""Certified Lipschitz upper bounds for fully-connected ReLU networks.

Bounds, for weights W_0..W_l and induced norm ||.||:

* worst bound:      K* = prod ||W_r||
* chunked subsets:  K1 = 2^-l sum over activation subsets of products of
                    partial-product norms ||W_(t,s)||, W_(t,s) = W_{t-1}..W_s
* SVD sandwich:     K2 = prod over interfaces of the exact max over 0/1
                    corner diagonals of a sandwiched factor norm
* abs product:      K3 = ||W_l^abs .. W_0^abs||           (l1 / linf only)
* abs of chunks:    K4 = 2^-l sum over subsets of ||prod of chunk-abs||
                                                          (l1 / linf only)
* brute force:      K  = exact max over all 0/1 activation corners

The ordering K <= K4 <= min(K1, K3) <= max(K1, K3) <= K* holds in l1/linf,
and K <= K2 <= K* holds in every induced norm.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import (
    DepthTooLarge,
    TooManyNeurons,
    UnsupportedLayer,
    UnsupportedNorm,
    WidthTooLarge,
)
from .linalg import L1, L2, LINF
from .netmodel import Activation, Dense, NetworkSpec, RELU

DEPTH_CAP = 24
WIDTH_CAP = 20
NEURON_CAP = 22


def dense_weights(net: NetworkSpec) -> list:
    """Weight matrices of a strictly alternating Dense/ReLU network."""
    weights = []
    expect_dense = True
    for layer in net.layers:
        if expect_dense:
            if not isinstance(layer, Dense):
                raise UnsupportedLayer(
                    f"expected a dense layer, got {layer.kind}; bounds need a "
                    "dense/ReLU alternation (run merge_linear first)"
                )
            weights.append(np.asarray(layer.weight, dtype=float))
        else:
            if not (isinstance(layer, Activation) and layer.fn == RELU):
                raise UnsupportedLayer(
                    f"expected a ReLU activation between dense layers, got {layer.kind}"
                )
        expect_dense = not expect_dense
    if expect_dense or not weights:
        raise UnsupportedLayer("network must end with a dense layer")
    return weights


class PartialProducts:
    """Table of chunk products W_(t,s) = W_{t-1} ... W_s for 0 <= s < t <= l+1.

    Norms and element-wise absolute values are cached; the table is shared
    between K1 and K4 and across norms.
    """

    def __init__(self, weights):
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        self.n = len(self.weights)  # l + 1 matrices
        self._prod = {}
        self._abs = {}
        self._norms = {}

    def product(self, t: int, s: int) -> np.ndarray:
        if not 0 <= s < t <= self.n:
            raise ValueError(f"bad chunk ({t},{s})")
        key = (t, s)
        if key not in self._prod:
            if t == s + 1:
                self._prod[key] = self.weights[s]
            else:
                self._prod[key] = self.weights[t - 1] @ self.product(t - 1, s)
        return self._prod[key]

    def abs_product(self, t: int, s: int) -> np.ndarray:
        key = (t, s)
        if key not in self._abs:
            self._abs[key] = np.abs(self.product(t, s))
        return self._abs[key]

    def norm(self, t: int, s: int, p: str) -> float:
        key = (t, s, p)
        if key not in self._norms:
            self._norms[key] = linalg.norm(self.product(t, s), p)
        return self._norms[key]


def iter_cut_subsets(depth: int):
    """All subsets of cut positions {1..depth} as ascending tuples."""
    for mask in range(2**depth):
        yield tuple(r + 1 for r in range(depth) if mask >> r & 1)


def _chunks_of(cuts, depth):
    """Chunk index pairs (t, s) top-down for a subset of cuts."""
    edges = (depth + 1,) + tuple(reversed(cuts)) + (0,)
    return list(zip(edges[:-1], edges[1:]))


def k_star(net: NetworkSpec, norm: str) -> float:
    """Product of per-layer weight norms."""
    return float(np.prod([linalg.norm(w, norm) for w in dense_weights(net)]))


def k1(net: NetworkSpec, norm: str, cap: int = DEPTH_CAP, products=None) -> float:
    """Subset sum of chunk-norm products.

    Evaluated by dynamic programming over chains: A(t) = sum_{s<t} A(s) *
    ||W_(t,s)||, which accumulates exactly the 2^l subset terms.
    """
    weights = dense_weights(net)
    depth = len(weights) - 1
    if depth > cap:
        raise DepthTooLarge(f"depth {depth} exceeds cap {cap}")
    pp = products or PartialProducts(weights)
    acc = [1.0] + [0.0] * (depth + 1)
    for t in range(1, depth + 2):
        acc[t] = sum(acc[s] * pp.norm(t, s, norm) for s in range(t))
    return acc[depth + 1] / 2.0**depth


def k3(net: NetworkSpec, norm: str) -> float:
    """Norm of the product of element-wise absolute weight matrices."""
    if norm not in (L1, LINF):
        raise UnsupportedNorm("K3 is only valid in l1 and linf")
    weights = dense_weights(net)
    prod = np.abs(weights[-1])
    for w in weights[-2::-1]:
        prod = prod @ np.abs(w)
    return linalg.norm(prod, norm)


def k4(net: NetworkSpec, norm: str, cap: int = DEPTH_CAP, products=None) -> float:
    """Subset sum of norms of products of chunk-abs matrices.

    Each chunk is the element-wise absolute value of a partial product (not
    the product of absolute values); chains are multiplied top-down so the
    running product keeps the small output row count.
    """
    if norm not in (L1, LINF):
        raise UnsupportedNorm("K4 is only valid in l1 and linf")
    weights = dense_weights(net)
    depth = len(weights) - 1
    if depth > cap:
        raise DepthTooLarge(f"depth {depth} exceeds cap {cap}")
    pp = products or PartialProducts(weights)
    total = 0.0
    for cuts in iter_cut_subsets(depth):
        prod = None
        for t, s in _chunks_of(cuts, depth):
            block = pp.abs_product(t, s)
            prod = block if prod is None else prod @ block
        total += linalg.norm(prod, norm)
    return total / 2.0**depth


def _sqrt_halves(sigma, rows, cols):
    """Left (rows x r) and right (r x cols) rectangular diagonal sqrt factors."""
    r = len(sigma)
    root = np.sqrt(sigma)
    left = np.zeros((rows, r))
    left[:r, :r] = np.diag(root)
    right = np.zeros((r, cols))
    right[:r, :r] = np.diag(root)
    return left, right


def _corner_max_norm(a: np.ndarray, b: np.ndarray, norm: str) -> float:
    """max over d in {0,1}^w of ||a @ diag(d) @ b|| by exact enumeration.

    Meet-in-the-middle over the bit halves keeps memory at 2^(w/2) matrices.
    """
    w = a.shape[1]
    outer = np.einsum("ik,kj->kij", a, b)  # (w, rows, cols)

    def subset_sums(mats):
        out = np.zeros((1,) + mats.shape[1:])
        for k in range(len(mats)):
            out = np.concatenate([out, out + mats[k]], axis=0)
        return out

    lo = subset_sums(outer[: w // 2])
    hi = subset_sums(outer[w // 2 :])
    best = 0.0
    for sum_hi in hi:
        stack = lo + sum_hi
        best = max(best, float(linalg.batched_norm(stack, norm).max()))
    return best


def k2(net: NetworkSpec, norm: str, width_cap: int = WIDTH_CAP) -> float:
    """Product over interfaces of the exact corner max of the SVD sandwich.

    The interchanged square-root halves follow the l1/linf prescription
    (end factors keep their orthogonal sides); for l2 the orthogonal end
    factors are dropped.
    """
    weights = dense_weights(net)
    depth = len(weights) - 1
    if depth == 0:
        return linalg.norm(weights[0], norm)
    widths = [w.shape[0] for w in weights[:-1]]
    too_wide = [w for w in widths if w > width_cap]
    if too_wide:
        raise WidthTooLarge(f"hidden width {max(too_wide)} exceeds cap {width_cap}")

    facs = [linalg.svd(w) for w in weights]
    total = 1.0
    for i in range(depth):
        fi, fj = facs[i], facs[i + 1]
        rows_i, cols_i = weights[i].shape
        rows_j, cols_j = weights[i + 1].shape
        left_i, _ = _sqrt_halves(fi.sigma, rows_i, cols_i)
        _, right_j = _sqrt_halves(fj.sigma, rows_j, cols_j)
        if i == 0:
            if norm == L2:
                s0 = np.zeros((rows_i, cols_i))
                k = len(fi.sigma)
                s0[:k, :k] = np.diag(fi.sigma)
                b = fi.u @ s0
            else:
                b = weights[0]
        else:
            b = fi.u @ left_i
        if i + 1 == depth:
            if norm == L2:
                sl = np.zeros((rows_j, cols_j))
                k = len(fj.sigma)
                sl[:k, :k] = np.diag(fj.sigma)
                a = sl @ fj.vt
            else:
                a = weights[depth]
        else:
            a = right_j @ fj.vt
        total *= _corner_max_norm(a, b, norm)
    return float(total)


def _corner_masks(width: int) -> np.ndarray:
    return (np.arange(2**width)[:, None] >> np.arange(width)[None, :] & 1).astype(float)


def brute_force_k(net: NetworkSpec, norm: str, neuron_cap: int = NEURON_CAP) -> float:
    """Exact max over all 0/1 activation corners of the gradient-product norm."""
    weights = dense_weights(net)
    widths = [w.shape[0] for w in weights[:-1]]
    if sum(widths) > neuron_cap:
        raise TooManyNeurons(f"{sum(widths)} hidden neurons exceed cap {neuron_cap}")
    stack = weights[0][None, :, :]
    for i, w in enumerate(weights[1:]):
        masks = _corner_masks(widths[i])
        expanded = stack[:, None, :, :] * masks[None, :, :, None]
        expanded = expanded.reshape(-1, stack.shape[1], stack.shape[2])
        stack = np.einsum("ok,nkj->noj", w, expanded)
    best = 0.0
    chunk = 65536
    for base in range(0, len(stack), chunk):
        best = max(best, float(linalg.batched_norm(stack[base : base + chunk], norm).max()))
    return best


@dataclass
class BoundReport:
    """Named bound values for one network and norm, plus provenance."""

    norm: str
    values: dict = field(default_factory=dict)
    skipped: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    term_count: int = 0

    def check_ordering(self, slack: float = 1e-9) -> list:
        """Violated ordering relations, empty when certified chain holds."""
        v = self.values
        bad = []

        def le(x, y):
            if x in v and y in v and v[x] > v[y] * (1 + slack) + slack:
                bad.append(f"{x} > {y}")

        le("K", "K4")
        le("K4", "K1")
        le("K4", "K3")
        le("K1", "K*")
        le("K3", "K*")
        le("K", "K2")
        le("K2", "K*")
        return bad


def bound_report(
    net: NetworkSpec,
    norm: str,
    include_brute: bool = False,
    depth_cap: int = DEPTH_CAP,
    width_cap: int = WIDTH_CAP,
    neuron_cap: int = NEURON_CAP,
) -> BoundReport:
    """All computable bounds with timings; inapplicable bounds are recorded
    with the reason instead of failing the whole report."""
    weights = dense_weights(net)
    depth = len(weights) - 1
    report = BoundReport(norm=norm, term_count=2**depth)
    pp = PartialProducts(weights)

    tasks = [
        ("K*", lambda: k_star(net, norm)),
        ("K1", lambda: k1(net, norm, cap=depth_cap, products=pp)),
        ("K2", lambda: k2(net, norm, width_cap=width_cap)),
        ("K3", lambda: k3(net, norm)),
        ("K4", lambda: k4(net, norm, cap=depth_cap, products=pp)),
    ]
    if include_brute:
        tasks.append(("K", lambda: brute_force_k(net, norm, neuron_cap=neuron_cap)))
    for name, fn in tasks:
        start = time.perf_counter()
        try:
            report.values[name] = fn()
        except (UnsupportedNorm, WidthTooLarge, DepthTooLarge, TooManyNeurons) as exc:
            report.skipped[name] = f"{type(exc).__name__}: {exc}"
        report.timings[name] = time.perf_counter() - start
    return report
