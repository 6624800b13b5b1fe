import numpy as np
import pytest

from lipcert import benchgen, bounds_dense, netmodel
from lipcert.bounds_dense import (
    PartialProducts,
    bound_report,
    brute_force_k,
    dense_weights,
    iter_cut_subsets,
    k1,
    k2,
    k3,
    k4,
    k_star,
)
from lipcert.errors import (
    DepthTooLarge,
    TooManyNeurons,
    UnsupportedLayer,
    UnsupportedNorm,
    WidthTooLarge,
)
from lipcert.netmodel import Activation, Dense, NetworkSpec

# Reference values for the squaring nets (symmetric variant, linf norm).
TABLE_KSTAR = [3.0, 9.0, 33.0, 129.0, 513.0, 2049.0]
TABLE_K1 = [2.0, 3.53125, 6.92187, 14.42877, 30.75637, 66.00227]
TABLE_K2 = [1.5, 3.64531, 6.45925, 12.45882, 24.68184, 49.24501]
TABLE_K3 = [2.0, 3.0, 4.0, 5.0, 6.0, 7.0]
TABLE_K4 = [1.5, 1.75, 1.875, 1.9375, 1.96875, 1.984375]


def two_neuron_toy():
    return NetworkSpec(
        input_shape=1,
        layers=[
            Dense(weight=np.array([[1.0], [1.0]]), bias=np.zeros(2)),
            Activation("relu"),
            Dense(weight=np.array([[1.0, 1.0]]), bias=np.zeros(1)),
        ],
    )


def test_table_reference_values():
    for i, depth in enumerate(range(1, 7)):
        net = benchgen.build_x2_net(depth, "symmetric")
        assert k_star(net, "linf") == TABLE_KSTAR[i]
        assert k3(net, "linf") == TABLE_K3[i]
        assert k4(net, "linf") == TABLE_K4[i]
        assert abs(k1(net, "linf") - TABLE_K1[i]) < 1e-4
        assert abs(k2(net, "linf") - TABLE_K2[i]) < 1e-4


def test_single_layer_degenerate_bounds():
    w = np.array([[1.0, -2.0], [3.0, 0.5]])
    net = NetworkSpec(input_shape=2, layers=[Dense(weight=w, bias=np.zeros(2))])
    for p in ["l1", "linf"]:
        v = k_star(net, p)
        assert k1(net, p) == v
        assert k2(net, p) == pytest.approx(v, abs=1e-9)
        assert k4(net, p) == v
    assert k2(net, "l2") == pytest.approx(k_star(net, "l2"), abs=1e-9)


def test_brute_force_hand_enumeration():
    # corners of (d1, d2): |d1 + d2| -> max 2
    assert brute_force_k(two_neuron_toy(), "linf") == 2.0


def test_brute_force_x2_depth1_matches_exact_L():
    net = benchgen.build_x2_net(1, "symmetric")
    assert brute_force_k(net, "linf") == 1.5


def test_brute_force_zero_weights():
    net = NetworkSpec(
        input_shape=2,
        layers=[
            Dense(weight=np.zeros((3, 2)), bias=np.zeros(3)),
            Activation("relu"),
            Dense(weight=np.zeros((1, 3)), bias=np.zeros(1)),
        ],
    )
    assert brute_force_k(net, "linf") == 0.0


def enumerated_k1(net, norm):
    """Oracle: K1 via literal subset enumeration on the partial products."""
    weights = dense_weights(net)
    depth = len(weights) - 1
    pp = PartialProducts(weights)
    total = 0.0
    for cuts in iter_cut_subsets(depth):
        edges = (depth + 1,) + tuple(reversed(cuts)) + (0,)
        term = 1.0
        for t, s in zip(edges[:-1], edges[1:]):
            term *= pp.norm(t, s, norm)
        total += term
    return total / 2.0**depth


def test_k1_dp_equals_enumeration():
    rng = np.random.default_rng(0)
    for dims in [[3, 4, 2], [2, 5, 4, 3], [4, 3, 3, 2, 2]]:
        net = benchgen.build_random_net(dims, seed=int(rng.integers(100)))
        for p in ["l1", "linf", "l2"]:
            assert k1(net, p) == pytest.approx(enumerated_k1(net, p), rel=1e-12)


def test_partial_products_consistency():
    weights = dense_weights(benchgen.build_random_net([4, 5, 6, 3, 2], seed=9))
    pp = PartialProducts(weights)
    full = pp.product(4, 0)
    np.testing.assert_allclose(full, pp.product(4, 2) @ pp.product(2, 0), rtol=1e-9)
    np.testing.assert_allclose(full, pp.product(4, 3) @ pp.product(3, 1) @ pp.product(1, 0), rtol=1e-9)


def test_ordering_chain_random_nets():
    for seed in range(30):
        net = benchgen.build_random_net([6, 7, 5, 3], seed=seed)
        for p in ["l1", "linf"]:
            kb = brute_force_k(net, p)
            v1, v2, v3, v4, vs = k1(net, p), k2(net, p), k3(net, p), k4(net, p), k_star(net, p)
            slack = 1 + 1e-9
            assert kb <= v4 * slack
            assert v4 <= min(v1, v3) * slack
            assert max(v1, v3) <= vs * slack
            assert kb <= v2 * slack
            assert v2 <= vs * slack


def test_k2_l2_bounds_brute_force():
    for seed in range(5):
        net = benchgen.build_random_net([4, 6, 3], seed=seed)
        assert brute_force_k(net, "l2") <= k2(net, "l2") * (1 + 1e-9)
        assert k2(net, "l2") <= k_star(net, "l2") * (1 + 1e-9)


def test_k1_degenerates_to_kstar_on_positive_scalar_chain():
    layers = []
    rng = np.random.default_rng(3)
    vals = rng.uniform(0.5, 2.0, 4)
    for i, v in enumerate(vals):
        layers.append(Dense(weight=np.array([[v]]), bias=np.zeros(1)))
        if i < len(vals) - 1:
            layers.append(Activation("relu"))
    net = NetworkSpec(input_shape=1, layers=layers)
    assert k1(net, "linf") == pytest.approx(k_star(net, "linf"), rel=1e-12)


def test_local_lipschitz_below_brute_force():
    net = benchgen.build_random_net([5, 6, 4, 2], seed=11)
    kb = brute_force_k(net, "linf")
    rng = np.random.default_rng(0)
    for _ in range(50):
        jac = netmodel.jacobian_at(net, rng.standard_normal(5))
        assert np.abs(jac).sum(axis=1).max() <= kb + 1e-9


def test_term_count_and_report():
    net = benchgen.build_random_net([8, 10, 6, 3], seed=0)
    rep = bound_report(net, "linf", include_brute=True)
    assert rep.term_count == 4  # 2^2 subsets
    assert set(rep.values) == {"K*", "K1", "K2", "K3", "K4", "K"}
    assert rep.check_ordering() == []


def test_report_l2_skips_abs_bounds():
    net = benchgen.build_random_net([8, 10, 6, 3], seed=1)
    rep = bound_report(net, "l2")
    assert "K3" not in rep.values and "K4" not in rep.values
    assert "UnsupportedNorm" in rep.skipped["K3"]
    assert "K1" in rep.values and "K2" in rep.values


def test_unsupported_norm_errors():
    net = benchgen.build_random_net([3, 4, 2], seed=0)
    with pytest.raises(UnsupportedNorm):
        k3(net, "l2")
    with pytest.raises(UnsupportedNorm):
        k4(net, "l2")


def test_caps():
    net = benchgen.build_random_net([3, 4, 4, 2], seed=0)
    with pytest.raises(DepthTooLarge):
        k1(net, "linf", cap=1)
    with pytest.raises(WidthTooLarge):
        k2(net, "linf", width_cap=3)
    with pytest.raises(TooManyNeurons):
        brute_force_k(net, "linf", neuron_cap=4)


def test_rejects_non_alternating_nets():
    net = NetworkSpec(
        input_shape=2,
        layers=[
            Dense(weight=np.eye(2), bias=np.zeros(2)),
            Dense(weight=np.eye(2), bias=np.zeros(2)),
        ],
    )
    with pytest.raises(UnsupportedLayer):
        k_star(net, "linf")


def test_k2_invariant_under_svd_sign_choices():
    # flipping matched singular-vector signs leaves every factor norm alone;
    # spot-check by comparing against an independent K2 on the transposed
    # problem (l1 <-> linf duality of the overall bound does not hold, so we
    # just re-run and require determinism plus the certified-bound property).
    net = benchgen.build_random_net([6, 8, 4], seed=21)
    v1 = k2(net, "linf")
    v2 = k2(net, "linf")
    assert v1 == v2
    assert brute_force_k(net, "linf") <= v1 * (1 + 1e-9)
