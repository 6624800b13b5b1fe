import numpy as np
import pytest

from lipcert import benchgen, bounds_conv, bounds_dense, linalg, lowering
from lipcert.bounds_conv import PlanProducts, brute_force_k_conv, conv_bounds
from lipcert.errors import DepthTooLarge, TooManyNeurons, UnsupportedNorm
from lipcert.netmodel import Activation, Conv2d, MaxPool2d, NetworkSpec


def single_maxpool_net():
    return NetworkSpec(
        input_shape=(3, 3, 1), layers=[MaxPool2d(pool=(2, 2), stride=(1, 1))]
    )


def toy_pool_plans():
    """Hand-built plans for W0, ReLU, (1,2)-pool over a 2x2 grid, W1.

    Returns (explicit_plan, implicit_plan, w0, w1); the pool stage couples a
    general mixing matrix below with a single separator of each kind.
    """
    rng = np.random.default_rng(0)
    w0 = rng.standard_normal((4, 4))
    w1 = rng.standard_normal((1, 2))
    pool = MaxPool2d(pool=(1, 2), stride=(1, 1))
    expl_block, _ = lowering.lower_maxpool_explicit(pool, (2, 2, 1))
    impl_block = lowering.lower_maxpool_implicit(pool, (2, 2, 1))

    def linear(m):
        return lowering.LinearBlock(matrix=m, bias=np.zeros(m.shape[0]))

    expl = lowering.LoweredPlan(
        approach="explicit",
        input_dim=4,
        blocks=[linear(w0), expl_block.stages[0], linear(w1)],
        separators=["relu", "sign"],
    )
    impl = lowering.LoweredPlan(
        approach="implicit",
        input_dim=4,
        blocks=[linear(w0), impl_block, linear(w1)],
        separators=["relu", "branch"],
    )
    return expl, impl, w0, w1


def test_dense_plan_equals_dense_bounds():
    net = benchgen.build_random_net([5, 6, 4, 2], seed=7)
    for approach in ["explicit", "implicit"]:
        plan = lowering.lower_network(net, approach)
        for p in ["l1", "linf"]:
            rep = conv_bounds(plan, p)
            assert rep.values["K*"] == pytest.approx(bounds_dense.k_star(net, p), rel=1e-12)
            assert rep.values["K1"] == pytest.approx(bounds_dense.k1(net, p), rel=1e-12)
            assert rep.values["K3"] == pytest.approx(bounds_dense.k3(net, p), rel=1e-12)
            assert rep.values["K4"] == pytest.approx(bounds_dense.k4(net, p), rel=1e-12)


def test_single_maxpool_explicit_kstar():
    plan = lowering.lower_network(single_maxpool_net(), "explicit")
    rep = conv_bounds(plan, "linf")
    assert rep.values["K*"] == 4.0  # both stage row-sums are 2


def test_single_maxpool_implicit_hand_values():
    plan = lowering.lower_network(single_maxpool_net(), "implicit")
    rep = conv_bounds(plan, "linf")
    # ||ones||_inf = 4; K1 = (4 + 4) / 2 = 4 with the selector factor pulled out
    assert rep.values["K*"] == 4.0
    assert rep.values["K1"] == 4.0
    assert rep.values["K4"] == 4.0


def test_single_maxpool_true_constant_is_one():
    for approach in ["explicit", "implicit"]:
        plan = lowering.lower_network(single_maxpool_net(), approach)
        k = brute_force_k_conv(plan, "linf")
        rep = conv_bounds(plan, "linf")
        assert k == pytest.approx(1.0, abs=1e-12)
        assert k <= rep.values["K4"] + 1e-9


def test_k1_matches_symbolic_expansion_toy():
    """Hand expansion of W0, ReLU, (1,2)-pool stage, W1.

    grad = W1 (M+ + z M-)/2 (I + Z)/2 W0 expands into four bounded terms:
    |W1 M+ W0| + |W1 M+||W0| + |W1||M- W0| + |W1||M-||W0|, all over 4.
    """
    plan, _, w0, w1 = toy_pool_plans()
    stage = plan.blocks[1]
    for p in ["l1", "linf"]:
        n = lambda m: linalg.norm(m, p)
        want = (
            n(w1 @ stage.m_plus @ w0)
            + n(w1 @ stage.m_plus) * n(w0)
            + n(w1) * n(stage.m_minus @ w0)
            + n(w1) * n(stage.m_minus) * n(w0)
        ) / 4.0
        assert conv_bounds(plan, p).values["K1"] == pytest.approx(want, rel=1e-12)


def test_k4_matches_symbolic_expansion_toy():
    plan, _, w0, w1 = toy_pool_plans()
    stage = plan.blocks[1]
    for p in ["l1", "linf"]:
        n = lambda m: linalg.norm(m, p)
        a = np.abs
        want = (
            n(a(w1 @ stage.m_plus @ w0))
            + n(a(w1 @ stage.m_plus) @ a(w0))
            + n(a(w1) @ a(stage.m_minus @ w0))
            + n(a(w1) @ a(stage.m_minus) @ a(w0))
        ) / 4.0
        assert conv_bounds(plan, p).values["K4"] == pytest.approx(want, rel=1e-12)


def test_implicit_k1_matches_symbolic_expansion_toy():
    """Same toy with the window form: cutting at the pool pulls out ||pattern||."""
    _, plan, w0, w1 = toy_pool_plans()
    ones = plan.blocks[1].ones
    for p in ["l1", "linf"]:
        n = lambda m: linalg.norm(m, p)
        want = (
            n(w1 @ ones @ w0)
            + n(w1 @ ones) * n(w0)
            + n(w1) * n(ones) * n(w0)
            + n(w1) * n(ones) * n(w0)
        ) / 4.0
        assert conv_bounds(plan, p).values["K1"] == pytest.approx(want, rel=1e-12)


def test_tiny_conv_relu_maxpool_brute_vs_k4():
    rng = np.random.default_rng(1)
    net = NetworkSpec(
        input_shape=(3, 3, 1),
        layers=[
            Conv2d(kernel=rng.standard_normal((1, 1, 2, 2)), bias=np.zeros(1)),
            Activation("relu"),
            MaxPool2d(pool=(2, 2), stride=(2, 2)),
        ],
    )
    for approach in ["explicit", "implicit"]:
        plan = lowering.lower_network(net, approach)
        for p in ["l1", "linf"]:
            k = brute_force_k_conv(plan, p)
            rep = conv_bounds(plan, p)
            assert 0 < k <= rep.values["K4"] * (1 + 1e-9)


def test_brute_force_agrees_between_approaches():
    # both selector families range over the same one-hot subgradients
    expl, impl, _, _ = toy_pool_plans()
    assert brute_force_k_conv(expl, "linf") == pytest.approx(
        brute_force_k_conv(impl, "linf"), rel=1e-12
    )


def test_dense_plan_brute_matches_dense_brute():
    net = benchgen.build_random_net([4, 5, 3], seed=3)
    plan = lowering.lower_network(net, "explicit")
    assert brute_force_k_conv(plan, "linf") == pytest.approx(
        bounds_dense.brute_force_k(net, "linf"), rel=1e-12
    )


@pytest.mark.parametrize("model", ["A", "B", "C"])
def test_cnn_ordering_invariants(model):
    net = benchgen.build_mnist_cnn(model, seed=0)
    for approach in ["explicit", "implicit"]:
        plan = lowering.lower_network(net, approach)
        pp = PlanProducts(plan)
        for p in ["l1", "linf"]:
            rep = conv_bounds(plan, p, products=pp)
            assert rep.check_ordering() == []


def test_effective_depths():
    net = benchgen.build_mnist_cnn("B", seed=0)
    assert lowering.lower_network(net, "explicit").effective_depth == 7
    assert lowering.lower_network(net, "implicit").effective_depth == 5
    net = benchgen.build_mnist_cnn("A", seed=0)
    assert lowering.lower_network(net, "explicit").effective_depth == 5
    assert lowering.lower_network(net, "implicit").effective_depth == 4


def test_errors():
    plan = lowering.lower_network(benchgen.build_mnist_cnn("A", seed=0), "implicit")
    with pytest.raises(UnsupportedNorm):
        conv_bounds(plan, "l2")
    with pytest.raises(DepthTooLarge):
        conv_bounds(plan, "linf", cap=2)
    with pytest.raises(TooManyNeurons):
        brute_force_k_conv(plan, "linf")
    with pytest.raises(ValueError):
        bounds_conv.conv_bounds_explicit(plan, "linf")
