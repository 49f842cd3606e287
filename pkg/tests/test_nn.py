import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pandemic_marl import nn
from pandemic_marl.errors import ConfigurationError, ContractViolation
from pandemic_marl.oracles import gradient_error, shipped_architectures


def test_zero_network_outputs_zero():
    net = nn.MLP([3, 4, 2])
    assert not net(np.ones((5, 3))).any()


def test_actor_head_squashes_into_unit_interval():
    rng = np.random.default_rng(0)
    net = nn.RegionNet(4, 3, 8, [8], 3, output="sigmoid", targets=[0, 2], members=2, rng=rng,
                       out_scale=5.0)
    y = net(rng.normal(scale=100.0, size=(50, 3, 4)))
    assert y.shape == (2, 50, 3) and np.all((y >= 0) & (y <= 1))


def test_tiny_network_against_hand_forward_pass():
    net = nn.MLP([2, 2, 1])
    v = net._views
    v["W0"][0] = [[0.5, -1.0], [0.25, 2.0]]
    v["b0"][0] = [0.1, -0.2]
    v["W1"][0] = [[1.5], [-0.5]]
    v["b1"][0] = [0.3]
    # independent scalar evaluation on input (1, -1)
    h1 = math.tanh(0.5 * 1 + 0.25 * -1 + 0.1)
    h2 = math.tanh(-1.0 * 1 + 2.0 * -1 - 0.2)
    expected = 1.5 * h1 - 0.5 * h2 + 0.3
    assert net(np.array([[1.0, -1.0]]))[0, 0, 0] == pytest.approx(expected, rel=1e-15)


def test_dimension_mismatch_is_contract_violation():
    with pytest.raises(ContractViolation):
        nn.MLP([3, 2])(np.ones((1, 4)))
    with pytest.raises(ContractViolation):
        nn.RegionNet(4, 3, 2, [2], 1)(np.ones((1, 2, 4)))


def test_parameter_count_fixed_by_architecture():
    net = nn.MLP([3, 5, 2], members=4, rng=np.random.default_rng(0))
    assert net.n_params == 4 * (3 * 5 + 5 + 5 * 2 + 2)
    with pytest.raises(ContractViolation):
        net.set_params(np.zeros(3))


def test_zero_upstream_gradient_gives_zero_gradient():
    rng = np.random.default_rng(1)
    net = nn.MLP([3, 4, 2], rng=rng, out_scale=1.0)
    y, cache = net.forward(rng.normal(size=(6, 3)))
    grads, dx = net.backward(np.zeros_like(y), cache)
    assert not grads.any() and not dx.any()


def test_linear_layer_squared_loss_closed_form():
    rng = np.random.default_rng(2)
    net = nn.MLP([3, 2], rng=rng, out_scale=1.0)
    x = rng.normal(size=(5, 3))
    t = rng.normal(size=(5, 2))
    y, cache = net.forward(x)
    grads, _ = net.backward(2 * (y - t), cache)      # loss = sum (y - t)^2
    W = net._views["W0"][0]
    b = net._views["b0"][0]
    resid = x @ W + b - t
    expected = np.concatenate([(2 * x.T @ resid).ravel(), 2 * resid.sum(axis=0)])
    np.testing.assert_allclose(grads, expected, rtol=1e-12)


@pytest.mark.parametrize("name", ["mlp", "mlp_sigmoid", "actor", "local_critic",
                                  "global_critic"])
def test_gradients_match_finite_differences(name):
    rng = np.random.default_rng(3)
    for _ in range(3):
        net = shipped_architectures(rng)[name]
        assert gradient_error(net, rng) < 1e-4


def test_region_encoder_ignores_order_of_other_regions():
    rng = np.random.default_rng(4)
    net = nn.RegionNet(5, 6, 8, [8, 8], 2, targets=[1, 4], members=2, rng=rng, out_scale=1.0)
    x = rng.normal(size=(7, 6, 5))
    y = net(x)
    for member, target in enumerate(net.targets):
        others = [k for k in range(6) if k != target]
        perm = list(range(6))
        shuffled = rng.permutation(others)
        for k, src in zip(others, shuffled):
            perm[k] = src
        y_perm = net(x[:, perm, :])
        assert np.max(np.abs(y_perm[member] - y[member])) < 1e-10


def test_pooled_network_is_fully_permutation_invariant():
    rng = np.random.default_rng(5)
    net = nn.RegionNet(3, 4, 6, [6], 1, rng=rng, out_scale=1.0)
    x = rng.normal(size=(3, 4, 3))
    assert np.max(np.abs(net(x[:, [2, 0, 3, 1]]) - net(x))) < 1e-10


def test_members_are_independent():
    rng = np.random.default_rng(6)
    ens = nn.MLP([3, 4, 1], members=3, rng=rng, out_scale=1.0)
    x = rng.normal(size=(5, 3))
    y = ens(x)
    solo = nn.MLP([3, 4, 1], rng=None)
    for m in range(3):
        for name in ("W0", "b0", "W1", "b1"):
            solo._views[name][0] = ens._views[name][m]
        np.testing.assert_allclose(solo(x)[0], y[m], rtol=1e-14)


# -- optimizer ------------------------------------------------------------------

def test_zero_gradient_first_step_keeps_params():
    params = np.array([1.0, -2.0, 3.0])
    opt = nn.Adam(3, lr=0.1)
    nn.optimizer_step(params, np.zeros(3), opt)
    assert params.tolist() == [1.0, -2.0, 3.0]


def test_quadratic_loss_decreases_strictly():
    x = np.array([5.0])
    opt = nn.Adam(1, lr=0.05)
    losses = []
    for _ in range(100):
        losses.append(float(x[0] ** 2))
        opt.step(x, 2 * x)
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_identical_seeds_give_identical_trajectories():
    def run(seed):
        rng = np.random.default_rng(seed)
        net = nn.MLP([2, 3, 1], rng=rng, out_scale=1.0)
        opt = nn.Adam(net.n_params, 1e-2)
        for _ in range(20):
            x = rng.normal(size=(4, 2))
            y, cache = net.forward(x)
            g, _ = net.backward(y, cache)
            opt.step(net.params, g)
        return net.params.copy()
    np.testing.assert_array_equal(run(7), run(7))
    assert not np.array_equal(run(7), run(8))


# -- soft update ----------------------------------------------------------------

def test_soft_update_extremes():
    online = np.array([1.0, 2.0])
    target = np.array([0.0, 0.0])
    nn.soft_update(target, online, 0.0)
    assert target.tolist() == [0.0, 0.0]
    nn.soft_update(target, online, 1.0)
    assert target.tolist() == [1.0, 2.0]


def test_soft_update_geometric_trajectory():
    target = np.zeros(1)
    for k in range(1, 200):
        nn.soft_update(target, np.ones(1), 0.01)
        assert target[0] == pytest.approx(1 - 0.99 ** k, rel=1e-12)


def test_soft_update_rejects_bad_tau():
    with pytest.raises(ConfigurationError):
        nn.soft_update(np.zeros(1), np.ones(1), 1.5)


@settings(max_examples=50, deadline=None)
@given(tau=st.floats(0, 1), seed=st.integers(0, 1000))
def test_soft_update_is_convex_combination(tau, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=5), rng.normal(size=5)
    t = a.copy()
    nn.soft_update(t, b, tau)
    np.testing.assert_allclose(t, (1 - tau) * a + tau * b, atol=1e-15)


# -- checkpoints ----------------------------------------------------------------

def test_checkpoint_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(8)
    nets = shipped_architectures(rng)
    path = nn.save_checkpoint(tmp_path / "c.npz", nets, {"note": "x", "alpha": 0.4})
    loaded, meta = nn.load_checkpoint(path)
    assert meta == {"note": "x", "alpha": 0.4}
    for name, net in nets.items():
        assert loaded[name].spec() == net.spec()
        np.testing.assert_array_equal(loaded[name].params, net.params)
        x = rng.normal(size=(2, 3, 5)) if isinstance(net, nn.RegionNet) else \
            rng.normal(size=(2, 4))
        np.testing.assert_array_equal(loaded[name](x), net(x))


def test_missing_checkpoint(tmp_path):
    with pytest.raises(ConfigurationError, match="not found"):
        nn.load_checkpoint(tmp_path / "missing.npz")


def test_copy_is_independent():
    net = nn.MLP([2, 2], rng=np.random.default_rng(0))
    clone = net.copy()
    clone.params += 1
    assert not np.array_equal(clone.params, net.params)
