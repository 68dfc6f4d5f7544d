import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from marlscale.nn import (
    AdamState,
    DenseLayer,
    MlpNetwork,
    adam_step,
    backward,
    forward,
    init_mlp,
    param_count,
    predict,
    soft_update,
)


def random_net(rng, in_dim, out_dim, hidden, act):
    net = init_mlp(in_dim, out_dim, act, rng=rng, hidden=hidden)
    for layer in net.layers:
        layer.bias[:] = rng.normal(0, 0.3, layer.bias.shape)
    return net


def contraction(net, x, g):
    out, _ = forward(net, x)
    return float(np.mean(np.sum(out * g, axis=1)))


def fd_check(net, x, g, h=1e-5):
    _, cache = forward(net, x)
    grads, input_grad = backward(net, cache, g)
    for p, analytic in zip(net.params(), grads):
        numeric = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = contraction(net, x, g)
            p[idx] = old - h
            down = contraction(net, x, g)
            p[idx] = old
            numeric[idx] = (up - down) / (2 * h)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-6)
    # input grad is per row, so compare against the un-averaged contraction
    numeric_x = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        numeric_x[idx] = x.shape[0] * (contraction(net, xp, g) - contraction(net, xm, g)) / (2 * h)
    np.testing.assert_allclose(input_grad, numeric_x, rtol=1e-4, atol=1e-6)


class TestInit:
    def test_shapes_and_zero_biases(self):
        net = init_mlp(4, 2, "tanh", rng=np.random.default_rng(7))
        assert net.shapes == [(64, 4), (64, 64), (2, 64)]
        assert all(np.all(layer.bias == 0) for layer in net.layers)

    def test_same_seed_bit_identical(self):
        a = init_mlp(5, 3, rng=np.random.default_rng(11))
        b = init_mlp(5, 3, rng=np.random.default_rng(11))
        for p, q in zip(a.params(), b.params()):
            assert np.array_equal(p, q)

    def test_glorot_bound(self):
        net = init_mlp(10, 1, "identity", rng=np.random.default_rng(3))
        for layer in net.layers:
            fan_out, fan_in = layer.weights.shape
            assert np.abs(layer.weights).max() <= np.sqrt(6.0 / (fan_in + fan_out))

    @pytest.mark.parametrize("dims", [(0, 2), (3, 0), (-1, 1)])
    def test_bad_dims(self, dims):
        with pytest.raises(ValueError):
            init_mlp(*dims)

    def test_float32_option(self):
        net = init_mlp(3, 2, rng=np.random.default_rng(0), dtype=np.float32)
        assert all(p.dtype == np.float32 for p in net.params())


class TestForward:
    @pytest.mark.parametrize("act", ["identity", "tanh"])
    def test_zero_network_outputs_zero(self, act):
        net = init_mlp(3, 2, act, rng=np.random.default_rng(0))
        for p in net.params():
            p[...] = 0.0
        out, _ = forward(net, np.random.default_rng(1).normal(size=(5, 3)))
        assert np.array_equal(out, np.zeros((5, 2)))

    def test_scalar_hand_evaluation(self):
        # width-1 chain: relu(2*1 + 0.5) = 2.5 -> relu(-1*2.5 + 4) = 1.5 -> 3*1.5 - 1 = 3.5
        layers = [
            DenseLayer(np.array([[2.0]]), np.array([0.5])),
            DenseLayer(np.array([[-1.0]]), np.array([4.0])),
            DenseLayer(np.array([[3.0]]), np.array([-1.0])),
        ]
        net = MlpNetwork(layers, "identity")
        out, _ = forward(net, np.array([[1.0]]))
        assert out[0, 0] == 3.5
        tanh_net = MlpNetwork([DenseLayer(l.weights.copy(), l.bias.copy()) for l in layers], "tanh")
        assert forward(tanh_net, np.array([[1.0]]))[0][0, 0] == np.tanh(3.5)

    def test_dimension_mismatch(self):
        net = init_mlp(3, 2, rng=np.random.default_rng(0))
        with pytest.raises(ValueError):
            forward(net, np.zeros((4, 5)))

    @pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
    def test_non_finite_input(self, bad):
        net = init_mlp(3, 2, rng=np.random.default_rng(0))
        x = np.zeros((2, 3))
        x[1, 2] = bad
        with pytest.raises(ValueError):
            forward(net, x)

    def test_predict_matches_forward(self):
        rng = np.random.default_rng(2)
        net = random_net(rng, 6, 3, (8, 8), "tanh")
        x = rng.normal(size=(7, 6))
        assert np.array_equal(predict(net, x), forward(net, x)[0])

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), batch=st.integers(2, 12))
    def test_batch_permutation_invariance(self, seed, batch):
        rng = np.random.default_rng(seed)
        net = random_net(rng, 5, 2, (16, 16), "tanh")
        x = rng.normal(size=(batch, 5))
        perm = rng.permutation(batch)
        np.testing.assert_allclose(predict(net, x)[perm], predict(net, x[perm]), rtol=0, atol=1e-14)


class TestBackward:
    def test_zero_output_grad(self):
        rng = np.random.default_rng(0)
        net = random_net(rng, 4, 2, (8, 8), "tanh")
        x = rng.normal(size=(3, 4))
        _, cache = forward(net, x)
        grads, gx = backward(net, cache, np.zeros((3, 2)))
        assert all(np.all(g == 0) for g in grads)
        assert np.all(gx == 0)

    def test_linear_width_one_gradient_equals_input(self):
        # all-positive width-1 chain keeps every relu in its linear region
        layers = [DenseLayer(np.array([[1.0]]), np.array([0.0])) for _ in range(3)]
        net = MlpNetwork(layers, "identity")
        x = np.array([[2.5]])
        _, cache = forward(net, x)
        grads, gx = backward(net, cache, np.ones((1, 1)))
        assert grads[0][0, 0] == 2.5
        assert grads[1][0] == 1.0
        assert gx[0, 0] == 1.0

    @pytest.mark.parametrize("act", ["identity", "tanh"])
    @pytest.mark.parametrize("hidden", [(3,), (4, 5), (6, 6)])
    def test_finite_differences(self, act, hidden):
        rng = np.random.default_rng(hash((act, hidden)) % 2**32)
        net = random_net(rng, 4, 3, hidden, act)
        fd_check(net, rng.normal(size=(4, 4)), rng.normal(size=(4, 3)))

    @settings(max_examples=25, deadline=None)
    @given(
        seed=st.integers(0, 2**31 - 1),
        in_dim=st.integers(1, 8),
        out_dim=st.integers(1, 8),
        h1=st.integers(1, 8),
        h2=st.integers(1, 8),
        batch=st.integers(1, 4),
        act=st.sampled_from(["identity", "tanh"]),
    )
    def test_finite_differences_property(self, seed, in_dim, out_dim, h1, h2, batch, act):
        rng = np.random.default_rng(seed)
        net = random_net(rng, in_dim, out_dim, (h1, h2), act)
        fd_check(net, rng.normal(size=(batch, in_dim)), rng.normal(size=(batch, out_dim)))

    def test_pre_output_grad_matches_penalty(self):
        rng = np.random.default_rng(5)
        net = random_net(rng, 3, 2, (5, 5), "tanh")
        x = rng.normal(size=(4, 3))
        _, cache = forward(net, x)
        # loss = mean_b sum_j pre_bj^2 ; its per-row pre-activation gradient is 2*pre
        grads, _ = backward(net, cache, np.zeros((4, 2)), pre_output_grad=2.0 * cache.pre_output)

        def loss():
            return float(np.mean(np.sum(forward(net, x)[1].pre_output ** 2, axis=1)))

        w = net.layers[0].weights
        h = 1e-6
        w[1, 2] += h
        up = loss()
        w[1, 2] -= 2 * h
        down = loss()
        w[1, 2] += h
        assert grads[0][1, 2] == pytest.approx((up - down) / (2 * h), rel=1e-5)

    def test_mismatched_cache(self):
        rng = np.random.default_rng(0)
        a = random_net(rng, 4, 2, (8, 8), "identity")
        b = random_net(rng, 5, 2, (8, 8), "identity")
        _, cache = forward(a, rng.normal(size=(2, 4)))
        with pytest.raises(ValueError):
            backward(b, cache, np.ones((2, 2)))
        with pytest.raises(ValueError):
            backward(a, cache, np.ones((3, 2)))


def scalar_net(value):
    return MlpNetwork([DenseLayer(np.array([[value]]), np.array([0.0]))], "identity")


class TestAdam:
    def test_zero_gradients(self):
        net = init_mlp(3, 2, rng=np.random.default_rng(0))
        before = [p.copy() for p in net.params()]
        state = AdamState.zeros_like(net)
        adam_step(net, [np.zeros_like(p) for p in net.params()], state, 0.01)
        assert state.step_count == 1
        for p, q in zip(before, net.params()):
            assert np.array_equal(p, q)
        assert all(np.all(m == 0) for m in state.first_moment + state.second_moment)

    def test_first_step_hand_unrolled(self):
        net = scalar_net(0.0)
        state = AdamState.zeros_like(net)
        adam_step(net, [np.array([[1.0]]), np.array([0.0])], state, 0.01)
        # m_hat = v_hat = 1 -> step = lr / (1 + eps)
        assert net.layers[0].weights[0, 0] == pytest.approx(-0.01 / (1 + 1e-8), abs=1e-15)

    def test_two_steps_hand_unrolled(self):
        net = scalar_net(0.0)
        state = AdamState.zeros_like(net)
        theta, m, v, lr, b1, b2, eps = 0.0, 0.0, 0.0, 0.01, 0.9, 0.999, 1e-8
        for t in (1, 2):
            adam_step(net, [np.array([[1.0]]), np.array([0.0])], state, lr)
            m = b1 * m + (1 - b1)
            v = b2 * v + (1 - b2)
            theta -= lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
        assert net.layers[0].weights[0, 0] == pytest.approx(theta, abs=1e-15)
        assert state.step_count == 2

    def test_non_finite_gradient_leaves_params(self):
        net = init_mlp(2, 1, rng=np.random.default_rng(0))
        before = [p.copy() for p in net.params()]
        state = AdamState.zeros_like(net)
        grads = [np.zeros_like(p) for p in net.params()]
        grads[-1][0] = np.nan
        with pytest.raises(ValueError):
            adam_step(net, grads, state, 0.01)
        assert state.step_count == 0
        for p, q in zip(before, net.params()):
            assert np.array_equal(p, q)

    def test_shape_mismatch(self):
        net = init_mlp(2, 1, rng=np.random.default_rng(0))
        with pytest.raises(ValueError):
            adam_step(net, [np.zeros(3)], AdamState.zeros_like(net), 0.01)


class TestSoftUpdate:
    def test_tau_one_copies(self):
        rng = np.random.default_rng(0)
        src, tgt = init_mlp(3, 2, rng=rng), init_mlp(3, 2, rng=rng)
        soft_update(tgt, src, 1.0)
        for p, q in zip(src.params(), tgt.params()):
            assert np.array_equal(p, q)

    def test_tau_zero_keeps(self):
        rng = np.random.default_rng(0)
        src, tgt = init_mlp(3, 2, rng=rng), init_mlp(3, 2, rng=rng)
        before = [p.copy() for p in tgt.params()]
        soft_update(tgt, src, 0.0)
        for p, q in zip(before, tgt.params()):
            assert np.array_equal(p, q)

    def test_interpolation(self):
        tgt, src = scalar_net(0.0), scalar_net(1.0)
        soft_update(tgt, src, 0.01)
        assert tgt.layers[0].weights[0, 0] == 0.01

    @settings(max_examples=30, deadline=None)
    @given(tau=st.floats(0.0, 1.0), seed=st.integers(0, 10**6))
    def test_affine_rule(self, tau, seed):
        rng = np.random.default_rng(seed)
        src, tgt = init_mlp(2, 2, rng=rng, hidden=(4,)), init_mlp(2, 2, rng=rng, hidden=(4,))
        expect = [tau * p + (1 - tau) * q for p, q in zip(src.params(), tgt.params())]
        soft_update(tgt, src, tau)
        for e, q in zip(expect, tgt.params()):
            assert np.array_equal(e, q)

    def test_architecture_mismatch(self):
        with pytest.raises(ValueError):
            soft_update(init_mlp(3, 2), init_mlp(4, 2), 0.5)


@pytest.mark.parametrize(
    "in_dim,out_dim,expected",
    [(4, 2, 4610), (5, 2, 4674), (1, 1, 4353)],
)
def test_param_count(in_dim, out_dim, expected):
    assert param_count(init_mlp(in_dim, out_dim)) == expected
