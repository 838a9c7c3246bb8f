import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from helpers import max_relative_error, numeric_gradients
from novelbench.nn import (
    AdamState,
    ConfigurationError,
    GradBundle,
    Layer,
    Mlp,
    TrainingError,
    adam_init,
    adam_step,
    backward,
    bce_logit_losses,
    feature_matching_loss,
    forward,
    interp_architecture,
    kl_gauss,
    mlp_new,
    mse_recon_loss,
    sigmoid,
)


def identity_net(d, activation="linear"):
    return Mlp((Layer(np.eye(d), np.zeros(d), activation),))


# -- construction ------------------------------------------------------------

def test_mlp_new_is_deterministic_per_seed():
    a, b = mlp_new([4, 2], seed=7), mlp_new([4, 2], seed=7)
    for p, q in zip(a.params(), b.params()):
        assert np.array_equal(p, q)
    c = mlp_new([4, 2], seed=8)
    assert not np.array_equal(a.layers[0].weight, c.layers[0].weight)


def test_mlp_new_shapes_chain():
    net = mlp_new([3, 5, 2], seed=0)
    assert [l.weight.shape for l in net.layers] == [(5, 3), (2, 5)]
    assert net.sizes == [3, 5, 2]
    assert [l.activation for l in net.layers] == ["relu", "linear"]
    assert all(np.all(l.bias == 0) for l in net.layers)


def test_glorot_uniform_bounds():
    net = mlp_new([30, 10], seed=1)
    limit = math.sqrt(6 / 40)
    w = net.layers[0].weight
    assert np.all(np.abs(w) <= limit)
    # a uniform sample of 300 values should reach close to the bound
    assert np.abs(w).max() > 0.9 * limit


@pytest.mark.parametrize("sizes", [[3], [], [3, 0], [0, 2]])
def test_mlp_new_rejects_invalid_sizes(sizes):
    with pytest.raises(ConfigurationError):
        mlp_new(sizes)


def test_mlp_new_rejects_unknown_activation():
    with pytest.raises(ConfigurationError):
        mlp_new([2, 2], hidden_activation="tanh")


def test_mlp_rejects_unchained_layers():
    with pytest.raises(ConfigurationError):
        Mlp((Layer(np.zeros((3, 2)), np.zeros(3), "relu"),
             Layer(np.zeros((1, 4)), np.zeros(1), "linear")))


# -- forward -----------------------------------------------------------------

def test_forward_identity_linear():
    _, out = forward(identity_net(2), np.array([[1.0, 2.0]]))
    assert np.array_equal(out, [[1.0, 2.0]])


def test_forward_identity_relu():
    _, out = forward(identity_net(2, "relu"), np.array([[-1.0, 3.0]]))
    assert np.array_equal(out, [[0.0, 3.0]])


def test_forward_matches_dense_math_oracle():
    rng = np.random.default_rng(3)
    net = mlp_new([3, 4, 2], seed=11, output_activation="sigmoid")
    net = net.with_params([rng.standard_normal(p.shape) for p in net.params()])
    x = rng.standard_normal((6, 3))
    w1, b1, w2, b2 = net.params()
    h = np.array([[max(0.0, sum(w1[j, i] * row[i] for i in range(3)) + b1[j]) for j in range(4)]
                  for row in x])
    o = np.array([[1 / (1 + math.exp(-(sum(w2[j, i] * row[i] for i in range(4)) + b2[j])))
                   for j in range(2)] for row in h])
    acts, out = forward(net, x)
    assert np.max(np.abs(out - o)) < 1e-12
    assert np.max(np.abs(acts[1] - h)) < 1e-12
    assert acts[0] is not None and len(acts) == 3


def test_forward_dimension_mismatch():
    with pytest.raises(ValueError):
        forward(mlp_new([3, 2]), np.zeros((2, 4)))


def test_sigmoid_range_and_values():
    z = np.array([-800.0, -5.0, 0.0, 5.0, 800.0])
    s = sigmoid(z)
    assert np.all((s >= 0) & (s <= 1))
    assert s[2] == 0.5
    assert abs(s[3] - 1 / (1 + math.exp(-5))) < 1e-15


# -- backward ----------------------------------------------------------------

def test_backward_zero_gradient():
    net = mlp_new([3, 4, 2], seed=2)
    acts, out = forward(net, np.random.default_rng(0).standard_normal((5, 3)))
    g = backward(net, acts, np.zeros_like(out))
    assert all(np.all(p == 0) for p in g.params())
    assert np.all(g.input == 0)


def test_backward_single_linear_layer_sum_loss():
    w = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    net = Mlp((Layer(w, np.zeros(3), "linear"),))
    x = np.array([[0.5, -1.5]])
    acts, out = forward(net, x)
    g = backward(net, acts, np.ones_like(out))
    # dL/dW[j, i] = x_i for every output j
    assert np.array_equal(g.weights[0], np.tile(x, (3, 1)))
    assert np.array_equal(g.biases[0], np.ones(3))
    assert np.array_equal(g.input, w.sum(axis=0, keepdims=True))


def test_backward_mse_matches_finite_differences():
    rng = np.random.default_rng(5)
    net = mlp_new([3, 4, 2], seed=4)
    x = rng.standard_normal((7, 3))
    y = rng.standard_normal((7, 2))

    def loss(m):
        return mse_recon_loss(y, m(x))[0]

    acts, out = forward(net, x)
    _, g_out = mse_recon_loss(y, out)
    analytic = backward(net, acts, g_out).params()
    assert max_relative_error(analytic, numeric_gradients(loss, net)) < 1e-4


def test_backward_hidden_gradient_injection():
    rng = np.random.default_rng(6)
    net = mlp_new([2, 3, 1], seed=9)
    x = rng.standard_normal((4, 2))
    target_h = rng.standard_normal((4, 3))

    def loss(m):
        acts, out = forward(m, x)
        return float(np.sum(out)) + feature_matching_loss(target_h, acts[1])[0]

    acts, out = forward(net, x)
    _, g_h = feature_matching_loss(target_h, acts[1])
    analytic = backward(net, acts, np.ones_like(out), {0: g_h}).params()
    assert max_relative_error(analytic, numeric_gradients(loss, net)) < 1e-4


def test_backward_shape_mismatch():
    net = mlp_new([3, 2])
    acts, _ = forward(net, np.zeros((2, 3)))
    with pytest.raises(ValueError):
        backward(net, acts, np.zeros((2, 3)))
    with pytest.raises(ValueError):
        backward(net, acts[:-1], np.zeros((2, 2)))


# -- adam --------------------------------------------------------------------

def scalar_net(w):
    return Mlp((Layer(np.array([[w]]), np.zeros(1), "linear"),))


def scalar_grad(g, gb=0.0):
    return GradBundle([np.array([[g]])], [np.array([gb])])


def test_adam_zero_gradient_leaves_parameters():
    net = mlp_new([3, 2], seed=1)
    state = adam_init(net)
    new, state2 = adam_step(net, GradBundle([np.zeros((2, 3))], [np.zeros(2)]), state)
    for p, q in zip(net.params(), new.params()):
        assert np.array_equal(p, q)
    assert state2.step == 1


def test_adam_first_step_by_hand():
    net, state = scalar_net(1.0), adam_init(scalar_net(1.0), lr=0.001)
    new, state = adam_step(net, scalar_grad(1.0), state)
    # m_hat = 1, v_hat = 1 after bias correction
    expected = 1.0 - 0.001 * 1.0 / (1.0 + 1e-8)
    assert abs(new.layers[0].weight[0, 0] - expected) < 1e-15
    assert abs(new.layers[0].weight[0, 0] - 0.999) < 1e-8


def test_adam_matches_reference_recursion():
    grads = [0.3, -1.2, 2.5, 0.0, -0.7]
    net = scalar_net(0.5)
    state = adam_init(net, lr=0.01)
    w, m, v = 0.5, 0.0, 0.0
    for t, g in enumerate(grads, start=1):
        net, state = adam_step(net, scalar_grad(g), state)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        w -= 0.01 * (m / (1 - 0.9 ** t)) / (math.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        assert state.step == t
        assert abs(net.layers[0].weight[0, 0] - w) < 1e-14


def test_adam_rejects_nan_gradient():
    net = scalar_net(1.0)
    with pytest.raises(TrainingError):
        adam_step(net, scalar_grad(float("nan")), adam_init(net))


def test_adam_rejects_mismatched_bundle():
    net = mlp_new([3, 2])
    with pytest.raises(ValueError):
        adam_step(net, GradBundle([np.zeros((3, 3))], [np.zeros(2)]), adam_init(net))


def test_adam_trajectories_reproducible():
    def run():
        rng = np.random.default_rng(0)
        net = mlp_new([2, 3, 1], seed=3)
        state = adam_init(net)
        for _ in range(20):
            x = rng.standard_normal((4, 2))
            acts, out = forward(net, x)
            _, g = mse_recon_loss(np.zeros_like(out), out)
            net, state = adam_step(net, backward(net, acts, g), state)
        return net.params()

    for p, q in zip(run(), run()):
        assert np.array_equal(p, q)


def test_adam_state_moments_mirror_parameters():
    net = mlp_new([3, 4, 2])
    state = adam_init(net)
    assert isinstance(state, AdamState)
    assert [m.shape for m in state.m] == [p.shape for p in net.params()]
    assert [v.shape for v in state.v] == [p.shape for p in net.params()]


# -- losses ------------------------------------------------------------------

def test_mse_values():
    assert mse_recon_loss(np.ones((3, 2)), np.ones((3, 2)))[0] == 0.0
    assert mse_recon_loss(np.array([[0.0, 0.0]]), np.array([[1.0, 1.0]]))[0] == 2.0
    with pytest.raises(ValueError):
        mse_recon_loss(np.zeros((2, 2)), np.zeros((2, 3)))


def test_mse_gradient_finite_differences():
    rng = np.random.default_rng(0)
    x, xh = rng.standard_normal((5, 3)), rng.standard_normal((5, 3))
    _, g = mse_recon_loss(x, xh)
    h = 1e-5
    num = np.zeros_like(xh)
    for idx in np.ndindex(xh.shape):
        up, down = xh.copy(), xh.copy()
        up[idx] += h
        down[idx] -= h
        num[idx] = (mse_recon_loss(x, up)[0] - mse_recon_loss(x, down)[0]) / (2 * h)
    assert max_relative_error([g], [num]) < 1e-6


def test_kl_values():
    assert kl_gauss(np.zeros(3), np.zeros(3))[0] == 0.0
    assert kl_gauss(np.array([1.0]), np.array([0.0]))[0] == 0.5
    with pytest.raises(ValueError):
        kl_gauss(np.array([np.inf]), np.array([0.0]))


def test_kl_gradient_finite_differences():
    rng = np.random.default_rng(1)
    mu, lv = rng.standard_normal((4, 2)), rng.standard_normal((4, 2))
    _, gm, gl = kl_gauss(mu, lv)
    h = 1e-5
    num_m, num_l = np.zeros_like(mu), np.zeros_like(lv)
    for idx in np.ndindex(mu.shape):
        for arr, out, other in ((mu, num_m, "m"), (lv, num_l, "l")):
            up, down = arr.copy(), arr.copy()
            up[idx] += h
            down[idx] -= h
            if other == "m":
                out[idx] = (kl_gauss(up, lv)[0] - kl_gauss(down, lv)[0]) / (2 * h)
            else:
                out[idx] = (kl_gauss(mu, up)[0] - kl_gauss(mu, down)[0]) / (2 * h)
    assert max_relative_error([gm, gl], [num_m, num_l]) < 1e-6


@settings(max_examples=200, deadline=None)
@given(arrays(float, (3, 2), elements=st.floats(-20, 20)),
       arrays(float, (3, 2), elements=st.floats(-20, 20)))
def test_kl_nonnegative(mu, lv):
    assert kl_gauss(mu, lv)[0] >= 0.0


@settings(max_examples=200, deadline=None)
@given(arrays(float, (4, 3), elements=st.floats(-1e3, 1e3)),
       arrays(float, (4, 3), elements=st.floats(-1e3, 1e3)))
def test_mse_nonnegative(x, xh):
    assert mse_recon_loss(x, xh)[0] >= 0.0


def test_bce_at_chance():
    losses = bce_logit_losses(np.zeros((5, 1)), np.zeros((5, 1)))
    assert abs(losses.d_loss - 2 * math.log(2)) < 1e-12
    assert abs(losses.g_loss - math.log(2)) < 1e-12
    assert abs(2 * math.log(2) - 1.3863) < 1e-4


def test_bce_perfect_discriminator_and_clamp():
    good = bce_logit_losses(np.full((3, 1), 40.0), np.full((3, 1), -40.0))
    assert good.d_loss < 1e-6
    # clamping bounds the generator loss at -log(1e-7)
    assert abs(good.g_loss - -math.log(1e-7)) < 1e-6
    assert all(np.isfinite(v).all() for v in good[2:])


def test_bce_gradients_finite_differences():
    rng = np.random.default_rng(2)
    r, f = rng.standard_normal((6, 1)), rng.standard_normal((6, 1))
    losses = bce_logit_losses(r, f)
    h = 1e-5

    def num(which, arr, attr):
        out = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            up, down = arr.copy(), arr.copy()
            up[idx] += h
            down[idx] -= h
            ru, rd = (up, down) if which == "r" else (r, r)
            fu, fd = (up, down) if which == "f" else (f, f)
            out[idx] = (getattr(bce_logit_losses(ru, fu), attr)
                        - getattr(bce_logit_losses(rd, fd), attr)) / (2 * h)
        return out

    assert max_relative_error([losses.d_grad_real], [num("r", r, "d_loss")]) < 1e-4
    assert max_relative_error([losses.d_grad_fake], [num("f", f, "d_loss")]) < 1e-4
    assert max_relative_error([losses.g_grad_fake], [num("f", f, "g_loss")]) < 1e-4


def test_feature_matching_zero_for_equal_batches():
    h = np.random.default_rng(0).standard_normal((5, 3))
    loss, grad = feature_matching_loss(h, h.copy())
    assert loss == 0.0
    assert np.all(grad == 0)


def test_feature_matching_unsquared_norm():
    loss, _ = feature_matching_loss(np.zeros((2, 2)), np.array([[3.0, 4.0], [0.0, 1.0]]))
    assert loss == pytest.approx(3.0)


# -- architecture ------------------------------------------------------------

@pytest.mark.parametrize("args, hidden", [
    ((100, 20, 3), [80, 60, 40]),
    ((10, 10, 1), [10]),
    ((7, 2, 2), [5, 4]),
    ((4, 1, 1), [3]),  # 2.5 rounds half up
])
def test_interp_architecture(args, hidden):
    assert interp_architecture(*args) == hidden


@pytest.mark.parametrize("n_h", [0, 4])
def test_interp_architecture_rejects_depth(n_h):
    with pytest.raises(ConfigurationError):
        interp_architecture(10, 2, n_h)


def test_interp_architecture_rejects_wide_code():
    with pytest.raises(ConfigurationError):
        interp_architecture(3, 5, 1)
