import numpy as np
import pytest

from spin.nn import (
    IDENTITY, RELU, Activation, AdamState, Layer, MlpParams, adam_step, dropout, load_checkpoint,
    make_rng, max_relative_error, mlp_backward, mlp_forward, numerical_gradient, one_hot,
    save_checkpoint, softmax, softmax_cross_entropy,
)


def test_identity_mlp_returns_input():
    x = make_rng(0).normal(size=(4, 3))
    out, _ = mlp_forward(MlpParams.identity(3, depth=2), x)
    assert np.array_equal(out, x)


@pytest.mark.parametrize("x,expect", [(-3.0, 0.0), (3.0, 7.0)])
def test_single_relu_layer(x, expect):
    p = MlpParams([Layer(np.array([[2.0]]), np.array([1.0]))], RELU, RELU)
    out, _ = mlp_forward(p, np.array([[x]]))
    assert out[0, 0] == expect


def test_forward_asserts_shape():
    with pytest.raises(AssertionError):
        mlp_forward(MlpParams.identity(3), np.ones((2, 4)))


def test_layers_must_chain():
    with pytest.raises(ValueError):
        MlpParams([Layer(np.ones((2, 3)), np.zeros(3)), Layer(np.ones((2, 1)), np.zeros(1))])


def test_leaky_slope_must_be_positive():
    with pytest.raises(ValueError):
        Activation("leaky_relu", 0.0)


def test_zero_upstream_gives_zero_tape():
    rng = make_rng(1)
    p = MlpParams.init([3, 5, 2], rng)
    x = rng.normal(size=(4, 3))
    _, cache = mlp_forward(p, x)
    tape = mlp_backward(p, cache, np.zeros((4, 2)))
    assert all(not a.any() for a in tape.arrays()) and not tape.input.any()
    assert [a.shape for a in tape.arrays()] == [a.shape for a in p.arrays()]


def test_scalar_chain_rule():
    p = MlpParams([Layer(np.array([[2.0]]), np.array([0.0]))], RELU, RELU)
    _, cache = mlp_forward(p, np.array([[1.0]]))
    tape = mlp_backward(p, cache, np.array([[1.0]]))
    assert tape.layers[0].weight[0, 0] == 1 and tape.layers[0].bias[0] == 1 and tape.input[0, 0] == 2


@pytest.mark.parametrize("seed", range(20))
@pytest.mark.parametrize("act", ["relu", "leaky_relu", "identity"])
def test_mlp_gradients_match_finite_differences(seed, act):
    rng = make_rng(seed)
    p = MlpParams.init([3, 6, 4], rng, Activation(act, 0.1), RELU if act != "identity" else IDENTITY)
    for layer in p.layers:
        layer.bias[:] = rng.normal(size=layer.bias.shape)
    x = rng.normal(size=(5, 3))
    up = rng.normal(size=(5, 4))

    def f():
        return float(np.sum(mlp_forward(p, x)[0] * up))

    _, cache = mlp_forward(p, x)
    tape = mlp_backward(p, cache, up)
    num = numerical_gradient(f, p.arrays() + [x])
    assert max_relative_error(tape.arrays() + [tape.input], num) < 1e-6


def test_activation_gradient_below_zero():
    pre = np.array([-2.0, -1e-9, 0.0, 1.0])
    up = np.ones(4)
    assert RELU.backward(pre, up).tolist() == [0, 0, 0, 1]
    assert Activation("leaky_relu", 0.2).backward(pre, up).tolist() == [0.2, 0.2, 0.2, 1]


def test_cross_entropy_uniform_logits():
    loss, _ = softmax_cross_entropy(np.zeros((3, 4)), one_hot([0, 1, 3], 4))
    assert loss == pytest.approx(np.log(4), abs=1e-15)


def test_cross_entropy_large_margin_is_stable():
    logits = np.array([[1e4, 0.0], [0.0, 1e4]])
    loss, grad = softmax_cross_entropy(logits, one_hot([0, 1], 2))
    assert loss == pytest.approx(0.0, abs=1e-12) and np.all(np.isfinite(grad))


def test_cross_entropy_gradient():
    rng = make_rng(3)
    logits = rng.normal(size=(3, 5))
    y = one_hot([0, 4, 2], 5)
    _, grad = softmax_cross_entropy(logits, y)
    num = numerical_gradient(lambda: softmax_cross_entropy(logits, y)[0], [logits])
    assert max_relative_error([grad], num) < 1e-6


def test_cross_entropy_shape_mismatch():
    with pytest.raises(ValueError):
        softmax_cross_entropy(np.zeros((2, 3)), np.zeros((2, 2)))


def test_softmax_rows_sum_to_one():
    p = softmax(make_rng(4).normal(scale=50, size=(10, 7)))
    assert np.allclose(p.sum(1), 1.0, atol=1e-12)


def test_adam_zero_gradient_is_identity():
    theta = np.array([1.0, -2.0])
    state = AdamState.for_arrays([theta])
    adam_step([theta], [np.zeros(2)], state, lr=0.1)
    assert theta.tolist() == [1.0, -2.0]


def test_adam_descends_quadratic():
    theta = np.array([1.0])
    state = AdamState.for_arrays([theta])
    adam_step([theta], [2 * theta], state, lr=0.1)
    assert theta[0] < 1.0
    for _ in range(199):
        adam_step([theta], [2 * theta], state, lr=0.1)
    assert abs(theta[0]) < 1e-2


def test_adam_l2_pulls_toward_zero():
    theta = np.array([3.0])
    state = AdamState.for_arrays([theta])
    adam_step([theta], [np.zeros(1)], state, lr=0.1, l2=1.0)
    assert theta[0] < 3.0


def test_adam_length_mismatch():
    with pytest.raises(ValueError):
        adam_step([np.ones(1)], [], AdamState.for_arrays([np.ones(1)]), 0.1)


def test_dropout_identity_cases():
    x = np.ones((4, 4))
    assert dropout(x, 0.0, make_rng(0), True)[0] is x
    y, mask = dropout(x, 0.7, make_rng(0), False)
    assert y is x and mask is None
    with pytest.raises(ValueError):
        dropout(x, 1.0, make_rng(0), True)


def test_dropout_keeps_half_and_rescales():
    y, mask = dropout(np.ones((400, 400)), 0.5, make_rng(0), True)
    kept = np.mean(y > 0)
    assert 0.45 <= kept <= 0.55
    assert set(np.unique(y).tolist()) <= {0.0, 2.0}


def test_make_rng_streams_are_reproducible_and_distinct():
    a = make_rng(7, 1).random(3)
    assert np.array_equal(a, make_rng(7, 1).random(3))
    assert not np.array_equal(a, make_rng(7, 2).random(3))


def test_checkpoint_round_trip(tmp_path):
    rng = make_rng(0)
    arrays = [rng.normal(size=(3, 4)), rng.normal(size=5), np.array(2.5)]
    save_checkpoint(tmp_path / "m.ckpt", "R = 3\n", arrays)
    text, back = load_checkpoint(tmp_path / "m.ckpt")
    assert text == "R = 3\n"
    assert all(np.array_equal(a, b) and a.shape == b.shape for a, b in zip(arrays, back))


def test_checkpoint_rejects_foreign_file(tmp_path):
    (tmp_path / "x").write_bytes(b"NOTACKPT" + bytes(8))
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "x")
