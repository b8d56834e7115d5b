import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hqcnn import nn
from hqcnn.errors import NumericsError, ShapeError


def naive_conv1d(x, w, b, stride):
    c_out, c_in, k = w.shape
    l_out = (x.shape[1] - k) // stride + 1
    out = np.zeros((c_out, l_out))
    for o in range(c_out):
        for t in range(l_out):
            acc = b[o]
            for c in range(c_in):
                for j in range(k):
                    acc += w[o, c, j] * x[c, t * stride + j]
            out[o, t] = acc
    return out


conv_shapes = st.tuples(
    st.integers(1, 3), st.integers(1, 4), st.integers(1, 6), st.integers(1, 3), st.integers(0, 12)
)


@settings(max_examples=40)
@given(conv_shapes, st.integers(0, 2**31 - 1))
def test_conv1d_forward_matches_loops(shape, seed):
    c_in, c_out, k, stride, extra = shape
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(c_in, k + extra))
    w = rng.normal(size=(c_out, c_in, k))
    b = rng.normal(size=c_out)
    np.testing.assert_allclose(nn.conv1d_forward(x, w, b, stride), naive_conv1d(x, w, b, stride), atol=1e-12)


@settings(max_examples=20)
@given(conv_shapes, st.integers(0, 2**31 - 1))
def test_conv1d_backward_matches_finite_differences(shape, seed):
    c_in, c_out, k, stride, extra = shape
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(c_in, k + extra))
    w = rng.normal(size=(c_out, c_in, k))
    b = rng.normal(size=c_out)
    dout = rng.normal(size=nn.conv1d_forward(x, w, b, stride).shape)
    dx, dw, db = nn.conv1d_backward(x, w, dout, stride)

    def loss(xx, ww, bb):
        return float(np.sum(dout * nn.conv1d_forward(xx, ww, bb, stride)))

    h = 1e-6
    for arr, grad, which in ((x, dx, 0), (w, dw, 1), (b, db, 2)):
        fd = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            e = np.zeros_like(arr)
            e[idx] = h
            args_p = [x, w, b]
            args_m = [x, w, b]
            args_p[which] = arr + e
            args_m[which] = arr - e
            fd[idx] = (loss(*args_p) - loss(*args_m)) / (2 * h)
        np.testing.assert_allclose(grad, fd, atol=1e-6)


def test_conv1d_shape_errors():
    with pytest.raises(ShapeError):
        nn.conv1d_output_length(5, 6, 1)
    with pytest.raises(ShapeError):
        nn.conv1d_forward(np.ones((2, 10)), np.ones((1, 1, 3)), np.zeros(1), 1)


def test_conv_layer_bookkeeping():
    layer = nn.Conv1dLayer(1, 8, 30, 2)
    assert layer.output_length(140) == 56
    assert layer.num_params == 248
    assert nn.DenseLayer(160, 18).num_params == 2898


def test_dense_backward():
    rng = np.random.default_rng(0)
    x, w, b = rng.normal(size=5), rng.normal(size=(3, 5)), rng.normal(size=3)
    dout = rng.normal(size=3)
    dx, dw, db = nn.dense_backward(x, w, dout)
    np.testing.assert_allclose(dx, w.T @ dout)
    np.testing.assert_allclose(dw, np.outer(dout, x))
    np.testing.assert_allclose(db, dout)
    with pytest.raises(ShapeError):
        nn.dense_forward(np.ones(4), w, b)


def test_relu_pair():
    x = np.array([-1.0, 0.0, 2.0])
    np.testing.assert_array_equal(nn.relu_forward(x), [0.0, 0.0, 2.0])
    np.testing.assert_array_equal(nn.relu_backward(x, np.ones(3)), [0.0, 0.0, 1.0])


def test_dropout_is_inverted_and_inactive_at_eval():
    x = np.ones(100_000)
    out, mask = nn.dropout_forward(x, 0.5, True, np.random.default_rng(1))
    assert set(np.unique(out)) <= {0.0, 2.0}
    assert abs(out.mean() - 1.0) < 0.02
    np.testing.assert_array_equal(nn.dropout_backward(np.ones_like(x), mask), out)
    same, none = nn.dropout_forward(x, 0.5, False)
    assert none is None and same is x


@given(st.lists(st.floats(-10, 10), min_size=2, max_size=2), st.integers(0, 1),
       st.floats(0.1, 5.0), st.floats(0.1, 5.0))
def test_weighted_xent_matches_formula(logits, label, w0, w1):
    logits = np.array(logits)
    loss, grad = nn.weighted_softmax_xent(logits, label, (w0, w1))
    w = (w0, w1)[label]
    logsumexp = np.log(np.exp(logits - logits.max()).sum()) + logits.max()
    assert loss == pytest.approx(-w * (logits[label] - logsumexp), rel=1e-9, abs=1e-12)
    fd = np.array([
        (nn.weighted_softmax_xent(logits + h, label, (w0, w1))[0]
         - nn.weighted_softmax_xent(logits - h, label, (w0, w1))[0]) / 2e-6
        for h in np.eye(2) * 1e-6
    ])
    np.testing.assert_allclose(grad, fd, atol=1e-5)


def test_xent_loss_is_clamped():
    loss, _ = nn.weighted_softmax_xent(np.array([0.0, 100.0]), 0)
    assert loss == pytest.approx(-np.log(nn.LOG_CLAMP))


def test_xent_rejects_non_finite():
    with pytest.raises(NumericsError):
        nn.weighted_softmax_xent(np.array([np.nan, 0.0]), 0)


def test_softmax_is_stable():
    p = nn.softmax(np.array([1000.0, 0.0]))
    assert p[0] == 1.0 and np.isfinite(p).all()


def test_adam_first_step_moves_by_lr_times_sign():
    state = nn.AdamState(3, lr=1e-3)
    g = np.array([0.5, -2.0, 1e-3])
    out = nn.adam_step(np.zeros(3), g, state)
    # m_hat = g, v_hat = g^2 after bias correction
    np.testing.assert_allclose(out, -1e-3 * g / (np.abs(g) + 1e-8), rtol=1e-12)
    assert state.step == 1


def test_adam_minimises_a_quadratic():
    target = np.array([1.0, -3.0, 0.5])
    state = nn.AdamState(3, lr=0.05)
    x = np.zeros(3)
    for _ in range(2000):
        x = nn.adam_step(x, 2 * (x - target), state)
    np.testing.assert_allclose(x, target, atol=1e-3)


def test_adam_shape_mismatch():
    with pytest.raises(ShapeError):
        nn.adam_step(np.zeros(3), np.zeros(2), nn.AdamState(3))
