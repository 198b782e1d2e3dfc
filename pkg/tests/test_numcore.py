import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prosofuse.errors import ConfigError, DimensionError, NonFiniteError
from prosofuse.numcore import (
    AdamState,
    Conv1d,
    Dropout,
    Embedding,
    LayerNorm,
    Linear,
    Param,
    ReLU,
    adam_step,
    as_matrix,
    grad_check,
    matmul,
    precision,
    rng_from_seed,
    softmax_rows,
)


def naive_matmul(a, b):
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


class TestMatmul:
    def test_identity(self):
        a = np.arange(12.0).reshape(3, 4)
        assert np.array_equal(matmul(a, np.eye(4)), a)

    def test_diagonal_scaling(self):
        out = matmul(np.diag([1.0, 2.0]), np.array([[3.0], [4.0]]))
        assert out.tolist() == [[3.0], [8.0]]

    def test_matches_triple_loop(self):
        rng = np.random.default_rng(0)
        a, b = rng.standard_normal((5, 4)), rng.standard_normal((4, 3))
        assert np.max(np.abs(matmul(a, b) - naive_matmul(a, b))) < 1e-12

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 32), st.integers(1, 32), st.integers(1, 32), st.integers(0, 2**31))
    def test_matches_triple_loop_fuzzed(self, m, k, n, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.standard_normal((m, k)), rng.standard_normal((k, n))
        assert np.max(np.abs(matmul(a, b) - naive_matmul(a, b))) < 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            matmul(np.ones((2, 3)), np.ones((2, 3)))

    def test_checked_mode_rejects_nonfinite(self):
        with pytest.raises(NonFiniteError):
            matmul(np.array([[1e308]]), np.array([[1e308]]))
        with pytest.raises(NonFiniteError):
            as_matrix([[np.nan, 1.0]])


class TestSoftmax:
    def test_uniform_row(self):
        out = softmax_rows(np.full((2, 5), 3.3))
        assert np.allclose(out, 0.2)

    def test_single_column(self):
        assert np.array_equal(softmax_rows(np.array([[5.0], [-2.0]])), np.ones((2, 1)))

    def test_shift_invariance(self):
        x = np.random.default_rng(1).standard_normal((3, 6))
        assert np.allclose(softmax_rows(x + 123.4), softmax_rows(x), atol=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**31), st.sampled_from([1.0, 100.0, 1e4]))
    def test_rows_stochastic(self, rows, cols, seed, scale):
        x = np.random.default_rng(seed).standard_normal((rows, cols)) * scale
        out = softmax_rows(x)
        assert np.all(out >= 0)
        assert np.allclose(out.sum(axis=1), 1.0, atol=1e-6)


class TestLinear:
    def test_identity_weights(self):
        with precision(np.float64):
            lin = Linear(3, 3, rng_from_seed(0))
        lin.w.value[...] = np.eye(3)
        x = np.random.default_rng(0).standard_normal((4, 3))
        assert np.array_equal(lin.forward(x), x)

    def test_sum_gradient_and_bias(self):
        with precision(np.float64):
            lin = Linear(4, 3, rng_from_seed(1))
            x = np.random.default_rng(2).standard_normal((5, 4))
            lin.forward(x)
            dx = lin.backward(np.ones((5, 3)))
            expected = np.broadcast_to(lin.w.value.sum(axis=0), (5, 4))
            assert np.allclose(dx, expected, atol=1e-12)
            assert np.array_equal(lin.b.grad, np.full(3, 5.0))

    def test_finite_differences(self):
        with precision(np.float64):
            lin = Linear(4, 3, rng_from_seed(1))
            x = np.random.default_rng(3).standard_normal((5, 4))
            lin.forward(x)
            dx = lin.backward(np.ones((5, 3)))
            err = grad_check(lambda: float(lin.forward(x).sum()), [x], [dx])
        assert err < 1e-6

    def test_shape_mismatch(self):
        lin = Linear(4, 3, rng_from_seed(0))
        with pytest.raises(DimensionError):
            lin.forward(np.ones((2, 5), dtype=np.float32))


class TestLayerNorm:
    def test_constant_row_gives_beta(self):
        ln = LayerNorm(4)
        ln.beta.value[...] = [0.5, -1.0, 2.0, 3.0]
        ln.gamma.value[...] = [2.0, 3.0, 4.0, 5.0]
        out = ln.forward(np.full((2, 4), 0.1, dtype=np.float32))
        assert np.array_equal(out, np.broadcast_to(ln.beta.value, (2, 4)))

    def test_zero_mean_rows(self):
        ln = LayerNorm(6)
        out = ln.forward(np.random.default_rng(0).standard_normal((3, 6)).astype(np.float32))
        assert np.all(np.abs(out.mean(axis=1)) < 1e-6)

    def test_bad_eps(self):
        with pytest.raises(ConfigError):
            LayerNorm(3, eps=0.0)


class TestDropout:
    def test_eval_mode_bitwise(self):
        x = np.random.default_rng(0).standard_normal((4, 4))
        assert Dropout(0.5).forward(x, training=False, rng=None) is x

    def test_rate_zero_bitwise(self):
        x = np.random.default_rng(0).standard_normal((4, 4))
        out = Dropout(0.0).forward(x, training=True, rng=rng_from_seed(0))
        assert np.array_equal(out, x)

    def test_rate_one_rejected(self):
        with pytest.raises(ConfigError):
            Dropout(1.0)

    def test_monte_carlo_expectation(self):
        x = np.array([[1.5, -2.0, 0.7]])
        drop = Dropout(0.5)
        rng = rng_from_seed(42)
        total = np.zeros_like(x)
        draws = 10_000
        for _ in range(draws):
            total += drop.forward(x, training=True, rng=rng)
        mean = total / draws
        assert np.all(np.abs(mean - x) <= 0.02 * np.abs(x) + 1e-12)

    def test_reproducible(self):
        x = np.ones((8, 8))
        a = Dropout(0.3).forward(x, True, rng_from_seed(5, 1))
        b = Dropout(0.3).forward(x, True, rng_from_seed(5, 1))
        assert np.array_equal(a, b)


def hand_adam(p, grads, lr, b1=0.9, b2=0.98, eps=1e-9):
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        p = p - lr * m_hat / (np.sqrt(v_hat) + eps)
    return p


class TestAdam:
    def test_zero_gradient_fixed_point(self):
        p = Param(np.array([[1.0, -2.0]]))
        adam_step({"p": p}, AdamState(lr=0.1))
        assert p.value.tolist() == [[1.0, -2.0]]

    def test_first_step_closed_form(self):
        p = Param(np.array([[0.0]]))
        p.grad[...] = 4.0
        adam_step({"p": p}, AdamState(lr=1e-3))
        assert p.value[0, 0] == pytest.approx(-1e-3 * 4.0 / (4.0 + 1e-9), rel=1e-12)
        assert p.grad[0, 0] == 0.0

    def test_two_steps_match_unrolled(self):
        p = Param(np.array([[0.3, -0.7]]))
        state = AdamState(lr=1e-2)
        grads = [np.array([[0.5, -1.5]]), np.array([[0.5, -1.5]])]
        for g in grads:
            p.grad[...] = g
            adam_step({"p": p}, state)
        ref = hand_adam(np.array([[0.3, -0.7]]), grads, 1e-2)
        assert np.max(np.abs(p.value - ref)) < 1e-12
        assert state.step == 2

    def test_bad_betas(self):
        with pytest.raises(ConfigError):
            AdamState(lr=1.0, beta1=1.0)


class TestGradCheck:
    def test_sum(self):
        x = np.random.default_rng(0).standard_normal((3, 3))
        assert grad_check(lambda: float(x.sum()), [x], [np.ones_like(x)]) < 1e-9

    def test_constant(self):
        x = np.random.default_rng(0).standard_normal((2, 2))
        assert grad_check(lambda: 3.0, [x], [np.zeros_like(x)]) == 0.0

    def test_nonfinite(self):
        x = np.array([1.0])
        with pytest.raises(NonFiniteError):
            grad_check(lambda: float("nan"), [x], [np.zeros(1)])

    def test_two_layer_ffnn_mse(self):
        with precision(np.float64):
            rng = rng_from_seed(3)
            l1, act, l2 = Linear(4, 6, rng), ReLU(), Linear(6, 2, rng)
            x = np.random.default_rng(1).standard_normal((5, 4))
            y = np.random.default_rng(2).standard_normal((5, 2))

            def loss():
                out = l2.forward(act.forward(l1.forward(x)))
                return float(np.mean((out - y) ** 2))

            out = l2.forward(act.forward(l1.forward(x)))
            l1.backward(act.backward(l2.backward(2 * (out - y) / out.size)))
            err = grad_check(loss, [l1.w.value, l1.b.value, l2.w.value], [l1.w.grad, l1.b.grad, l2.w.grad])
        assert err < 1e-5


def _weighted_check(layer, x, proj, fwd):
    """Check d sum(proj * layer(x)) for input and every param of ``layer``."""
    y = fwd(x)
    layer.zero_grad()
    dx = layer.backward(proj)
    params = list(layer.params().values())
    arrays = [p.value for p in params]
    grads = [p.grad.copy() for p in params]
    if dx is not None:
        arrays.append(x)
        grads.append(dx)
    assert y.shape == proj.shape
    return grad_check(lambda: float(np.sum(proj * fwd(x))), arrays, grads)


@settings(max_examples=12, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 5), st.integers(1, 6), st.integers(1, 6))
def test_layers_survive_gradcheck_fuzzed(seed, length, d_in, d_out):
    gen = np.random.default_rng(seed)
    with precision(np.float64):
        rng = rng_from_seed(seed)
        x = gen.standard_normal((2, length, d_in))
        cases = [
            (Linear(d_in, d_out, rng), None, d_out),
            (Conv1d(d_in, d_out, 3, rng), None, d_out),
            (LayerNorm(d_in), None, d_in),
        ]
        for layer, _, width in cases:
            layer_params = layer.params()
            for p in layer_params.values():
                p.value[...] = gen.standard_normal(p.value.shape)
            proj = gen.standard_normal((2, length, width))
            assert _weighted_check(layer, x, proj, layer.forward) < 1e-4

        drop = Dropout(0.3)
        proj = gen.standard_normal(x.shape)
        fwd = lambda z: drop.forward(z, True, rng_from_seed(seed, 9))  # noqa: E731
        assert _weighted_check(drop, x, proj, fwd) < 1e-4

        emb = Embedding(7, d_out, rng)
        ids = gen.integers(0, 7, size=(2, length))
        emb.forward(ids)
        proj = gen.standard_normal((2, length, d_out))
        emb.backward(proj)
        err = grad_check(lambda: float(np.sum(proj * emb.forward(ids))), [emb.table.value], [emb.table.grad])
        assert err < 1e-4


def test_conv_matches_naive():
    with precision(np.float64):
        conv = Conv1d(2, 3, 3, rng_from_seed(0))
    x = np.random.default_rng(0).standard_normal((5, 2))
    out = conv.forward(x)
    w = conv.w.value.reshape(3, 3, 2)  # out, tap, in
    xp = np.vstack([np.zeros((1, 2)), x, np.zeros((1, 2))])
    ref = np.zeros((5, 3))
    for t in range(5):
        for o in range(3):
            ref[t, o] = conv.b.value[o] + sum(w[o, j] @ xp[t + j] for j in range(3))
    assert np.allclose(out, ref, atol=1e-12)


def test_rng_reproducible():
    assert np.array_equal(rng_from_seed(7).random(5), rng_from_seed(7).random(5))
    assert not np.array_equal(rng_from_seed(7, 1).random(5), rng_from_seed(7, 2).random(5))
