"""Core op semantics against hand values and brute-force oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from viewmix import ConfigurationError, Parameter, Tape, Tensor
from viewmix import ops
from viewmix.rng import Rng

from oracles import conv2d_loops, maxpool2d_loops, same_pad_amounts


def t(arr, dtype="f64"):
    return Tensor(np.asarray(arr), dtype=dtype)


class TestConv2d:
    def test_scalar_scaling_identity(self):
        x = t([[[1.0], [2.0]], [[3.0], [4.0]]])
        k = t(np.full((1, 1, 1, 1), 2.0))
        b = t([0.0])
        y = ops.conv2d(x, k, b, (1, 1))
        assert np.array_equal(y.data[:, :, 0], [[2, 4], [6, 8]])

    def test_default_stack_shape(self):
        x = t(np.zeros((120, 160, 4)), "f32")
        k = t(np.zeros((3, 9, 4, 32)), "f32")
        b = t(np.zeros(32), "f32")
        y = ops.conv2d(x, k, b, (3, 3))
        assert y.shape == (40, 54, 32)

    def test_matches_loop_oracle(self):
        rng = Rng(5, "conv")
        x = rng.uniform(25).reshape(5, 5, 1)
        k = rng.uniform(9, -1, 1).reshape(3, 3, 1, 1)
        b = rng.uniform(1)
        got = ops.conv2d(t(x), t(k), t(b), (1, 1)).data
        want = conv2d_loops(x, k, b, (1, 1))
        assert np.abs(got - want).max() <= 1e-6 * max(1.0, np.abs(want).max())

    def test_channel_mismatch_raises(self):
        with pytest.raises(ConfigurationError):
            ops.conv2d(t(np.zeros((4, 4, 2))), t(np.zeros((3, 3, 3, 8))), t(np.zeros(8)))

    def test_zero_extent_rejected(self):
        with pytest.raises(ConfigurationError):
            Tensor(np.zeros((0, 4, 3)))

    @pytest.mark.parametrize("seed", range(8))
    def test_batched_matches_single(self, seed):
        rng = Rng(seed, "convb")
        x = rng.uniform(2 * 6 * 7 * 3).reshape(2, 6, 7, 3)
        k = rng.uniform(3 * 3 * 3 * 4, -1, 1).reshape(3, 3, 3, 4)
        b = rng.uniform(4)
        y = ops.conv2d(t(x), t(k), t(b), (2, 2)).data
        for n in range(2):
            single = ops.conv2d(t(x[n]), t(k), t(b), (2, 2)).data
            assert np.allclose(y[n], single, atol=1e-12)


class TestMaxPool:
    def test_two_by_two(self):
        y = ops.maxpool2d(t([[[1.0], [2.0]], [[3.0], [4.0]]]), (2, 2), (2, 2))
        assert y.data.reshape(()) == 4.0

    def test_shape_oracle(self):
        x = t(np.zeros((40, 54, 32)), "f32")
        y = ops.maxpool2d(x, (4, 4), (3, 3))
        assert y.shape == (14, 18, 32)

    def test_matches_loop_oracle_exactly(self):
        rng = Rng(3, "pool")
        x = rng.uniform(36).reshape(6, 6, 1)
        got = ops.maxpool2d(t(x), (2, 2), (2, 2)).data
        want = maxpool2d_loops(x, (2, 2), (2, 2))
        assert np.array_equal(got, want)


class TestExhaustiveOracleSuite:
    """conv2d and maxpool2d equal naive loops on small random inputs."""

    def test_conv_random_suite(self):
        rng = Rng(11, "suite")
        for case in range(120):
            H = int(rng.integers(8)[0]) + 1
            W = int(rng.integers(8)[0]) + 1
            C = int(rng.integers(3)[0]) + 1
            F = int(rng.integers(3)[0]) + 1
            kh = int(rng.integers(4)[0]) + 1
            kw = int(rng.integers(4)[0]) + 1
            sh = int(rng.integers(3)[0]) + 1
            sw = int(rng.integers(3)[0]) + 1
            x = rng.uniform(H * W * C, -1, 1).reshape(H, W, C)
            k = rng.uniform(kh * kw * C * F, -1, 1).reshape(kh, kw, C, F)
            b = rng.uniform(F, -1, 1)
            got = ops.conv2d(t(x), t(k), t(b), (sh, sw)).data
            want = conv2d_loops(x, k, b, (sh, sw))
            assert got.shape == want.shape, (case, got.shape, want.shape)
            assert np.abs(got - want).max() < 1e-9

    def test_pool_random_suite(self):
        rng = Rng(12, "suite")
        for case in range(120):
            H = int(rng.integers(8)[0]) + 1
            W = int(rng.integers(8)[0]) + 1
            C = int(rng.integers(3)[0]) + 1
            kh = int(rng.integers(4)[0]) + 1
            kw = int(rng.integers(4)[0]) + 1
            sh = int(rng.integers(3)[0]) + 1
            sw = int(rng.integers(3)[0]) + 1
            x = rng.uniform(H * W * C, -1, 1).reshape(H, W, C)
            got = ops.maxpool2d(t(x), (kh, kw), (sh, sw)).data
            want = maxpool2d_loops(x, (kh, kw), (sh, sw))
            assert np.array_equal(got, want), case


@settings(max_examples=60, deadline=None)
@given(
    size=st.integers(1, 64),
    k=st.integers(1, 5),
    s=st.integers(1, 3),
)
def test_shape_propagation_property(size, k, s):
    """Output extent along each axis is ceil(extent / stride)."""
    x = Tensor(np.zeros((size, 3, 1), dtype=np.float32))
    y = ops.maxpool2d(x, (k, 1), (s, 1))
    assert y.shape[0] == -(-size // s)
    expected, _ = same_pad_amounts(size, k, s)
    assert y.shape[0] == expected


class TestDense:
    def test_identity(self):
        y = ops.dense(t([1.0, 0.0]), t(np.eye(2)), t([0.0, 0.0]))
        assert np.array_equal(y.data, [1.0, 0.0])

    def test_hand_arithmetic(self):
        y = ops.dense(t([1.0, 2.0]), t([[1.0, 3.0], [2.0, 4.0]]), t([1.0, 1.0]))
        assert np.array_equal(y.data, [6.0, 12.0])

    def test_weight_gradient_matches_finite_differences(self):
        rng = Rng(7, "dense")
        w = Parameter(rng.uniform(12, -1, 1).reshape(3, 4), "w")
        xv = rng.uniform(3, -1, 1)
        v = rng.uniform(4, -1, 1)

        def loss_value():
            with Tape() as tape:
                y = ops.dense(t(xv), tape.watch(w), t(np.zeros(4)))
                s = float((y.data * v).sum())
            return tape, y, s

        tape, y, _ = loss_value()
        y.grad = v.copy()
        for out, fn in reversed(tape._records):
            if out.grad is not None:
                fn(out.grad)
        for p, leafT in tape._watched:
            if leafT.grad is not None:
                p.grad += leafT.grad
        h = 1e-6
        for idx in [(0, 0), (1, 2), (2, 3)]:
            saved = w.value[idx]
            w.value[idx] = saved + h
            up = float((ops.dense(t(xv), ops.leaf(w), t(np.zeros(4))).data * v).sum())
            w.value[idx] = saved - h
            dn = float((ops.dense(t(xv), ops.leaf(w), t(np.zeros(4))).data * v).sum())
            w.value[idx] = saved
            num = (up - dn) / (2 * h)
            assert abs(w.grad[idx] - num) / max(abs(num), 1e-8) < 1e-4

    def test_extent_mismatch(self):
        with pytest.raises(ConfigurationError):
            ops.dense(t([1.0, 2.0, 3.0]), t(np.eye(2)), t([0.0, 0.0]))


class TestRelu:
    def test_literals(self):
        assert np.array_equal(ops.relu(t([-1.0, 0.0, 2.0])).data, [0.0, 0.0, 2.0])
        assert np.array_equal(ops.relu(t([-3.0, -0.5])).data, [0.0, 0.0])

    def test_gradient_mask(self):
        x = t([-1.0, 0.5, 2.0, -0.2])
        with Tape() as tape:
            y = ops.relu(x)
            loss = ops.nll_loss(ops.softmax(y), 0)
        tape.backward(loss)
        # relu grad is nonzero exactly where x > 0 (softmax grad is dense)
        assert (x.grad[np.asarray([-1.0, 0.5, 2.0, -0.2]) <= 0] == 0).all()
        assert (x.grad[np.asarray([-1.0, 0.5, 2.0, -0.2]) > 0] != 0).all()


class TestSoftmax:
    def test_symmetry(self):
        assert np.allclose(ops.softmax(t([0.0, 0.0])).data, [0.5, 0.5])

    def test_shift_invariance_no_overflow(self):
        y = ops.softmax(t([1000.0, 1000.0, 1000.0])).data
        assert np.isfinite(y).all()
        assert np.allclose(y, 1.0 / 3.0)
        a = ops.softmax(t([1.0, 2.0, 3.0])).data
        b = ops.softmax(t([1.0 + 555.0, 2.0 + 555.0, 3.0 + 555.0])).data
        assert np.abs(a - b).max() < 1e-12

    def test_hand_arithmetic(self):
        y = ops.softmax(t([np.log(1.0), np.log(3.0)])).data
        assert np.allclose(y, [0.25, 0.75], atol=1e-12)

    def test_sums_to_one(self):
        rng = Rng(9, "sm")
        for _ in range(20):
            y = ops.softmax(t(rng.uniform(6, -30, 30))).data
            assert abs(y.sum() - 1.0) < 1e-6
            assert (y > 0).all()


class TestBatchNorm:
    def test_constant_input_gives_beta(self):
        x = t(np.full((8, 3), 4.25))
        state = ops.BatchNormState(3, np.float64)
        beta = np.array([0.5, -1.0, 2.0])
        y = ops.batchnorm(x, t(np.ones(3)), t(beta), state, train=True)
        assert np.allclose(y.data, np.broadcast_to(beta, (8, 3)), atol=1e-3)

    def test_plus_minus_one(self):
        x = t(np.array([[-1.0], [1.0]]))
        state = ops.BatchNormState(1, np.float64)
        y = ops.batchnorm(x, t(np.ones(1)), t(np.zeros(1)), state, train=True)
        assert np.allclose(y.data, [[-1.0], [1.0]], atol=1e-4)

    def test_statistics_oracle(self):
        rng = Rng(21, "bn")
        x = t(rng.uniform(64 * 5, -2, 3).reshape(64, 5))
        state = ops.BatchNormState(5, np.float64)
        y = ops.batchnorm(x, t(np.ones(5)), t(np.zeros(5)), state, train=True).data
        assert np.abs(y.mean(axis=0)).max() < 1e-5
        assert np.abs(y.var(axis=0) - 1.0).max() < 1e-3

    def test_infer_before_train_rejected(self):
        state = ops.BatchNormState(2, np.float64)
        with pytest.raises(ConfigurationError):
            ops.batchnorm(t(np.zeros((4, 2))), t(np.ones(2)), t(np.zeros(2)), state, train=False)

    def test_infer_uses_running_stats(self):
        rng = Rng(22, "bn2")
        state = ops.BatchNormState(2, np.float64)
        for _ in range(200):
            x = t(rng.normal(32, 2.0).reshape(16, 2) + 3.0)
            ops.batchnorm(x, t(np.ones(2)), t(np.zeros(2)), state, train=True)
        y = ops.batchnorm(t(np.full((1, 2), 3.0)), t(np.ones(2)), t(np.zeros(2)), state, False)
        assert np.abs(y.data).max() < 0.2  # running mean has converged near 3


class TestConcatFlatten:
    def test_concat_literal(self):
        y = ops.concat([t([1.0, 2.0]), t([3.0])], axis=0)
        assert np.array_equal(y.data, [1.0, 2.0, 3.0])

    def test_concat_single_part(self):
        y = ops.concat([t([4.0, 5.0])], axis=0)
        assert np.array_equal(y.data, [4.0, 5.0])

    def test_concat_round_trip(self):
        rng = Rng(13, "cat")
        parts = [rng.uniform(n).reshape(2, n // 2) for n in (4, 6, 2)]
        y = ops.concat([t(p) for p in parts], axis=1).data
        off = 0
        for p in parts:
            w = p.shape[1]
            assert np.array_equal(y[:, off : off + w], p)
            off += w

    def test_concat_mismatch(self):
        with pytest.raises(ConfigurationError):
            ops.concat([t(np.zeros((2, 3))), t(np.zeros((3, 3)))], axis=1)

    def test_flatten_literals(self):
        assert np.array_equal(ops.flatten(t([[1.0, 2.0], [3.0, 4.0]])).data, [1, 2, 3, 4])
        x = Rng(1, "f").uniform(32).reshape(1, 1, 32)
        assert np.array_equal(ops.flatten(t(x)).data, x.ravel())

    def test_flatten_reshape_round_trip(self):
        rng = Rng(14, "rt")
        x = rng.uniform(24).reshape(2, 3, 4)
        y = ops.reshape(ops.flatten(t(x)), (2, 3, 4))
        assert np.array_equal(y.data, x)


class TestNll:
    def test_uniform(self):
        for target in range(4):
            loss = ops.nll_loss(t([0.25] * 4), target)
            assert abs(loss.item() - np.log(4.0)) < 1e-9

    def test_certain(self):
        loss = ops.nll_loss(t([0.0, 1.0, 0.0]), 1)
        assert abs(loss.item()) < 1e-9

    def test_hand_arithmetic(self):
        loss = ops.nll_loss(t([0.25, 0.75]), 1)
        assert abs(loss.item() - 0.287682) < 1e-5

    def test_out_of_range(self):
        from viewmix.errors import UsageError

        with pytest.raises(UsageError):
            ops.nll_loss(t([0.5, 0.5]), 2)

    def test_batched_mean(self):
        d = t(np.array([[0.25, 0.75], [0.5, 0.5]]))
        loss = ops.nll_loss(d, np.array([1, 0]))
        want = (-np.log(0.75) - np.log(0.5)) / 2
        assert abs(loss.item() - want) < 1e-9
