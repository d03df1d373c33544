"""Adam optimizer behavior."""

import numpy as np
import pytest

from viewmix import Parameter, Tape, Tensor
from viewmix import ops
from viewmix.errors import NumericsError
from viewmix.optim import adam_step


def test_first_step_is_signlike():
    p = Parameter(np.zeros(3), "p")
    p.grad = np.array([0.5, -2.0, 1e-3])
    adam_step([p], lr=1e-3)
    assert np.allclose(p.value, [-1e-3, 1e-3, -1e-3], rtol=1e-2)
    assert p.step_count == 1
    assert np.array_equal(p.grad, np.zeros(3))


def test_zero_grad_no_movement():
    p = Parameter(np.array([1.0, -2.0]), "p")
    adam_step([p])
    assert np.array_equal(p.value, [1.0, -2.0])


def test_converges_on_quadratic():
    # f(w) = (w - 3)^2 from w = 0
    p = Parameter(np.array([0.0]), "w")
    for _ in range(200):
        p.grad = 2.0 * (p.value - 3.0)
        adam_step([p], lr=0.1)
    assert abs(p.value[0] - 3.0) < 0.05


def test_nan_grad_aborts_with_parameter_name():
    p = Parameter(np.zeros(2), "layer3/kernel")
    p.grad = np.array([np.nan, 0.0])
    with pytest.raises(NumericsError, match="layer3/kernel"):
        adam_step([p])


def test_step_count_increments_once_per_step():
    p = Parameter(np.zeros(1), "p")
    for want in (1, 2, 3):
        p.grad = np.ones(1)
        adam_step([p])
        assert p.step_count == want


def test_trains_through_tape():
    rng = np.random.default_rng(0)
    w = Parameter(rng.normal(size=(4, 2)) * 0.1, "w")
    b = Parameter(np.zeros(2), "b")
    x = np.array([0.5, -1.0, 2.0, 0.1])
    losses = []
    for _ in range(150):
        with Tape() as tape:
            y = ops.dense(Tensor(x), tape.watch(w), tape.watch(b))
            loss = ops.nll_loss(ops.softmax(y), 1)
        tape.backward(loss)
        losses.append(loss.item())
        adam_step([w, b], lr=0.05)
    assert losses[-1] < 0.05 < losses[0]
