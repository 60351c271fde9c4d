import numpy as np
import pytest

from mtsdvgan.autodiff import leaf
from mtsdvgan.optim import NonFiniteGradient, rmsprop_init, rmsprop_step


def test_zero_gradient_leaves_parameters():
    p = leaf(np.array([1.0, -2.0, 3.0]))
    state = rmsprop_init([p])
    rmsprop_step([p], [np.zeros(3)], state, lr=0.1)
    np.testing.assert_array_equal(p.data, [1.0, -2.0, 3.0])


def test_first_step_arithmetic():
    # fresh state, g = 1, lr = 0.1, rho = 0.9:
    # acc = 0.1, delta = -0.1 / sqrt(0.1 + 1e-8)
    p = leaf(np.array([0.0]))
    state = rmsprop_init([p])
    rmsprop_step([p], [np.array([1.0])], state, lr=0.1)
    assert state.acc[0][0] == pytest.approx(0.1, rel=1e-12)
    expected = -0.1 / np.sqrt(0.1 + 1e-8)
    assert p.data[0] == pytest.approx(expected, rel=1e-12)
    assert p.data[0] == pytest.approx(-0.31623, abs=1e-5)


def test_repeated_gradient_step_approaches_lr():
    p = leaf(np.array([0.0]))
    state = rmsprop_init([p])
    lr = 0.05
    prev = p.data.copy()
    for _ in range(400):
        prev = p.data.copy()
        rmsprop_step([p], [np.array([1.0])], state, lr)
    final_step = abs(p.data[0] - prev[0])
    assert final_step == pytest.approx(lr, rel=1e-3)


def test_lr_zero_is_identity_for_any_gradient():
    rng = np.random.default_rng(0)
    p = leaf(rng.normal(size=(4, 3)))
    before = p.data.copy()
    state = rmsprop_init([p])
    rmsprop_step([p], [rng.normal(size=(4, 3)) * 100], state, lr=0.0)
    np.testing.assert_array_equal(p.data, before)


def test_nonfinite_gradient_rejected():
    p = leaf(np.zeros(2))
    state = rmsprop_init([p])
    with pytest.raises(NonFiniteGradient):
        rmsprop_step([p], [np.array([1.0, np.inf])], state, lr=0.1)


def test_shape_mismatch_rejected():
    p = leaf(np.zeros(2))
    state = rmsprop_init([p])
    with pytest.raises(ValueError):
        rmsprop_step([p], [np.zeros(3)], state, lr=0.1)
