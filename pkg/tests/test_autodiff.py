"""Gradient exactness of every tape op against central finite differences."""

import numpy as np
import pytest

import mtsdvgan.autodiff as ad
from mtsdvgan.autodiff import grad, leaf


def fd_check(build, leaves, h=1e-6, tol=1e-6):
    """Compare grad() against central differences for a scalar objective."""
    gs = grad(build(), leaves)
    for t, g in zip(leaves, gs):
        flat = t.data.ravel()
        gflat = np.asarray(g).ravel()
        for j in range(flat.size):
            old = flat[j]
            flat[j] = old + h
            fp = build().item()
            flat[j] = old - h
            fm = build().item()
            flat[j] = old
            fd = (fp - fm) / (2 * h)
            assert abs(fd - gflat[j]) <= tol * max(abs(fd), abs(gflat[j]), 1.0), \
                f"entry {j}: fd={fd} analytic={gflat[j]}"


rng = np.random.default_rng(0)


def test_elementwise_ops():
    a = leaf(rng.uniform(0.2, 1.5, (3, 4)))
    b = leaf(rng.uniform(0.2, 1.5, (3, 4)))

    def build():
        out = ad.add(ad.mul(a, b), ad.sub(ad.exp(ad.scale(a, 0.3)), ad.log(b)))
        out = ad.add(out, ad.add(ad.tanh(a), ad.sigmoid(b)))
        out = ad.add(out, ad.add(ad.square(a), ad.sqrt(b)))
        return ad.tsum(out)

    fd_check(build, [a, b])


def test_matmul_and_affine():
    x = leaf(rng.normal(size=(4, 3)))
    W = leaf(rng.normal(size=(2, 3)))
    b = leaf(rng.normal(size=2))
    M = leaf(rng.normal(size=(3, 5)))

    def build():
        return ad.add(ad.tsum(ad.affine(x, W, b)), ad.tmean(ad.matmul(x, M)))

    fd_check(build, [x, W, b, M])


def test_reductions_and_shaping():
    x = leaf(rng.normal(size=(2, 5, 3)))

    def build():
        a = ad.tmean(x, axis=0)
        b = ad.tsum(ad.take_step(x, 2))
        c = ad.tsum(ad.reshape(x, (10, 3)))
        d = ad.tsum(ad.slice_cols(ad.reshape(x, (10, 3)), 1, 3))
        return ad.add(ad.tsum(a), ad.add(b, ad.add(c, d)))

    fd_check(build, [x])


def test_concat_and_repeat():
    a = leaf(rng.normal(size=(2, 3)))
    b = leaf(rng.normal(size=(4, 3)))

    def build():
        joined = ad.concat0([a, b])
        rep = ad.repeat_steps(a, 5)
        return ad.add(ad.tsum(ad.square(joined)), ad.tsum(ad.mul(rep, rep)))

    fd_check(build, [a, b])


def test_clamp_gradient_masks_outside():
    x = leaf(np.array([-2.0, 0.3, 2.0]))
    out = grad(ad.tsum(ad.clamp(x, -1.0, 1.0)), [x])[0]
    np.testing.assert_array_equal(out, [0.0, 1.0, 0.0])


def test_unrelated_leaf_gets_zero_gradient():
    a = leaf(np.ones(3))
    b = leaf(np.ones(3))
    g = grad(ad.tsum(ad.square(a)), [b])[0]
    np.testing.assert_array_equal(g, np.zeros(3))


def test_detach_blocks_gradient():
    a = leaf(np.array([2.0]))
    out = ad.mul(a.detach(), a)  # d/da = detached value only
    g = grad(ad.tsum(out), [a])[0]
    np.testing.assert_array_equal(g, [2.0])


def test_shared_subgraph_accumulates():
    x = leaf(np.array([3.0]))
    y = ad.mul(x, x)  # x used twice
    g = grad(ad.tsum(y), [x])[0]
    np.testing.assert_allclose(g, [6.0])


def test_objective_must_be_scalar():
    x = leaf(np.ones(3))
    with pytest.raises(ValueError):
        grad(ad.square(x), [x])


def test_broadcast_bias_gradient():
    x = leaf(rng.normal(size=(4, 3)))
    c = leaf(rng.normal(size=(3,)))

    def build():
        return ad.tsum(ad.mul(ad.add(x, c), ad.add(x, c)))

    fd_check(build, [x, c])
