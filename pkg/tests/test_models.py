import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rmda import models
from rmda.core import StructureError
from rmda.data import Dataset

import fd_cases
import oracles as O

SPECS = [models.LogisticRegression(6, 2), models.LogisticRegression(5, 4),
         models.Mlp((6, 5, 3)), models.TinyConvNet(1, 5, 5, 2, 2, 3, 3)]


def _batch(spec, n, rng):
    return rng.standard_normal((n, spec.in_dim)), rng.integers(0, spec.classes, n)


def test_uniform_softmax_at_zero():
    spec = models.LogisticRegression(784, 10)
    rng = np.random.default_rng(0)
    loss, _ = models.loss_and_grad(spec, models.zeros(spec), _batch(spec, 7, rng))
    assert loss == pytest.approx(2.302585092994046, rel=1e-15)
    for spec in SPECS:
        X = np.zeros((3, spec.in_dim))
        z = models.logits(spec, models.zeros(spec), X)
        assert np.allclose(z, z[:, :1])


@pytest.mark.parametrize("kind", fd_cases.KINDS)
def test_gradient_matches_finite_differences(kind):
    results = fd_cases.check(kind, n_instances=50, seed=3)
    assert max(r[0] for r in results) <= 1.0
    assert max(r[1] for r in results) <= 1e-12


def test_binary_logistic_gradient_by_hand():
    # three samples, W = 0: p(class 1) = 1/2, so dL/dw = mean((1/2 - y) x)
    X = np.array([[1.0, 2.0], [-1.0, 0.5], [3.0, -1.0]])
    y = np.array([1, 0, 1])
    spec = models.LogisticRegression(2, 2)
    _, g = models.loss_and_grad(spec, np.zeros(3), (X, y))
    expect_w = ((0.5 - y)[:, None] * X).mean(axis=0)
    assert np.allclose(g, [*expect_w, (0.5 - y).mean()], rtol=1e-15, atol=1e-16)


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: type(s).__name__)
def test_duplicated_batch_and_order_invariance(spec):
    rng = np.random.default_rng(1)
    W = rng.standard_normal(models.dim(spec)) * 0.5
    X, y = _batch(spec, 5, rng)
    loss, g = models.loss_and_grad(spec, W, (X, y))
    loss2, g2 = models.loss_and_grad(spec, W, (np.vstack([X, X]), np.concatenate([y, y])))
    assert loss2 == pytest.approx(loss, rel=1e-14) and np.allclose(g2, g, rtol=1e-13, atol=1e-16)
    perm = rng.permutation(5)
    loss3, g3 = models.loss_and_grad(spec, W, (X[perm], y[perm]))
    assert loss3 == pytest.approx(loss, rel=1e-14) and np.allclose(g3, g, rtol=1e-13, atol=1e-16)


def test_full_gradient_halves_and_single_sample():
    spec = models.Mlp((4, 3, 2))
    rng = np.random.default_rng(2)
    W = rng.standard_normal(models.dim(spec))
    X, y = _batch(spec, 8, rng)
    data = Dataset(X, y, 2)
    full = models.full_gradient(spec, W, data, chunk=4)
    h1 = models.loss_and_grad(spec, W, (X[:4], y[:4]))[1]
    h2 = models.loss_and_grad(spec, W, (X[4:], y[4:]))[1]
    assert np.array_equal(full, (h1 * 4 + h2 * 4) / 8)
    assert np.allclose(full, models.loss_and_grad(spec, W, (X, y))[1], rtol=1e-13, atol=1e-16)
    one = Dataset(X[:1], y[:1], 2)
    assert np.allclose(models.full_gradient(spec, W, one),
                       models.loss_and_grad(spec, W, (X[:1], y[:1]))[1], rtol=0, atol=0)


@settings(max_examples=30)
@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_no_nan_for_large_inputs(a, b):
    spec = models.LogisticRegression(2, 3)
    W = np.array([a, b, -a, 1.0, b, -b, 0.0, 0.0, 0.0])
    X = np.array([[a, b], [b, -a]])
    loss, g = models.loss_and_grad(spec, W, (X, np.array([0, 2])))
    assert math.isfinite(loss) and np.all(np.isfinite(g))


def test_loss_matches_reference_at_large_logits():
    spec = models.LogisticRegression(3, 3)
    W = np.array([300.0, -200, 10, -500, 1, 2, 0, 0, 3, 0, 0, 0])
    X = np.array([[1.0, 2.0, 3.0]])
    loss, _ = models.loss_and_grad(spec, W, (X, np.array([1])))
    assert loss == pytest.approx(O.logistic_loss_ref(W, X, [1], 3, 3), rel=1e-14)


def test_shape_errors():
    spec = models.LogisticRegression(3, 2)
    with pytest.raises(StructureError):
        models.loss_and_grad(spec, np.zeros(4), (np.zeros((2, 4)), np.zeros(2, int)))
    with pytest.raises(StructureError):
        models.loss_and_grad(spec, np.zeros(5), (np.zeros((2, 3)), np.zeros(2, int)))
    with pytest.raises(StructureError):
        models.loss_and_grad(spec, np.zeros(4), (np.zeros((0, 3)), np.zeros(0, int)))
    with pytest.raises(StructureError):
        models.loss_and_grad(spec, np.zeros(4), (np.zeros((1, 3)), np.array([2])))


def test_build_groups_counts():
    fc = models.Mlp((4, 3))                        # weight is 3 x 4 (out x in)
    p = models.build_groups(fc, "column")
    assert len(p) == 4 and set(p.sizes) == {3}
    assert len(models.build_groups(fc, "row")) == 3
    conv = models.TinyConvNet(channels=3, height=4, width=4, filters=2, kh=2, kw=2)
    k = models.build_groups(conv, {"conv": "kernel", "fc": "column"})
    conv_groups = [g for g in k.groups if g.max() < 24]
    assert len(conv_groups) == 6 and all(g.size == 4 for g in conv_groups)
    assert np.allclose(k.weights[:6], 2.0)
    ch = models.build_groups(conv, {"conv": "channel", "fc": "row"})
    assert [g.size for g in ch.groups[:3]] == [8, 8, 8]
    fl = models.build_groups(conv, {"conv": "filter", "fc": "row"})
    assert [g.size for g in fl.groups[:2]] == [12, 12]
    with pytest.raises(StructureError):
        models.build_groups(conv, "column")


def test_column_groups_follow_input_neurons():
    spec = models.Mlp((4, 3))
    p = models.build_groups(spec, "column")
    W = np.zeros(models.dim(spec))
    A = W[:12].reshape(3, 4)
    A[:, 2] = 1.0
    assert models.logits(spec, W, np.eye(4)[[2]]).any()
    assert (p.nonzero_counts(W) > 0).tolist() == [False, False, True, False]


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: type(s).__name__)
def test_groups_cover_weights_only(spec):
    scheme = {"conv": "kernel", "fc": "column"} if isinstance(spec, models.TinyConvNet) else "column"
    covered = models.build_groups(spec, scheme).covered(models.dim(spec))
    expect = np.zeros(models.dim(spec), bool)
    for slot in spec.layout:
        if slot.name.endswith(".weight"):
            expect[slot.start:slot.stop] = True
    assert np.array_equal(covered, expect)


def test_init_scale_and_description_round_trip():
    spec = models.TinyConvNet()
    W = models.init_params(spec, np.random.default_rng(0))
    conv = W.layer("conv.weight")
    assert np.abs(conv).max() <= 1 / 3
    for s in SPECS:
        assert models.from_description(models.describe(s)) == s
