import copy
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ctxzsl.errors import DataError, NumericError
from ctxzsl.mlp import (
    AdamState, TrainConfig, _split_sizes, adam_step, bce_loss, forward, gradient_check, init_model,
    loss_and_grads, mean_loss, predict, relative_error, train,
)

from oracles import central_difference


def zero_model(d):
    m = init_model(d, seed=0)
    for p in m.params():
        p[...] = 0.0
    return m


def test_layout_and_parameter_count():
    m = init_model(163, seed=0)
    assert m.layout == [163, 70, 30, 70, 30, 70, 1]
    assert m.n_params == 20151
    assert all(np.all(b == 0) for b in m.biases)


def test_hidden_layers_alternate():
    hidden = init_model(4).layout[1:-1]
    assert len(hidden) == 5 and set(hidden) <= {30, 70}
    assert all(a != b for a, b in zip(hidden, hidden[1:]))


def test_init_seeded():
    a, b, c = init_model(10, seed=4), init_model(10, seed=4), init_model(10, seed=5)
    assert all(np.array_equal(x, y) for x, y in zip(a.params(), b.params()))
    assert not np.array_equal(a.weights[0], c.weights[0])


def test_init_rejects_zero_input():
    with pytest.raises(DataError):
        init_model(0)


def test_zero_model_outputs_half():
    m = zero_model(7)
    x = np.arange(7.0)
    assert forward(m, x) == 0.5
    assert forward(m, x, "train", np.random.default_rng(0)) == 0.5
    assert predict(m, [np.zeros(7)]).tolist() == [0.5]


def test_infer_deterministic_and_dimension_checked():
    m = init_model(5, seed=1)
    x = np.random.default_rng(0).normal(size=5)
    assert forward(m, x) == forward(m, x)
    with pytest.raises(DataError, match="dimension"):
        forward(m, np.zeros(4))
    with pytest.raises(DataError):
        predict(m, np.zeros((2, 6)))


def test_dropout_fraction():
    m = init_model(5, seed=2)
    for b in m.biases:
        b[...] = 1.0  # keep every ReLU active so zeros come only from the mask
    from ctxzsl.mlp import _forward

    rng = np.random.default_rng(0)
    _, cache = _forward(m, np.ones((10_000 // 70 + 1, 5)), True, rng)
    masks = np.concatenate([c[2].ravel() for c in cache if c[2] is not None])
    frac = float(np.mean(masks == 0))
    assert abs(frac - 0.5) <= 0.05
    assert set(np.unique(masks)) == {0.0, 2.0}


def test_bce_examples():
    assert bce_loss(0.5, 1) == pytest.approx(math.log(2), rel=1e-15)
    assert bce_loss(0.5, 0) == pytest.approx(0.693147, abs=5e-7)
    assert bce_loss(0.9, 1) == pytest.approx(0.105361, abs=5e-7)
    seq = [bce_loss(p, 1) for p in (0.9, 0.99, 0.999, 1.0)]
    assert all(a > b for a, b in zip(seq, seq[1:]))
    assert seq[-1] >= 0 and math.isfinite(bce_loss(0.0, 1))


def test_adam_defaults():
    s = AdamState()
    assert (s.lr, s.beta1, s.beta2, s.eps) == (0.0012, 0.92, 0.9992, 1e-08)


def test_adam_first_step_closed_form():
    m = zero_model(1)
    grads = [np.zeros_like(p) for p in m.params()]
    grads[0][0, 0] = 0.5
    before = m.weights[0][0, 0]
    adam_step(m, grads, AdamState())
    step = before - m.weights[0][0, 0]
    assert step == pytest.approx(0.0012 * 0.5 / (0.5 + 1e-8), rel=1e-12)


def test_adam_zero_gradient_noop():
    m = init_model(3, seed=0)
    snap = copy.deepcopy(m.params())
    adam_step(m, [np.zeros_like(p) for p in m.params()], AdamState())
    assert all(np.array_equal(a, b) for a, b in zip(snap, m.params()))


def test_adam_non_finite():
    m = init_model(3)
    grads = [np.zeros_like(p) for p in m.params()]
    grads[2][0, 0] = np.nan
    with pytest.raises(NumericError):
        adam_step(m, grads, AdamState())


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(0)
    m = init_model(3, seed=0, hidden=(4, 3))
    X, y = rng.normal(size=(6, 3)), rng.integers(0, 2, 6).astype(float)
    _, gw, gb = loss_and_grads(m, X, y)
    numeric = central_difference(lambda: mean_loss(m, X, y), m.params())
    for a, n in zip([*gw, *gb], numeric):
        for ai, ni in zip(a.ravel(), n):
            assert relative_error(ai, ni) < 1e-6


def test_gradient_check_small_model():
    rng = np.random.default_rng(1)
    m = init_model(5, seed=1)
    X, y = rng.normal(size=(8, 5)), rng.integers(0, 2, 8).astype(float)
    assert gradient_check(m, X, y) < 1e-4


def test_gradient_check_zero_loss_batch():
    m = zero_model(2)
    m.biases[-1][0] = 40.0  # p = 1 - ~4e-18, clamped: loss and gradient both ~0
    X, y = np.ones((4, 2)), np.ones(4)
    _, gw, gb = loss_and_grads(m, X, y)
    assert max(np.abs(g).max() for g in [*gw, *gb]) < 1e-8
    assert gradient_check(m, X, y) < 1e-8


def test_split_sizes():
    assert _split_sizes(40_000, (0.6, 0.2, 0.2)) == (24_000, 8_000, 8_000)
    for n in range(1, 60):
        a, b, c = _split_sizes(n, (0.6, 0.2, 0.2))
        assert a + b + c == n
        assert abs(a - 0.6 * n) <= 1 and abs(b - 0.2 * n) <= 1 and abs(c - 0.2 * n) <= 1


def separable(n=300, d=6, seed=0):
    rng = np.random.default_rng(seed)
    pos = rng.normal(loc=1.5, size=(n, d))
    neg = rng.normal(loc=-1.5, size=(n, d))
    return pos, neg


def test_train_separable_reduces_loss():
    # optimisation check: same network and Adam, no dropout noise or early stop
    pos, neg = separable()
    model, run = train(pos, neg, TrainConfig(dropout=0.0, patience=100), seed=0)
    assert run.final_train_loss < 0.1 * run.initial_train_loss
    assert run.test_metrics["auc"] > 0.99


def test_train_defaults_separable():
    pos, neg = separable()
    model, run = train(pos, neg, TrainConfig(), seed=0)
    assert run.final_train_loss < run.initial_train_loss
    assert run.test_metrics["auc"] > 0.95
    parts = run.partitions
    allidx = np.concatenate([parts["train"], parts["validation"], parts["test"]])
    assert sorted(allidx.tolist()) == list(range(600))
    assert model.norm_mean is not None


def test_train_partitions_disjoint():
    pos, neg = separable(50)
    _, run = train(pos, neg, TrainConfig(max_epochs=1), seed=0)
    parts = [set(run.partitions[k].tolist()) for k in ("train", "validation", "test")]
    assert [len(p) for p in parts] == [60, 20, 20]
    assert not (parts[0] & parts[1]) and not (parts[0] & parts[2]) and not (parts[1] & parts[2])
    assert set.union(*parts) == set(range(100))


def test_train_deterministic():
    pos, neg = separable(40)
    cfg = TrainConfig(max_epochs=5)
    m1, r1 = train(pos, neg, cfg, seed=3)
    m2, r2 = train(pos, neg, cfg, seed=3)
    assert r1.history == r2.history
    assert all(np.array_equal(a, b) for a, b in zip(m1.params(), m2.params()))


def test_train_rejects_unbalanced():
    pos, neg = separable(10)
    with pytest.raises(DataError, match="10 positive vs 9 negative"):
        train(pos, neg[:9])
    with pytest.raises(DataError):
        train([], [])


def test_predict_empty_and_repeatable():
    m = init_model(3, seed=0)
    assert predict(m, []).tolist() == []
    X = np.random.default_rng(0).normal(size=(5, 3))
    assert predict(m, X).tolist() == predict(m, X).tolist()


@settings(max_examples=200)
@given(st.integers(0, 2**32 - 1), st.integers(1, 20))
def test_predictions_open_interval_and_permutation(seed, n):
    rng = np.random.default_rng(seed)
    m = init_model(4, seed=seed % 1000)
    X = rng.normal(scale=3.0, size=(n, 4))
    p = predict(m, X)
    assert np.all((p > 0) & (p < 1))
    perm = rng.permutation(n)
    assert np.array_equal(predict(m, X[perm]), p[perm])
