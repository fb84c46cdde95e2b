import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import central_difference, loop_loss
from sparsetask.errors import DataError, PatternMismatch, ShapeMismatch
from sparsetask.losses import (
    RegrLabels,
    TaskWeights,
    batch_loss,
    bce_with_logits,
    bce_with_logits_grad,
    censored_se,
    censored_se_grad,
    check_class_labels,
)
from sparsetask.sparse import CsrMatrix, csr_from_triplets

finite = st.floats(-1e3, 1e3, allow_nan=False)


@pytest.mark.parametrize("y,yhat,c,expected", [
    (2, 3, 1, 0.0), (2, 1, 1, 1.0), (2, 3, -1, 1.0), (2, 1, -1, 0.0),
    (5, 5, 1, 0.0), (5, 5, -1, 0.0), (5, 5, 0, 0.0), (2, 3, 0, 1.0),
])
def test_censored_table(y, yhat, c, expected):
    assert censored_se(y, yhat, c) == expected


@given(finite, finite)
def test_uncensored_is_squared_error(y, yhat):
    assert censored_se(y, yhat, 0) == float(Fraction(y - yhat) ** 2)


@given(finite, st.floats(0, 100))
def test_censoring_satisfied(y, d):
    assert censored_se(y, y + d, 1) == 0.0
    assert censored_se(y, y - d, -1) == 0.0


@pytest.mark.parametrize("y,yhat,c,expected", [
    (2, 1, 1, -2.0), (2, 3, 1, 0.0), (2, 3, -1, 2.0), (2, 1, -1, 0.0), (2, 2, 1, 0.0), (2, 2, -1, 0.0),
    (2, 2, 0, 0.0), (1, 4, 0, 6.0),
])
def test_censored_grad_table(y, yhat, c, expected):
    assert censored_se_grad(y, yhat, c) == expected


def test_censored_grad_finite_difference(rng):
    y = rng.normal(size=500)
    yhat = rng.normal(size=500)
    c = rng.integers(-1, 2, size=500)
    eps = 1e-6
    fd = (censored_se(y, yhat + eps, c) - censored_se(y, yhat - eps, c)) / (2 * eps)
    np.testing.assert_allclose(censored_se_grad(y, yhat, c), fd, atol=1e-6)


def test_bce_values():
    assert bce_with_logits(1, 0) == pytest.approx(math.log(2), abs=1e-15)
    assert bce_with_logits(-1, -40) <= 1e-17
    assert abs(bce_with_logits(1, -40) - (40 + math.log1p(math.exp(-40)))) <= 1e-12
    assert abs(bce_with_logits(1, -40) - 40) <= 1e-12


def test_bce_no_overflow():
    with np.errstate(over="raise", invalid="raise"):
        v = bce_with_logits(np.array([1, -1, 1, -1]), np.array([1e308, 1e308, -1e308, -1e308]))
    assert np.all(np.isfinite(v))


def test_bce_grad_finite_difference(rng):
    lab = rng.choice([-1.0, 1.0], size=200)
    z = rng.normal(size=200) * 5
    eps = 1e-6
    fd = (bce_with_logits(lab, z + eps) - bce_with_logits(lab, z - eps)) / (2 * eps)
    np.testing.assert_allclose(bce_with_logits_grad(lab, z), fd, atol=1e-8)


# -- label containers ------------------------------------------------------


def test_class_labels_must_be_pm1():
    with pytest.raises(DataError):
        check_class_labels(csr_from_triplets([(0, 0, 2.0)], 1, 1))


def test_censor_pattern_must_be_subset():
    y = csr_from_triplets([(0, 0, 1.5), (1, 1, 2.0)], 2, 2)
    c = csr_from_triplets([(0, 1, 1.0)], 2, 2)
    with pytest.raises(PatternMismatch, match="row 0, col 1"):
        RegrLabels(y, c)


def test_censor_values_and_shape():
    y = csr_from_triplets([(0, 0, 1.5)], 2, 2)
    with pytest.raises(DataError):
        RegrLabels(y, csr_from_triplets([(0, 0, 0.5)], 2, 2))
    with pytest.raises(ShapeMismatch):
        RegrLabels(y, csr_from_triplets([(0, 0, 1.0)], 2, 3))


def test_censor_codes_aligned():
    y = csr_from_triplets([(0, 0, 1.5), (0, 1, 3.0), (1, 1, 2.0)], 2, 2)
    c = csr_from_triplets([(0, 1, -1.0), (1, 1, 1.0)], 2, 2)
    r = RegrLabels(y, c)
    assert r.codes.tolist() == [0, -1, 1]
    assert r.censor == c
    sub = r.take_rows([1, 0])
    assert sub.codes.tolist() == [1, 0, -1]


def test_task_weights_validation():
    with pytest.raises(DataError):
        TaskWeights([1.0, -1.0], [])
    with pytest.raises(DataError):
        TaskWeights([np.inf], [])


# -- batch loss ------------------------------------------------------------


def random_problem(rng, n=7, nc=4, nr=3, density=0.4):
    cl = rng.normal(size=(n, nc)) * 2
    rg = rng.normal(size=(n, nr))
    yc = CsrMatrix.from_dense(np.where(rng.random((n, nc)) < density, rng.choice([-1.0, 1.0], (n, nc)), 0.0))
    yr = CsrMatrix.from_dense(np.where(rng.random((n, nr)) < density, rng.normal(size=(n, nr)), 0.0))
    codes = rng.integers(-1, 2, size=yr.nnz)
    regr = RegrLabels(yr, codes=codes)
    w = TaskWeights(rng.uniform(0.1, 2, nc), rng.uniform(0.1, 2, nr))
    return cl, rg, yc, regr, w


def test_batch_loss_matches_loop(rng):
    for _ in range(20):
        cl, rg, yc, regr, w = random_problem(rng)
        loss, _, _ = batch_loss(cl, rg, yc, regr, w, 10)
        rt = [(i, j, v, int(c)) for (i, j, v), c in zip(regr.targets.triplets(), regr.codes)]
        ref = loop_loss(cl, rg, yc.triplets(), rt, w.class_weights, w.regr_weights, 10)
        assert loss == pytest.approx(ref, rel=1e-13)


def test_batch_loss_gradient_finite_difference(rng):
    cl, rg, yc, regr, w = random_problem(rng)
    _, gc, gr = batch_loss(cl, rg, yc, regr, w, 7)
    fc = central_difference(lambda: batch_loss(cl, rg, yc, regr, w, 7)[0], cl)
    fr = central_difference(lambda: batch_loss(cl, rg, yc, regr, w, 7)[0], rg)
    np.testing.assert_allclose(gc, fc, atol=1e-8)
    np.testing.assert_allclose(gr, fr, atol=1e-8)


def test_no_observed_entries():
    cl, rg = np.ones((3, 2)), np.ones((3, 1))
    loss, gc, gr = batch_loss(cl, rg, CsrMatrix.empty(3, 2), RegrLabels(CsrMatrix.empty(3, 1)),
                              TaskWeights.uniform(2, 1), 3)
    assert loss == 0.0 and not gc.any() and not gr.any()


def test_weights_linear(rng):
    cl, rg, yc, regr, w = random_problem(rng)
    l1, gc1, gr1 = batch_loss(cl, rg, yc, regr, w, 7)
    w2 = TaskWeights(w.class_weights * 2, w.regr_weights * 2)
    l2, gc2, gr2 = batch_loss(cl, rg, yc, regr, w2, 7)
    assert l2 == 2 * l1
    np.testing.assert_array_equal(gc2, 2 * gc1)
    np.testing.assert_array_equal(gr2, 2 * gr1)


def test_zero_weight_task(rng):
    cl, rg, yc, regr, w = random_problem(rng, density=0.9)
    w.class_weights[1] = 0.0
    w.regr_weights[2] = 0.0
    _, gc, gr = batch_loss(cl, rg, yc, regr, w, 7)
    assert not gc[:, 1].any() and not gr[:, 2].any()


def test_masking(rng):
    cl, rg, yc, regr, w = random_problem(rng)
    base = batch_loss(cl, rg, yc, regr, w, 7)[0]
    unobs_c = np.argwhere(yc.to_dense() == 0)
    unobs_r = np.argwhere(regr.targets.to_dense() == 0)
    cl2, rg2 = cl.copy(), rg.copy()
    cl2[tuple(unobs_c.T)] += 100.0
    rg2[tuple(unobs_r.T)] -= 100.0
    assert batch_loss(cl2, rg2, yc, regr, w, 7)[0] == base


def test_shape_checks(rng):
    cl, rg, yc, regr, w = random_problem(rng)
    with pytest.raises(ShapeMismatch):
        batch_loss(cl[:, :2], rg, yc, regr, w, 7)
    with pytest.raises(ShapeMismatch):
        batch_loss(cl, rg, yc, regr, TaskWeights([1.0], w.regr_weights), 7)
