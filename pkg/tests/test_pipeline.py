import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsetask.errors import InvalidSpec, ParseError, UnknownFold
from sparsetask.losses import RegrLabels, TaskWeights, censored_se
from sparsetask.nn import NetworkArchitecture, init_parameters
from sparsetask.pipeline import (
    BatchPlan,
    StandardizationStats,
    SyntheticSpec,
    destandardize,
    fit_standardization,
    generate_synthetic,
    make_batches,
    read_folds,
    split_by_fold,
    standardize,
    standardize_labels,
    write_folds,
)
from sparsetask.sparse import csr_from_triplets
from sparsetask.training import Dataset, accumulate_batch


def test_split_simple():
    tr, va = split_by_fold([0, 1, 0, 1], 1)
    assert tr.tolist() == [0, 2] and va.tolist() == [1, 3]


def test_split_unknown_fold():
    with pytest.raises(UnknownFold):
        split_by_fold([0, 1, 0], 4)


def test_split_partition(rng):
    folds = rng.integers(0, 5, size=1000)
    tr, va = split_by_fold(folds, 2)
    assert len(tr) + len(va) == 1000
    assert not set(tr) & set(va)
    assert np.all(folds[va] == 2)


def test_fold_file_round_trip(tmp_path):
    p = tmp_path / "folds.txt"
    write_folds([0, 3, 1, 1], p)
    assert p.read_text() == "0\n3\n1\n1\n"
    assert read_folds(p).tolist() == [0, 3, 1, 1]
    p.write_text("0\n-1\n")
    with pytest.raises(ParseError):
        read_folds(p)


def regr_column(values):
    return RegrLabels(csr_from_triplets([(i, 0, v) for i, v in enumerate(values)], len(values), 1))


def test_standardization_direct():
    s = fit_standardization(regr_column([1.0, 2.0, 3.0]), [0, 1, 2])
    assert s.mean[0] == 2.0
    assert s.scale[0] == pytest.approx(np.sqrt(2 / 3), rel=1e-15)
    z = standardize(np.array([[1.0], [2.0], [3.0]]), s)
    np.testing.assert_allclose(z[:, 0], [-1.224744871391589, 0.0, 1.224744871391589], rtol=1e-12)


@pytest.mark.parametrize("values,mean", [([5.0], 5.0), ([4.0, 4.0, 4.0], 4.0)])
def test_standardization_degenerate(values, mean):
    s = fit_standardization(regr_column(values), range(len(values)))
    assert s.mean[0] == mean and s.scale[0] == 1.0


def test_standardization_empty_task_and_train_rows_only():
    y = csr_from_triplets([(0, 0, 1.0), (1, 0, 3.0), (2, 0, 100.0)], 3, 2)
    s = fit_standardization(RegrLabels(y), [0, 1])
    assert s.mean.tolist() == [2.0, 0.0] and s.scale.tolist() == [1.0, 1.0]


def test_standardize_round_trip(rng):
    s = StandardizationStats(rng.normal(size=4), rng.uniform(0.1, 5, 4))
    y = rng.normal(size=(30, 4)) * 10
    np.testing.assert_allclose(destandardize(standardize(y, s), s), y, rtol=1e-12, atol=1e-12)


def test_disabled_stats_identity(rng):
    s = StandardizationStats.identity(3)
    y = rng.normal(size=(4, 3))
    np.testing.assert_array_equal(standardize(y, s), y)


def test_standardize_labels_keeps_censor():
    y = csr_from_triplets([(0, 0, 2.0), (1, 0, 4.0), (2, 0, 9.0)], 3, 1)
    c = csr_from_triplets([(0, 0, 1.0), (2, 0, -1.0)], 3, 1)
    r = RegrLabels(y, c)
    z = standardize_labels(r, fit_standardization(r, [0, 1, 2]))
    assert z.codes.tolist() == r.codes.tolist()


def test_censored_zero_loss_equivalence(rng):
    for _ in range(500):
        mean, scale = rng.normal() * 3, rng.uniform(0.05, 10)
        s = StandardizationStats([mean], [scale])
        y, yhat = rng.normal(size=2) * 5
        c = rng.choice([-1, 1])
        raw_zero = censored_se(y, yhat, c) == 0
        z = standardize(np.array([y, yhat]), s, np.array([0, 0]))
        assert raw_zero == (censored_se(z[0], z[1], c) == 0)


def test_batches_no_chunking():
    b = make_batches(np.arange(4), BatchPlan(4, 4, 0), 0)
    assert len(b) == 1 and len(b[0].chunks) == 1


def test_batches_arithmetic():
    b = make_batches(np.arange(10), BatchPlan(4, 2, 0), 0)
    assert [len(x.rows) for x in b] == [4, 4, 2]
    assert [[len(c) for c in x.chunks] for x in b] == [[2, 2], [2, 2], [2]]


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 300), st.integers(1, 50), st.integers(1, 50), st.integers(0, 100))
def test_epoch_is_permutation(n, b, m, epoch):
    m = min(m, b)
    rows = np.arange(n) * 3
    batches = make_batches(rows, BatchPlan(b, m, 7), epoch)
    flat = np.concatenate([c for x in batches for c in x.chunks])
    assert sorted(flat.tolist()) == rows.tolist()
    assert all(len(x.rows) <= b and all(len(c) <= m for c in x.chunks) for x in batches)


def test_batches_seeded():
    a = make_batches(np.arange(50), BatchPlan(8, 3, 5), 2)
    b = make_batches(np.arange(50), BatchPlan(8, 3, 5), 2)
    c = make_batches(np.arange(50), BatchPlan(8, 3, 5), 3)
    assert all(np.array_equal(x.rows, y.rows) for x, y in zip(a, b))
    assert not all(np.array_equal(x.rows, y.rows) for x, y in zip(a, c))


@pytest.mark.parametrize("b,m", [(0, None), (4, 5), (4, 0)])
def test_plan_validation(b, m):
    with pytest.raises(InvalidSpec):
        BatchPlan(b, m)


def test_accumulated_chunks_equal_full_batch(rng):
    d = generate_synthetic(SyntheticSpec(n_rows=60, n_features=40, feature_density=0.2, n_class_tasks=3,
                                         n_regr_tasks=2, label_density=0.5, censor_fraction=0.3))
    data = Dataset(d.x, d.y_class, d.y_regr)
    p = init_parameters(NetworkArchitecture(40, [12, 6], 3, 2), 1)
    w = TaskWeights.uniform(3, 2)
    rows = rng.permutation(60)[:48]
    full, lf, _, _ = accumulate_batch(p, data, [rows], 48, w, "eval")
    chunked, lc, _, _ = accumulate_batch(p, data, np.array_split(rows, 6), 48, w, "eval")
    assert lc == pytest.approx(lf, rel=1e-12)
    for k in full:
        np.testing.assert_allclose(chunked[k], full[k], rtol=0, atol=1e-10)


# -- synthetic data --------------------------------------------------------


def test_synthetic_fully_observed():
    d = generate_synthetic(SyntheticSpec(n_rows=40, n_features=30, feature_density=0.3, n_class_tasks=3,
                                         n_regr_tasks=2, label_density=1.0, censor_fraction=0.0))
    assert d.y_class.nnz == 40 * 3 and d.y_regr.targets.nnz == 40 * 2
    assert not d.y_regr.codes.any()
    assert set(d.y_class.values.tolist()) <= {-1.0, 1.0}
    assert d.folds.tolist()[:7] == [0, 1, 2, 3, 4, 0, 1]


def test_synthetic_deterministic():
    spec = SyntheticSpec(n_rows=50, n_features=20, censor_fraction=0.2, teacher_seed=9)
    a, b = generate_synthetic(spec), generate_synthetic(spec)
    assert a.x == b.x and a.y_class == b.y_class and a.y_regr.targets == b.y_regr.targets
    assert np.array_equal(a.y_regr.codes, b.y_regr.codes)


def test_synthetic_censor_fraction():
    d = generate_synthetic(SyntheticSpec(n_rows=20000, n_features=10, feature_density=0.5, n_class_tasks=0,
                                         n_regr_tasks=10, label_density=0.5, censor_fraction=0.3))
    codes = d.y_regr.codes
    assert len(codes) >= 100_000 * 0.95
    assert abs(np.mean(codes != 0) - 0.3) <= 0.02


def test_synthetic_censoring_direction():
    spec = SyntheticSpec(n_rows=300, n_features=50, feature_density=0.2, n_class_tasks=0, n_regr_tasks=3,
                         label_density=1.0, censor_fraction=0.5, noise=0.0)
    cens = generate_synthetic(spec)
    exact = generate_synthetic(SyntheticSpec(**{**spec.__dict__, "censor_fraction": 0.0}))
    # same seed -> same X and teacher, so the uncensored run holds the true values
    diff = exact.y_regr.targets.values - cens.y_regr.targets.values
    c = cens.y_regr.codes
    assert np.all(diff[c == 1] >= 0) and np.all(diff[c == -1] <= 0) and np.all(diff[c == 0] == 0)


@pytest.mark.parametrize("kw", [dict(n_rows=0), dict(feature_density=0.0), dict(label_density=1.5),
                                dict(n_class_tasks=0, n_regr_tasks=0), dict(censor_fraction=-0.1)])
def test_synthetic_invalid(kw):
    with pytest.raises(InvalidSpec):
        generate_synthetic(SyntheticSpec(**kw))
