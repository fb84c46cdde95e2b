"""Data plumbing: fold splits, regression standardization, batch planning
and a synthetic teacher dataset generator."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np

from .errors import DataError, InvalidSpec, ParseError, UnknownFold
from .losses import RegrLabels
from .sparse import CsrMatrix, csr_from_arrays


# -- folds -----------------------------------------------------------------


def read_folds(path) -> np.ndarray:
    """Fold vector file: one nonnegative integer per line."""
    folds = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        s = line.strip()
        if not s:
            continue
        if not s.isdigit():
            raise ParseError(f"{path}:{lineno}: fold id must be a nonnegative integer, got {s!r}")
        folds.append(int(s))
    return np.array(folds, dtype=np.int64)


def write_folds(folds, path) -> None:
    Path(path).write_text("".join(f"{int(f)}\n" for f in folds))


def split_by_fold(folds, va_fold: int):
    """Returns ``(train_rows, valid_rows)``, both ascending."""
    folds = np.asarray(folds)
    valid = folds == va_fold
    if not np.any(valid):
        raise UnknownFold(f"validation fold {va_fold} does not occur in the fold vector")
    return np.flatnonzero(~valid), np.flatnonzero(valid)


# -- standardization -------------------------------------------------------


@dataclass
class StandardizationStats:
    mean: np.ndarray
    scale: np.ndarray
    enabled: bool = True

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        self.scale = np.asarray(self.scale, dtype=np.float64).reshape(-1)
        if self.mean.shape != self.scale.shape:
            raise DataError("standardization mean and scale differ in length")
        if self.enabled and np.any(~(self.scale > 0)):
            raise DataError("standardization scale must be positive")

    @classmethod
    def identity(cls, n_tasks: int) -> StandardizationStats:
        return cls(np.zeros(n_tasks), np.ones(n_tasks), enabled=False)


def fit_standardization(regr: RegrLabels, train_rows) -> StandardizationStats:
    """Per-task mean and population std over the training rows' stored
    targets. Tasks with fewer than two values or zero variance keep scale 1."""
    sub = regr.targets.take_rows(np.asarray(train_rows, dtype=np.int64))
    n_tasks = sub.n_cols
    count = np.bincount(sub.col_idx, minlength=n_tasks).astype(np.float64)
    total = np.bincount(sub.col_idx, weights=sub.values, minlength=n_tasks)
    mean = np.divide(total, count, out=np.zeros(n_tasks), where=count > 0)
    dev = sub.values - mean[sub.col_idx]
    var = np.divide(np.bincount(sub.col_idx, weights=dev * dev, minlength=n_tasks), count,
                    out=np.zeros(n_tasks), where=count > 0)
    scale = np.sqrt(var)
    scale[(count < 2) | ~(scale > 0)] = 1.0
    return StandardizationStats(mean, scale, enabled=True)


def standardize(values, stats: StandardizationStats, tasks=None):
    """``(y - mean) / scale``. ``values`` is either dense ``(n, n_tasks)`` or a
    1-d array of entries whose task ids are given in ``tasks``."""
    values = np.asarray(values, dtype=np.float64)
    if not stats.enabled:
        return values.copy()
    if tasks is None:
        return (values - stats.mean) / stats.scale
    return (values - stats.mean[tasks]) / stats.scale[tasks]


def destandardize(values, stats: StandardizationStats, tasks=None):
    values = np.asarray(values, dtype=np.float64)
    if not stats.enabled:
        return values.copy()
    if tasks is None:
        return values * stats.scale + stats.mean
    return values * stats.scale[tasks] + stats.mean[tasks]


def standardize_labels(regr: RegrLabels, stats: StandardizationStats) -> RegrLabels:
    """Standardized copy; censor codes pass through unchanged since a
    positive scale keeps the direction of every inequality."""
    t = regr.targets
    z = standardize(t.values, stats, t.col_idx)
    # a value landing exactly on the mean would be dropped by CSR storage
    z[z == 0.0] = np.finfo(np.float64).tiny
    return regr.with_values(z)


# -- batching --------------------------------------------------------------


@dataclass(frozen=True)
class BatchPlan:
    batch_size: int = 200
    internal_batch_max: Optional[int] = None
    seed: int = 42

    def __post_init__(self):
        if self.batch_size < 1:
            raise InvalidSpec("batch_size must be >= 1")
        if self.internal_batch_max is None:
            object.__setattr__(self, "internal_batch_max", self.batch_size)
        if not 1 <= self.internal_batch_max <= self.batch_size:
            raise InvalidSpec("internal_batch_max must be in [1, batch_size]")


@dataclass
class Batch:
    rows: np.ndarray
    chunks: List[np.ndarray]


def epoch_permutation(train_rows, seed: int, epoch: int) -> np.ndarray:
    rng = np.random.default_rng([seed, epoch])
    return rng.permutation(np.asarray(train_rows, dtype=np.int64))


def make_batches(train_rows, plan: BatchPlan, epoch: int) -> List[Batch]:
    """Shuffle the rows for ``epoch`` and cut them into logical batches of at
    most ``batch_size`` rows, each split into chunks of at most
    ``internal_batch_max`` rows."""
    perm = epoch_permutation(train_rows, plan.seed, epoch)
    batches = []
    for i in range(0, len(perm), plan.batch_size):
        rows = perm[i:i + plan.batch_size]
        chunks = [rows[j:j + plan.internal_batch_max] for j in range(0, len(rows), plan.internal_batch_max)]
        batches.append(Batch(rows, chunks))
    return batches


# -- synthetic data --------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    n_rows: int = 2000
    n_features: int = 1000
    feature_density: float = 0.02
    n_class_tasks: int = 10
    n_regr_tasks: int = 5
    label_density: float = 0.3
    censor_fraction: float = 0.0
    teacher_seed: int = 0
    n_folds: int = 5
    noise: float = 0.1


@dataclass
class SyntheticData:
    x: CsrMatrix
    y_class: CsrMatrix
    y_regr: RegrLabels
    folds: np.ndarray


def generate_synthetic(spec: SyntheticSpec) -> SyntheticData:
    """Random binary features and labels produced by a hidden linear teacher.

    Classification labels are the sign of the teacher score; regression
    targets are the score plus Gaussian noise. Censored regression entries
    record a value below (+1) or above (-1) the true target.
    """
    s = spec
    for name in ("n_rows", "n_features", "n_folds"):
        if getattr(s, name) < 1:
            raise InvalidSpec(f"{name} must be >= 1")
    if s.n_class_tasks < 0 or s.n_regr_tasks < 0 or s.n_class_tasks + s.n_regr_tasks < 1:
        raise InvalidSpec("need at least one task")
    for name in ("feature_density", "label_density"):
        if not 0 < getattr(s, name) <= 1:
            raise InvalidSpec(f"{name} must be in (0, 1]")
    if not 0 <= s.censor_fraction <= 1:
        raise InvalidSpec("censor_fraction must be in [0, 1]")

    rng = np.random.default_rng(s.teacher_seed)
    xr, xc = np.nonzero(rng.random((s.n_rows, s.n_features)) < s.feature_density)
    x = csr_from_arrays(xr, xc, np.ones(len(xr)), s.n_rows, s.n_features)

    n_tasks = s.n_class_tasks + s.n_regr_tasks
    teacher = rng.normal(size=(s.n_features, n_tasks)) / np.sqrt(max(s.n_features * s.feature_density, 1.0))
    score = x.to_dense() @ teacher
    score -= score.mean(axis=0)

    def observed(n_cols):
        return np.nonzero(rng.random((s.n_rows, n_cols)) < s.label_density)

    cr, cc = observed(s.n_class_tasks)
    y_class = csr_from_arrays(cr, cc, np.where(score[cr, cc] > 0, 1.0, -1.0), s.n_rows, s.n_class_tasks)

    rr, rc = observed(s.n_regr_tasks)
    true = score[rr, s.n_class_tasks + rc] + s.noise * rng.normal(size=len(rr))
    censored = rng.random(len(rr)) < s.censor_fraction
    direction = np.where(rng.random(len(rr)) < 0.5, 1, -1)
    codes = np.where(censored, direction, 0).astype(np.int8)
    offset = rng.uniform(0.0, 1.0, size=len(rr)) * score.std()
    recorded = np.where(censored, true - direction * offset, true)
    recorded[recorded == 0.0] = np.finfo(np.float64).tiny
    targets = csr_from_arrays(rr, rc, recorded, s.n_rows, s.n_regr_tasks)
    # csr_from_arrays sorts row-major; np.nonzero already yields that order
    y_regr = RegrLabels(targets, codes=codes)

    folds = np.arange(s.n_rows, dtype=np.int64) % s.n_folds
    return SyntheticData(x, y_class, y_regr, folds)
