"""Training loop with internal mini-batching, prediction and evaluation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .errors import ShapeMismatch
from .losses import RegrLabels, TaskWeights, batch_loss_parts, sigmoid
from .metrics import MetricReport, evaluate
from .nn import ParameterSet, backward, forward, init_parameters
from .optim import OptimizerConfig, OptimizerState, step
from .pipeline import (
    BatchPlan,
    StandardizationStats,
    destandardize,
    fit_standardization,
    make_batches,
    standardize_labels,
)
from .sparse import CsrMatrix

log = logging.getLogger(__name__)


@dataclass
class Dataset:
    """Features plus optional label matrices, all with the same row count."""

    x: CsrMatrix
    y_class: Optional[CsrMatrix] = None
    y_regr: Optional[RegrLabels] = None

    def __post_init__(self):
        for name, y in (("classification labels", self.y_class), ("regression labels", self.y_regr)):
            if y is not None and y.shape[0] != self.x.n_rows:
                raise ShapeMismatch(f"{name} have {y.shape[0]} rows, X has {self.x.n_rows}")

    @property
    def n_class_tasks(self) -> int:
        return 0 if self.y_class is None else self.y_class.n_cols

    @property
    def n_regr_tasks(self) -> int:
        return 0 if self.y_regr is None else self.y_regr.shape[1]

    def take_rows(self, rows) -> Dataset:
        return Dataset(
            self.x.take_rows(rows),
            None if self.y_class is None else self.y_class.take_rows(rows),
            None if self.y_regr is None else self.y_regr.take_rows(rows),
        )


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_class_loss: float
    train_regr_loss: float
    valid_loss: Optional[float] = None
    valid_aggregates: dict = field(default_factory=dict)


def accumulate_batch(params: ParameterSet, data: Dataset, chunks, batch_rows: int, weights: TaskWeights,
                     mode: str = "train", rng=None):
    """Sum losses and gradients over the chunks of one logical batch.

    Returns ``(grads, loss, class_loss, regr_loss)``.
    """
    grads = params.zeros_like()
    loss = class_loss = regr_loss = 0.0
    for rows in chunks:
        part = data.take_rows(rows)
        logits, regr_out, trace = forward(params, part.x, mode, rng)
        lp = batch_loss_parts(logits, regr_out, part.y_class, part.y_regr, weights, batch_rows)
        g = backward(params, trace, lp.grad_class, lp.grad_regr)
        for name in grads:
            grads[name] += g[name]
        loss += lp.loss
        class_loss += lp.class_loss
        regr_loss += lp.regr_loss
    return grads, loss, class_loss, regr_loss


def dataset_loss(params: ParameterSet, data: Dataset, weights: TaskWeights) -> float:
    """Eval-mode loss per row over a whole dataset."""
    if data.x.n_rows == 0:
        return 0.0
    logits, regr_out, _ = forward(params, data.x, "eval")
    return batch_loss_parts(logits, regr_out, data.y_class, data.y_regr, weights, data.x.n_rows).loss


def train(
    params: ParameterSet,
    data: Dataset,
    train_rows,
    *,
    epochs: int,
    plan: BatchPlan,
    optimizer: OptimizerConfig,
    weights: TaskWeights,
    valid_rows=None,
    min_samples: int = 5,
    stats: Optional[StandardizationStats] = None,
    on_step: Optional[Callable[[ParameterSet], None]] = None,
):
    """Fit ``params`` in place. Labels in ``data`` must already be on the
    training scale (standardized if ``stats`` is enabled); ``stats`` is only
    used to report validation metrics on the raw scale.

    Returns ``(params, history)``.
    """
    state = OptimizerState()
    train_rows = np.asarray(train_rows, dtype=np.int64)
    history: List[EpochRecord] = []
    valid = None if valid_rows is None or len(valid_rows) == 0 else data.take_rows(valid_rows)
    n_train = len(train_rows)
    for epoch in range(epochs):
        rng = np.random.default_rng([plan.seed, epoch, 1])
        tot = cls = reg = 0.0
        for batch in make_batches(train_rows, plan, epoch):
            grads, loss, c, r = accumulate_batch(params, data, batch.chunks, len(batch.rows), weights, "train", rng)
            params, state = step(params, grads, state, optimizer, inplace=True)
            if on_step is not None:
                on_step(params)
            # chunk losses are per logical-batch row; weight back to per training row
            k = len(batch.rows) / n_train
            tot += loss * k
            cls += c * k
            reg += r * k
        rec = EpochRecord(epoch, tot, cls, reg)
        if valid is not None:
            rec.valid_loss = dataset_loss(params, valid, weights)
            report = evaluate_dataset(params, valid, stats, min_samples, labels_standardized=True)
            rec.valid_aggregates = report.aggregates()
        history.append(rec)
        log.info("epoch %d  train_loss %.6f  valid_loss %s", epoch, tot,
                 "-" if rec.valid_loss is None else f"{rec.valid_loss:.6f}")
    return params, history


def predict(params: ParameterSet, x: CsrMatrix, stats: Optional[StandardizationStats] = None):
    """Eval-mode predictions: class probabilities and raw-scale regression."""
    logits, regr_out, _ = forward(params, x, "eval")
    probs = sigmoid(logits)
    if stats is not None and regr_out.shape[1]:
        regr_out = destandardize(regr_out, stats)
    return probs, regr_out


def evaluate_dataset(params: ParameterSet, data: Dataset, stats: Optional[StandardizationStats] = None,
                     min_samples: int = 5, labels_standardized: bool = False) -> MetricReport:
    """Metrics of the model on ``data``; regression on the raw scale."""
    probs, regr = predict(params, data.x, stats)
    y_regr = data.y_regr
    if labels_standardized and y_regr is not None and stats is not None and stats.enabled:
        y_regr = y_regr.with_values(destandardize(y_regr.targets.values, stats, y_regr.targets.col_idx))
    return evaluate(probs, data.y_class, regr, y_regr, min_samples)


@dataclass
class FitResult:
    params: ParameterSet
    stats: StandardizationStats
    history: List[EpochRecord]


def fit(data: Dataset, arch, *, train_rows, valid_rows=None, epochs: int = 20, plan: BatchPlan = BatchPlan(),
        optimizer: OptimizerConfig = OptimizerConfig(), weights: Optional[TaskWeights] = None,
        standardize_regression: bool = False, min_samples: int = 5, seed: int = 42) -> FitResult:
    """Initialise, optionally standardize regression targets on the training
    rows, and train."""
    if weights is None:
        weights = TaskWeights.uniform(data.n_class_tasks, data.n_regr_tasks)
    if standardize_regression and data.y_regr is not None:
        stats = fit_standardization(data.y_regr, train_rows)
        data = Dataset(data.x, data.y_class, standardize_labels(data.y_regr, stats))
    else:
        stats = StandardizationStats.identity(data.n_regr_tasks)
    params = init_parameters(arch, seed)
    params, history = train(params, data, train_rows, epochs=epochs, plan=plan, optimizer=optimizer,
                            weights=weights, valid_rows=valid_rows, min_samples=min_samples, stats=stats)
    return FitResult(params, stats, history)
