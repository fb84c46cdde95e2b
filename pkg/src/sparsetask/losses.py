"""Masked multi-task losses over sparse label matrices.

Only stored label entries contribute. Classification labels are stored as
+1/-1; regression targets may carry a censor code per entry:

    +1  upper censored: the true value is at least the recorded one
    -1  lower censored: the true value is at most the recorded one
     0  exact measurement
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DataError, PatternMismatch, ShapeMismatch
from .sparse import CsrMatrix


def censored_se(y, yhat, c):
    """Squared error that is one-sided for censored entries."""
    r = np.subtract(y, yhat)
    r = np.where(np.asarray(c) > 0, np.maximum(r, 0.0), np.where(np.asarray(c) < 0, np.minimum(r, 0.0), r))
    out = r * r
    return float(out) if np.ndim(out) == 0 else out


def censored_se_grad(y, yhat, c):
    """d censored_se / d yhat. The kink at ``yhat == y`` gets slope 0."""
    y, yhat, c = np.broadcast_arrays(np.asarray(y, float), np.asarray(yhat, float), np.asarray(c))
    g = 2.0 * (yhat - y)
    active = (c == 0) | ((c > 0) & (yhat < y)) | ((c < 0) & (yhat > y))
    out = np.where(active, g, 0.0)
    return float(out) if out.ndim == 0 else out


def bce_with_logits(label, logit):
    """Logistic loss ``softplus(-label * logit)`` for labels in {+1, -1}."""
    z = -np.asarray(label, float) * np.asarray(logit, float)
    out = np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))
    return float(out) if out.ndim == 0 else out


def bce_with_logits_grad(label, logit):
    label = np.asarray(label, float)
    z = -label * np.asarray(logit, float)
    # sigmoid(z), evaluated without overflow
    e = np.exp(-np.abs(z))
    sig = np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    out = -label * sig
    return float(out) if out.ndim == 0 else out


def sigmoid(x):
    x = np.asarray(x, float)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def check_class_labels(y: CsrMatrix, name: str = "classification labels") -> CsrMatrix:
    bad = (y.values != 1.0) & (y.values != -1.0)
    if np.any(bad):
        k = int(np.argmax(bad))
        r, c = int(y.row_of_entry()[k]), int(y.col_idx[k])
        raise DataError(f"{name}: value {y.values[k]!r} at ({r}, {c}) is not +1 or -1")
    return y


class RegrLabels:
    """Regression targets plus a censor code aligned with every stored target.

    ``censor`` is an optional sparse matrix over {+1, -1}; entries missing
    from it are uncensored. Its pattern must be a subset of the targets'.
    """

    def __init__(self, targets: CsrMatrix, censor: Optional[CsrMatrix] = None, *, codes=None):
        self.targets = targets
        if codes is not None:
            codes = np.asarray(codes, dtype=np.int8)
            if codes.shape != (targets.nnz,):
                raise ShapeMismatch("censor codes must align with target entries")
            self.codes = codes
            return
        self.codes = np.zeros(targets.nnz, dtype=np.int8)
        if censor is None:
            return
        if censor.shape != targets.shape:
            raise ShapeMismatch(f"censor matrix is {censor.shape}, regression targets are {targets.shape}")
        bad = (censor.values != 1.0) & (censor.values != -1.0)
        if np.any(bad):
            k = int(np.argmax(bad))
            r, c = int(censor.row_of_entry()[k]), int(censor.col_idx[k])
            raise DataError(f"censor value {censor.values[k]!r} at ({r}, {c}) is not +1 or -1")
        tkeys = targets.pattern().keys()
        ckeys = censor.pattern().keys()
        if len(tkeys):
            pos = np.searchsorted(tkeys, ckeys)
            missing = tkeys[np.minimum(pos, len(tkeys) - 1)] != ckeys
        else:
            pos = np.zeros(len(ckeys), dtype=np.int64)
            missing = np.ones(len(ckeys), dtype=bool)
        if np.any(missing):
            k = int(np.argmax(missing))
            r, c = divmod(int(ckeys[k]), targets.n_cols)
            raise PatternMismatch(f"censor entry at row {r}, col {c} has no regression target")
        self.codes[pos] = censor.values.astype(np.int8)

    @property
    def shape(self):
        return self.targets.shape

    @property
    def censor(self) -> CsrMatrix:
        keep = self.codes != 0
        t = self.targets
        rows = t.row_of_entry()[keep]
        row_ptr = np.zeros(t.n_rows + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=t.n_rows), out=row_ptr[1:])
        return CsrMatrix(t.n_rows, t.n_cols, row_ptr, t.col_idx[keep], self.codes[keep].astype(float))

    def take_rows(self, rows) -> RegrLabels:
        sub, entry = self.targets.take_rows_indexed(rows)
        return RegrLabels(sub, codes=self.codes[entry])

    def with_values(self, values) -> RegrLabels:
        return RegrLabels(self.targets.with_values(values), codes=self.codes)


@dataclass
class TaskWeights:
    class_weights: np.ndarray
    regr_weights: np.ndarray

    def __post_init__(self):
        self.class_weights = np.asarray(self.class_weights, dtype=np.float64).reshape(-1)
        self.regr_weights = np.asarray(self.regr_weights, dtype=np.float64).reshape(-1)
        for w in (self.class_weights, self.regr_weights):
            if not np.all(np.isfinite(w)) or np.any(w < 0):
                raise DataError("task weights must be finite and nonnegative")

    @classmethod
    def uniform(cls, n_class: int, n_regr: int) -> TaskWeights:
        return cls(np.ones(n_class), np.ones(n_regr))


@dataclass
class LossParts:
    loss: float
    class_loss: float
    regr_loss: float
    grad_class: np.ndarray
    grad_regr: np.ndarray


def batch_loss_parts(class_logits, regr_out, class_labels: Optional[CsrMatrix], regr: Optional[RegrLabels],
                     weights: TaskWeights, batch_rows: int) -> LossParts:
    """Like :func:`batch_loss` but also reports the per-head sums."""
    if batch_rows < 1:
        raise ValueError("batch_rows must be >= 1")
    class_logits = np.asarray(class_logits, dtype=np.float64)
    regr_out = np.asarray(regr_out, dtype=np.float64)
    grad_class = np.zeros_like(class_logits)
    grad_regr = np.zeros_like(regr_out)
    class_sum = regr_sum = 0.0

    if class_labels is not None and class_labels.n_cols:
        if class_labels.shape != class_logits.shape:
            raise ShapeMismatch(f"class labels {class_labels.shape} vs logits {class_logits.shape}")
        if len(weights.class_weights) != class_labels.n_cols:
            raise ShapeMismatch("class task weights do not match the number of classification tasks")
        rows, cols = class_labels.row_of_entry(), class_labels.col_idx
        y, f = class_labels.values, class_logits[rows, cols]
        w = weights.class_weights[cols]
        class_sum = float(np.sum(w * bce_with_logits(y, f)))
        grad_class[rows, cols] = w * bce_with_logits_grad(y, f) / batch_rows

    if regr is not None and regr.targets.n_cols:
        if regr.shape != regr_out.shape:
            raise ShapeMismatch(f"regression labels {regr.shape} vs outputs {regr_out.shape}")
        if len(weights.regr_weights) != regr.shape[1]:
            raise ShapeMismatch("regression task weights do not match the number of regression tasks")
        t = regr.targets
        rows, cols = t.row_of_entry(), t.col_idx
        y, f = t.values, regr_out[rows, cols]
        w = weights.regr_weights[cols]
        regr_sum = float(np.sum(w * censored_se(y, f, regr.codes)))
        grad_regr[rows, cols] = w * censored_se_grad(y, f, regr.codes) / batch_rows

    return LossParts(
        loss=(class_sum + regr_sum) / batch_rows,
        class_loss=class_sum / batch_rows,
        regr_loss=regr_sum / batch_rows,
        grad_class=grad_class,
        grad_regr=grad_regr,
    )


def batch_loss(class_logits, regr_out, class_labels: Optional[CsrMatrix], regr: Optional[RegrLabels],
               weights: TaskWeights, batch_rows: int):
    """Weighted masked loss of one (chunk of a) batch.

    ``batch_rows`` is the size of the full logical batch, so the losses and
    gradients of its chunks add up to those of the whole batch. Returns
    ``(loss, grad_class_logits, grad_regr_outputs)``; gradients are zero at
    unobserved entries.
    """
    p = batch_loss_parts(class_logits, regr_out, class_labels, regr, weights, batch_rows)
    return p.loss, p.grad_class, p.grad_regr
