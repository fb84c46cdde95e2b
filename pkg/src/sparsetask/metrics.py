"""Per-task classification and regression metrics.

A metric that cannot be computed for a task (single class, no variance,
too few samples) is reported as :class:`Undefined` with a reason instead of a
sentinel number, and is left out of the aggregates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Union

import numpy as np

from .losses import RegrLabels
from .sparse import CsrMatrix

CLASS_METRICS = ("auc_roc", "auc_pr", "f1", "kappa")
REGR_METRICS = ("rmse", "r2", "pearson")


@dataclass(frozen=True)
class Undefined:
    reason: str

    def __str__(self):
        return f"UNDEFINED:{self.reason}"


Value = Union[float, Undefined]


def is_defined(v) -> bool:
    return not isinstance(v, Undefined)


def _prepare(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    pos = np.asarray(labels).reshape(-1) > 0
    if scores.shape != pos.shape:
        raise ValueError("scores and labels must have equal length")
    return scores, pos


def _average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties given their mean rank."""
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    n = len(x)
    starts = np.flatnonzero(np.r_[True, xs[1:] != xs[:-1]])
    ends = np.r_[starts[1:], n]
    block_rank = (starts + ends + 1) / 2.0
    ranks = np.empty(n)
    ranks[order] = np.repeat(block_rank, ends - starts)
    return ranks


def auc_roc(scores, labels) -> Value:
    """Mann-Whitney AUC: P(score of a positive > score of a negative), ties
    counting one half."""
    scores, pos = _prepare(scores, labels)
    n_pos = int(pos.sum())
    n_neg = len(pos) - n_pos
    if n_pos == 0 or n_neg == 0:
        return Undefined("single_class")
    # rank sums are exact multiples of 1/2, so this equals the pairwise count
    u = _average_ranks(scores)[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auc_pr(scores, labels) -> Value:
    """Average precision, sum over thresholds of (recall step) * precision,
    with tied scores forming a single threshold."""
    scores, pos = _prepare(scores, labels)
    n_pos = int(pos.sum())
    if n_pos == 0:
        return Undefined("no_positives")
    order = np.argsort(-scores, kind="mergesort")
    s, p = scores[order], pos[order]
    last_of_block = np.r_[s[1:] != s[:-1], True]
    tp = np.cumsum(p)[last_of_block]
    seen = (np.flatnonzero(last_of_block) + 1).astype(np.float64)
    precision = tp / seen
    recall_step = np.diff(np.r_[0, tp]) / n_pos
    return float(np.sum(recall_step * precision))


def _confusion(scores, labels):
    scores, pos = _prepare(scores, labels)
    pred = scores >= 0.5
    tp = int(np.sum(pred & pos))
    fp = int(np.sum(pred & ~pos))
    fn = int(np.sum(~pred & pos))
    tn = int(np.sum(~pred & ~pos))
    return tp, fp, fn, tn


def f1_at_half(scores, labels) -> Value:
    tp, fp, fn, _ = _confusion(scores, labels)
    denom = 2 * tp + fp + fn
    if denom == 0:
        return Undefined("no_positives")
    return 2 * tp / denom


def cohen_kappa_at_half(scores, labels) -> Value:
    tp, fp, fn, tn = _confusion(scores, labels)
    n = tp + fp + fn + tn
    if n == 0:
        return Undefined("empty")
    p_o = (tp + tn) / n
    p_e = ((tp + fp) * (tp + fn) + (tn + fn) * (tn + fp)) / (n * n)
    if p_e == 1:
        return Undefined("chance_agreement_is_one")
    return (p_o - p_e) / (1 - p_e)


def _pair(y, yhat):
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    yhat = np.asarray(yhat, dtype=np.float64).reshape(-1)
    if y.shape != yhat.shape:
        raise ValueError("y and yhat must have equal length")
    return y, yhat


def rmse(y, yhat) -> Value:
    y, yhat = _pair(y, yhat)
    if len(y) == 0:
        return Undefined("empty")
    return math.sqrt(float(np.sum((y - yhat) ** 2)) / len(y))


def r_squared(y, yhat) -> Value:
    y, yhat = _pair(y, yhat)
    if len(y) < 2:
        return Undefined("too_few_samples")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0:
        return Undefined("zero_variance")
    return 1.0 - float(np.sum((y - yhat) ** 2)) / ss_tot


def pearson(y, yhat) -> Value:
    y, yhat = _pair(y, yhat)
    if len(y) < 2:
        return Undefined("too_few_samples")
    dy, dp = y - y.mean(), yhat - yhat.mean()
    sy, sp = float(np.sum(dy * dy)), float(np.sum(dp * dp))
    if sy == 0 or sp == 0:
        return Undefined("zero_variance")
    r = float(np.sum(dy * dp)) / math.sqrt(sy * sp)
    return max(-1.0, min(1.0, r))


# -- reports ---------------------------------------------------------------


@dataclass
class TaskMetrics:
    head: str  # "class" or "regr"
    task: int
    n_evaluated: int
    values: Dict[str, Value] = field(default_factory=dict)


@dataclass
class MetricReport:
    tasks: List[TaskMetrics] = field(default_factory=list)

    def head_tasks(self, head: str) -> List[TaskMetrics]:
        return [t for t in self.tasks if t.head == head]

    def aggregate(self, head: str, metric: str) -> Value:
        vals = [t.values[metric] for t in self.head_tasks(head) if is_defined(t.values.get(metric, Undefined("")))]
        if not vals:
            return Undefined("no_defined_tasks")
        return float(np.mean(vals))

    def counts(self, head: str, metric: str) -> tuple[int, int]:
        """``(n_defined, n_undefined)`` over tasks of ``head``."""
        ts = self.head_tasks(head)
        d = sum(is_defined(t.values[metric]) for t in ts)
        return d, len(ts) - d

    def aggregates(self) -> Dict[str, Value]:
        out = {}
        for head, names in (("class", CLASS_METRICS), ("regr", REGR_METRICS)):
            if self.head_tasks(head):
                for m in names:
                    out[f"{head}.{m}"] = self.aggregate(head, m)
        return out


def evaluate_classification(probs: np.ndarray, labels: CsrMatrix, min_samples: int = 5) -> List[TaskMetrics]:
    """Per-task metrics of dense probabilities against observed ±1 labels.
    Tasks with fewer than ``min_samples`` labels are left undefined."""
    rows, cols = labels.row_of_entry(), labels.col_idx
    out = []
    for j in range(labels.n_cols):
        sel = cols == j
        y = labels.values[sel]
        p = probs[rows[sel], j]
        tm = TaskMetrics("class", j, len(y))
        if len(y) < max(min_samples, 1):
            tm.values = {m: Undefined("too_few_samples") for m in CLASS_METRICS}
        else:
            tm.values = {
                "auc_roc": auc_roc(p, y),
                "auc_pr": auc_pr(p, y),
                "f1": f1_at_half(p, y),
                "kappa": cohen_kappa_at_half(p, y),
            }
        out.append(tm)
    return out


def evaluate_regression(preds: np.ndarray, regr: RegrLabels) -> List[TaskMetrics]:
    """Per-task metrics on the raw scale; censored entries are skipped."""
    t = regr.targets
    rows, cols = t.row_of_entry(), t.col_idx
    exact = regr.codes == 0
    out = []
    for j in range(t.n_cols):
        sel = (cols == j) & exact
        y = t.values[sel]
        yhat = preds[rows[sel], j]
        out.append(TaskMetrics("regr", j, len(y), {
            "rmse": rmse(y, yhat),
            "r2": r_squared(y, yhat),
            "pearson": pearson(y, yhat),
        }))
    return out


def evaluate(class_probs: Optional[np.ndarray], class_labels: Optional[CsrMatrix],
             regr_preds: Optional[np.ndarray], regr: Optional[RegrLabels], min_samples: int = 5) -> MetricReport:
    report = MetricReport()
    if class_labels is not None and class_labels.n_cols:
        report.tasks += evaluate_classification(class_probs, class_labels, min_samples)
    if regr is not None and regr.shape[1]:
        report.tasks += evaluate_regression(regr_preds, regr)
    return report
