"""Training reports: tab-delimited metric and history files plus figures.

Metrics file (``<prefix>-metrics.txt``), one record per line, tab separated::

    kind  split  head  task  metric  value  n

``kind`` is ``task`` (``n`` = evaluated labels) or ``aggregate`` (``task`` is
``*``, value is the mean over defined tasks, ``n`` = number of defined
tasks); an ``undefined`` record follows each aggregate with the count of
undefined tasks in ``value``. Undefined values read ``UNDEFINED:<reason>``.
Lines starting with ``#`` are comments.
"""

from __future__ import annotations

from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .metrics import CLASS_METRICS, REGR_METRICS, MetricReport, is_defined
from .model_io import format_float

HEADER = ("kind", "split", "head", "task", "metric", "value", "n")


def _fmt(v) -> str:
    return format_float(v) if is_defined(v) else str(v)


def metric_lines(report: MetricReport, split: str, task_names: Dict[str, Sequence[str]]) -> List[str]:
    lines = []
    for tm in report.tasks:
        name = task_names[tm.head][tm.task]
        for metric, v in tm.values.items():
            lines.append("\t".join(("task", split, tm.head, name, metric, _fmt(v), str(tm.n_evaluated))))
    for head, names in (("class", CLASS_METRICS), ("regr", REGR_METRICS)):
        if not report.head_tasks(head):
            continue
        for metric in names:
            defined, undefined = report.counts(head, metric)
            agg = report.aggregate(head, metric)
            lines.append("\t".join(("aggregate", split, head, "*", metric, _fmt(agg), str(defined))))
            lines.append("\t".join(("undefined", split, head, "*", metric, str(undefined), str(undefined))))
    return lines


def write_metrics(path, reports: Dict[str, MetricReport], task_names: Dict[str, Sequence[str]],
                  extra: Dict[str, float] = None) -> None:
    """``reports`` maps split name (``train``/``valid``) to its report;
    ``extra`` holds scalar records (e.g. final losses) written as
    ``scalar`` lines."""
    lines = ["# sparsetask metrics v1", "\t".join(HEADER)]
    for split, rep in reports.items():
        lines += metric_lines(rep, split, task_names)
    for key, v in (extra or {}).items():
        lines.append("\t".join(("scalar", "-", "-", "-", key, _fmt(v), "-")))
    Path(path).write_text("\n".join(lines) + "\n")


def read_metrics(path) -> List[dict]:
    rows = []
    for line in Path(path).read_text().splitlines():
        if not line or line.startswith("#"):
            continue
        fields = line.split("\t")
        if tuple(fields) == HEADER:
            continue
        rows.append(dict(zip(HEADER, fields)))
    return rows


def write_history(path, history) -> None:
    keys = sorted({k for rec in history for k in rec.valid_aggregates})
    cols = ["epoch", "train_loss", "train_class_loss", "train_regr_loss", "valid_loss"] + [f"valid.{k}" for k in keys]
    lines = ["\t".join(cols)]
    for rec in history:
        row = [str(rec.epoch), format_float(rec.train_loss), format_float(rec.train_class_loss),
               format_float(rec.train_regr_loss), "" if rec.valid_loss is None else format_float(rec.valid_loss)]
        row += [_fmt(rec.valid_aggregates[k]) if k in rec.valid_aggregates else "" for k in keys]
        lines.append("\t".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


# -- figures ---------------------------------------------------------------


def _save(fig: Figure, path) -> Path:
    FigureCanvasAgg(fig)
    fig.savefig(path, dpi=120, metadata={"Software": None})
    return Path(path)


def plot_history(history, path) -> Path:
    """Loss curves per epoch (total and per head, validation if present)."""
    fig = Figure(figsize=(6.4, 4.0))
    ax = fig.add_subplot(111)
    epochs = [r.epoch + 1 for r in history]
    ax.plot(epochs, [r.train_loss for r in history], color="#3B4992", label="train")
    if any(r.train_class_loss for r in history) and any(r.train_regr_loss for r in history):
        ax.plot(epochs, [r.train_class_loss for r in history], color="#3B4992", ls="--", lw=1, label="train (class)")
        ax.plot(epochs, [r.train_regr_loss for r in history], color="#3B4992", ls=":", lw=1, label="train (regr)")
    if any(r.valid_loss is not None for r in history):
        ax.plot(epochs, [np.nan if r.valid_loss is None else r.valid_loss for r in history],
                color="#008B45", label="valid")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss per row")
    ax.legend(frameon=False)
    fig.tight_layout()
    return _save(fig, path)


def plot_task_metrics(report: MetricReport, path, title: str = "") -> Path:
    """One panel per head: the headline metric of every task (AUC-ROC for
    classification, Pearson for regression); undefined tasks drawn as gaps."""
    panels = [(h, m) for h, m in (("class", "auc_roc"), ("regr", "pearson")) if report.head_tasks(h)]
    fig = Figure(figsize=(6.4, 2.6 * max(len(panels), 1)))
    for i, (head, metric) in enumerate(panels):
        ax = fig.add_subplot(len(panels), 1, i + 1)
        tasks = report.head_tasks(head)
        vals = [t.values[metric] if is_defined(t.values[metric]) else np.nan for t in tasks]
        ax.bar(np.arange(len(tasks)), vals, color="#3B4992" if head == "class" else "#EE0000")
        agg = report.aggregate(head, metric)
        if is_defined(agg):
            ax.axhline(agg, color="k", lw=1, ls="--", label=f"mean {agg:.3f}")
            ax.legend(frameon=False, loc="lower right")
        ax.set_ylabel(metric)
        ax.set_xlabel(f"{head} task")
        ax.set_ylim(0 if metric == "auc_roc" else -1, 1)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    return _save(fig, path)
