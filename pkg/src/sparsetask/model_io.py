"""Model persistence (JSON config + SMTW weights file), prediction CSVs and
small text inputs such as task-weight lists.

SMTW layout, all integers little-endian::

    b"SMTW"  u32 version  u64 tensor_count
    per tensor: u32 name_len, UTF-8 name, u32 ndim, u64 dims[ndim],
                row-major f64 payload
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .errors import FormatError, ParseError, VersionError
from .losses import TaskWeights
from .nn import NetworkArchitecture, ParameterSet
from .optim import OptimizerConfig
from .pipeline import BatchPlan, StandardizationStats

WEIGHTS_MAGIC = b"SMTW"
WEIGHTS_VERSION = 1
CONFIG_FORMAT = "sparsetask-model"
CONFIG_VERSION = 1


# -- weights ---------------------------------------------------------------


def write_weights(tensors: Dict[str, np.ndarray], path) -> None:
    out = [WEIGHTS_MAGIC, struct.pack("<IQ", WEIGHTS_VERSION, len(tensors))]
    for name, t in tensors.items():
        raw = name.encode("utf-8")
        t = np.ascontiguousarray(t, dtype="<f8")
        out.append(struct.pack("<I", len(raw)) + raw)
        out.append(struct.pack(f"<I{t.ndim}Q", t.ndim, *t.shape))
        out.append(t.tobytes())
    Path(path).write_bytes(b"".join(out))


def read_weights(path) -> Dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise FormatError(f"{path}: truncated weights file")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    if take(4) != WEIGHTS_MAGIC:
        raise FormatError(f"{path}: bad magic")
    version, count = struct.unpack("<IQ", take(12))
    if version != WEIGHTS_VERSION:
        raise VersionError(f"{path}: unsupported weights version {version}")
    tensors = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        try:
            name = take(name_len).decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError(f"{path}: tensor name is not valid UTF-8") from None
        (ndim,) = struct.unpack("<I", take(4))
        dims = struct.unpack(f"<{ndim}Q", take(8 * ndim))
        n = int(np.prod(dims, dtype=np.int64))
        t = np.frombuffer(take(8 * n), dtype="<f8").reshape(dims).astype(np.float64)
        if name in tensors:
            raise FormatError(f"{path}: duplicate tensor {name!r}")
        tensors[name] = t
    if pos != len(data):
        raise FormatError(f"{path}: {len(data) - pos} trailing bytes")
    return tensors


# -- config ----------------------------------------------------------------


@dataclass
class ModelConfig:
    arch: NetworkArchitecture
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    batch: BatchPlan = field(default_factory=BatchPlan)
    weights: Optional[TaskWeights] = None
    stats: Optional[StandardizationStats] = None
    class_task_names: Optional[List[str]] = None
    regr_task_names: Optional[List[str]] = None
    seed: int = 42
    epochs: int = 20
    format_version: int = CONFIG_VERSION

    def __post_init__(self):
        a = self.arch
        if self.weights is None:
            self.weights = TaskWeights.uniform(a.n_class_tasks, a.n_regr_tasks)
        if self.stats is None:
            self.stats = StandardizationStats.identity(a.n_regr_tasks)
        if self.class_task_names is None:
            self.class_task_names = [f"class_{j}" for j in range(a.n_class_tasks)]
        if self.regr_task_names is None:
            self.regr_task_names = [f"regr_{j}" for j in range(a.n_regr_tasks)]
        checks = [
            ("class task weights", len(self.weights.class_weights), a.n_class_tasks),
            ("regr task weights", len(self.weights.regr_weights), a.n_regr_tasks),
            ("standardization stats", len(self.stats.mean), a.n_regr_tasks),
            ("class task names", len(self.class_task_names), a.n_class_tasks),
            ("regr task names", len(self.regr_task_names), a.n_regr_tasks),
        ]
        for what, got, want in checks:
            if got != want:
                raise FormatError(f"config: {what} has length {got}, architecture needs {want}")

    @property
    def n_features(self) -> int:
        return self.arch.input_dim

    def to_dict(self) -> dict:
        return {
            "format": CONFIG_FORMAT,
            "format_version": self.format_version,
            "arch": {**asdict(self.arch), "hidden_sizes": list(self.arch.hidden_sizes)},
            "optimizer": asdict(self.optimizer),
            "batch": asdict(self.batch),
            "task_weights": {
                "class": self.weights.class_weights.tolist(),
                "regr": self.weights.regr_weights.tolist(),
            },
            "standardization": {
                "enabled": self.stats.enabled,
                "mean": self.stats.mean.tolist(),
                "scale": self.stats.scale.tolist(),
            },
            "class_task_names": list(self.class_task_names),
            "regr_task_names": list(self.regr_task_names),
            "seed": self.seed,
            "epochs": self.epochs,
        }

    @classmethod
    def from_dict(cls, d: dict) -> ModelConfig:
        if d.get("format") != CONFIG_FORMAT:
            raise FormatError(f"not a model config (format={d.get('format')!r})")
        if d.get("format_version") != CONFIG_VERSION:
            raise VersionError(f"unsupported config version {d.get('format_version')!r}")
        try:
            tw, st = d["task_weights"], d["standardization"]
            return cls(
                arch=NetworkArchitecture(**d["arch"]),
                optimizer=OptimizerConfig(**d["optimizer"]),
                batch=BatchPlan(**d["batch"]),
                weights=TaskWeights(tw["class"], tw["regr"]),
                stats=StandardizationStats(st["mean"], st["scale"], enabled=st["enabled"]),
                class_task_names=d["class_task_names"],
                regr_task_names=d["regr_task_names"],
                seed=d["seed"],
                epochs=d["epochs"],
            )
        except (KeyError, TypeError) as exc:
            raise FormatError(f"malformed model config: {exc}") from None


def write_config(cfg: ModelConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")


def read_config(path) -> ModelConfig:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc}") from None
    try:
        return ModelConfig.from_dict(d)
    except FormatError as exc:
        raise type(exc)(f"{path}: {exc}") from None


def save_model(cfg: ModelConfig, params: ParameterSet, conf_path, weights_path) -> None:
    check_consistent(cfg, params.tensors)
    write_config(cfg, conf_path)
    write_weights(params.tensors, weights_path)


def check_consistent(cfg: ModelConfig, tensors: Dict[str, np.ndarray]) -> None:
    expected = cfg.arch.tensor_shapes()
    head_tasks = {"class_head": cfg.arch.n_class_tasks, "regr_head": cfg.arch.n_regr_tasks}
    for head, n in head_tasks.items():
        w = tensors.get(f"{head}.weight")
        got = 0 if w is None else (w.shape[1] if w.ndim == 2 else -1)
        if got != n:
            kind = "n_class_tasks" if head == "class_head" else "n_regr_tasks"
            raise FormatError(f"config {kind}={n} but weights {head}.weight has {got} task columns")
    if set(tensors) != set(expected):
        raise FormatError(f"weights tensors {sorted(tensors)} do not match config {sorted(expected)}")
    for name, shape in expected.items():
        if tensors[name].shape != shape:
            raise FormatError(f"tensor {name} has shape {tensors[name].shape}, config implies {shape}")


def load_model(conf_path, weights_path):
    """Returns ``(config, params)``; config and weights are cross-checked."""
    cfg = read_config(conf_path)
    tensors = read_weights(weights_path)
    check_consistent(cfg, tensors)
    ordered = {name: tensors[name] for name in cfg.arch.tensor_shapes()}
    return cfg, ParameterSet(cfg.arch, ordered)


# -- small text formats ----------------------------------------------------


def read_float_list(path) -> np.ndarray:
    """One real number per line (blank lines ignored)."""
    vals = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        s = line.strip()
        if not s:
            continue
        try:
            vals.append(float(s))
        except ValueError:
            raise ParseError(f"{path}:{lineno}: not a number: {s!r}") from None
    return np.array(vals)


def format_float(v: float) -> str:
    return format(float(v), ".17g")


def write_prediction_csv(values: np.ndarray, task_names: List[str], path) -> None:
    lines = [",".join(task_names)]
    lines += [",".join(format_float(v) for v in row) for row in values]
    Path(path).write_text("\n".join(lines) + "\n")


def read_prediction_csv(path):
    """Returns ``(task_names, values)``."""
    lines = Path(path).read_text().splitlines()
    names = lines[0].split(",") if lines and lines[0] else []
    values = np.array([[float(v) for v in line.split(",")] for line in lines[1:]]).reshape(-1, len(names))
    return names, values


def write_predictions(prefix, class_probs, regr_preds, cfg: ModelConfig) -> List[Path]:
    """Writes ``<prefix>-class.csv`` and/or ``<prefix>-regr.csv``."""
    written = []
    if cfg.arch.n_class_tasks:
        p = Path(f"{prefix}-class.csv")
        write_prediction_csv(class_probs, cfg.class_task_names, p)
        written.append(p)
    if cfg.arch.n_regr_tasks:
        p = Path(f"{prefix}-regr.csv")
        write_prediction_csv(regr_preds, cfg.regr_task_names, p)
        written.append(p)
    return written
