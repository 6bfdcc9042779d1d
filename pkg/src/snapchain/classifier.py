"""Logistic-regression detector and the repeated-experiment harness.

The model is deliberately minimal: z-score standardization learned from
the training set, full-batch gradient descent on L2-regularized
cross-entropy, zero initialization — fully deterministic, no dependence
on an external ML stack.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .dataset import Corpus, ExperimentConfig, LabeledDataset, generate_dataset


class TrainingError(ValueError):
    """Training set unusable (single class, or non-finite features)."""


def _as_xy(data, labels=None):
    if isinstance(data, LabeledDataset):
        return data.features.rows, data.features.labels
    if hasattr(data, "rows"):  # FeatureMatrix
        return data.rows, data.labels if labels is None else np.asarray(labels)
    X = np.atleast_2d(np.asarray(data, dtype=np.float64))
    return X, None if labels is None else np.asarray(labels)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class LogisticModel:
    weights: np.ndarray
    bias: float
    mean: np.ndarray   # standardization, learned from training data
    scale: np.ndarray
    threshold: float = 0.5

    def predict_proba(self, features) -> np.ndarray:
        X, _ = _as_xy(features)
        if X.shape[1] != self.weights.shape[0]:
            raise ValueError(
                f"feature width {X.shape[1]} != model width {self.weights.shape[0]}")
        z = (X - self.mean) / self.scale @ self.weights + self.bias
        return _sigmoid(z)

    def predict(self, features) -> np.ndarray:
        return (self.predict_proba(features) >= self.threshold).astype(np.int64)

    def save(self, path, config_hash: str = "") -> None:
        doc = {
            "weights": self.weights.tolist(),
            "bias": float(self.bias),
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
            "threshold": float(self.threshold),
            "config_hash": config_hash,
        }
        with open(path, "w") as f:
            json.dump(doc, f, indent=2, sort_keys=True)
            f.write("\n")

    @classmethod
    def load(cls, path) -> "LogisticModel":
        with open(path) as f:
            doc = json.load(f)
        return cls(np.array(doc["weights"]), doc["bias"], np.array(doc["mean"]),
                   np.array(doc["scale"]), doc.get("threshold", 0.5))


def train(data, labels=None, learning_rate: float = 0.1, epochs: int = 500,
          l2: float = 1e-4, threshold: float = 0.5) -> LogisticModel:
    """Fit the logistic model; deterministic for identical inputs."""
    X, y = _as_xy(data, labels)
    if y is None:
        raise TrainingError("training data has no labels")
    y = np.asarray(y, dtype=np.float64)
    if not np.isfinite(X).all():
        raise TrainingError("non-finite feature values")
    classes = np.unique(y)
    if classes.size < 2:
        raise TrainingError(f"training set contains a single class ({classes})")
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0.0] = 1.0
    Xs = (X - mean) / scale
    n, d = Xs.shape
    w = np.zeros(d)
    b = 0.0
    for _ in range(epochs):
        p = _sigmoid(Xs @ w + b)
        err = p - y
        w -= learning_rate * (Xs.T @ err / n + l2 * w)
        b -= learning_rate * err.mean()
    return LogisticModel(w, b, mean, scale, threshold)


@dataclass(frozen=True)
class Metrics:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total

    @property
    def precision(self):
        d = self.tp + self.fp
        return self.tp / d if d else None  # no predicted positives

    @property
    def recall(self):
        d = self.tp + self.fn
        return self.tp / d if d else None  # no actual positives

    @property
    def fpr(self):
        d = self.fp + self.tn
        return self.fp / d if d else None

    @property
    def fnr(self):
        d = self.tp + self.fn
        return self.fn / d if d else None

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
                "accuracy": self.accuracy, "precision": self.precision,
                "recall": self.recall, "fpr": self.fpr, "fnr": self.fnr}


def evaluate(model: LogisticModel, data, labels=None) -> Metrics:
    X, y = _as_xy(data, labels)
    if y is None:
        raise ValueError("evaluation requires labels")
    if X.shape[0] == 0:
        raise ValueError("empty test set")
    pred = model.predict(X)
    y = np.asarray(y)
    return Metrics(tp=int(((pred == 1) & (y == 1)).sum()),
                   fp=int(((pred == 1) & (y == 0)).sum()),
                   tn=int(((pred == 0) & (y == 0)).sum()),
                   fn=int(((pred == 0) & (y == 1)).sum()))


METRIC_NAMES = ("accuracy", "precision", "recall", "fpr", "fnr")


def _aggregate(values):
    """(mean, 95% half-width, count) over the defined entries."""
    vals = [v for v in values if v is not None]
    if not vals:
        return None, None, 0
    arr = np.array(vals, dtype=np.float64)
    mean = float(arr.mean())
    hw = float(1.96 * arr.std(ddof=0) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
    return mean, hw, arr.size


@dataclass
class ExperimentReport:
    config: dict            # ExperimentConfig echo
    sizes: list             # hidden sizes in bytes, report row order
    per_size: dict          # size -> {metric: {"mean","half_width","runs"}}
    per_run: list           # [{"size","run","tp",...,"fnr"}] in execution order

    def to_json(self) -> str:
        doc = {"config": self.config, "sizes": self.sizes,
               "per_size": {str(k): v for k, v in self.per_size.items()},
               "per_run": self.per_run}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ExperimentReport":
        doc = json.loads(text)
        per_size = {int(k): v for k, v in doc["per_size"].items()}
        return cls(doc["config"], doc["sizes"], per_size, doc["per_run"])

    def mean(self, size: int, metric: str):
        return self.per_size[size][metric]["mean"]


def run_experiment(corpus: Corpus, cfg: ExperimentConfig,
                   learning_rate: float = 0.1, epochs: int = 500,
                   l2: float = 1e-4) -> ExperimentReport:
    """The full per-size detection experiment.

    For every run index and hidden size: generate train/test datasets,
    train, evaluate.  Work that does not depend on the hidden size
    (clean rows, dirty rows' public records) is computed once per run
    and shared across sizes; results are identical to independent
    generation.  Deterministic in (corpus, cfg).
    """
    per_run = []
    collected = {size: {m: [] for m in METRIC_NAMES} for size in cfg.hidden_sizes}
    for run in range(cfg.repetitions):
        cache = {}
        for size in cfg.hidden_sizes:
            train_ds, test_ds = generate_dataset(corpus, cfg, run,
                                                 hidden_bytes=size, _cache=cache)
            model = train(train_ds, learning_rate=learning_rate,
                          epochs=epochs, l2=l2)
            metrics = evaluate(model, test_ds)
            row = {"size": int(size), "run": run}
            row.update(metrics.to_dict())
            per_run.append(row)
            for m in METRIC_NAMES:
                collected[size][m].append(getattr(metrics, m))
    per_size = {}
    for size in cfg.hidden_sizes:
        agg = {}
        for m in METRIC_NAMES:
            mean, hw, n = _aggregate(collected[size][m])
            agg[m] = {"mean": mean, "half_width": hw, "runs": n}
        per_size[int(size)] = agg
    return ExperimentReport(json.loads(cfg.to_json()), [int(s) for s in cfg.hidden_sizes],
                            per_size, per_run)


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(cfg.to_json().encode()).hexdigest()[:16]


def _fmt(v):
    return "" if v is None else f"{v:.6f}"


def render_csv(report: ExperimentReport) -> str:
    cols = ["size"]
    for m in METRIC_NAMES:
        cols += [m, m + "_ci"]
    lines = [",".join(cols)]
    for size in report.sizes:
        row = [str(size)]
        for m in METRIC_NAMES:
            cell = report.per_size[size][m]
            row += [_fmt(cell["mean"]), _fmt(cell["half_width"])]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def render_markdown(report: ExperimentReport) -> str:
    header = "| size (bytes) | " + " | ".join(METRIC_NAMES) + " |"
    sep = "|" + "---|" * (len(METRIC_NAMES) + 1)
    lines = [header, sep]
    for size in report.sizes:
        cells = []
        for m in METRIC_NAMES:
            cell = report.per_size[size][m]
            if cell["mean"] is None:
                cells.append("—")
            else:
                cells.append(f"{cell['mean']:.4f} ± {cell['half_width']:.4f}")
        lines.append(f"| {size} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"
