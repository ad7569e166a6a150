"""Training loop with early stopping on validation F1, plus evaluation reports.

The positive class is residential (label 1, the majority). The confusion
matrix is [[TN, FP], [FN, TP]] with rows = true class, columns = predicted
class, ordered non-residential then residential.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergedLoss, EmptySet, EmptySplit, LengthMismatch, ShapeMismatch
from .features import FeatureMatrix, SplitIndices
from .network import (
    Mlp,
    OptimizerState,
    _carve,
    amsgrad_step,
    backward,
    bce_loss,
    forward,
    forward_probs,
)

HISTORY_HEADER = ["epoch", "train_loss", "val_loss", "train_f1", "val_f1"]


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall; 0 when both are 0."""
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def accuracy(correct: int, total: int) -> float:
    if total <= 0:
        raise EmptySet("total must be positive")
    return correct / total


@dataclass
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class ClassificationReport:
    non_residential: ClassMetrics
    residential: ClassMetrics
    accuracy: float
    macro_avg: tuple[float, float, float]  # precision, recall, f1
    weighted_avg: tuple[float, float, float]
    confusion_matrix: list[list[int]]  # [[TN, FP], [FN, TP]]
    loss: float

    @property
    def weighted_f1(self) -> float:
        return self.weighted_avg[2]

    def to_dict(self) -> dict:
        def cls(m: ClassMetrics) -> dict:
            return {"precision": m.precision, "recall": m.recall,
                    "f1": m.f1, "support": m.support}

        return {
            "classes": {
                "non_residential": cls(self.non_residential),
                "residential": cls(self.residential),
            },
            "accuracy": self.accuracy,
            "macro_avg": {"precision": self.macro_avg[0], "recall": self.macro_avg[1],
                          "f1": self.macro_avg[2]},
            "weighted_avg": {"precision": self.weighted_avg[0], "recall": self.weighted_avg[1],
                             "f1": self.weighted_avg[2]},
            "confusion_matrix": self.confusion_matrix,
            "loss": self.loss,
        }


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return precision, recall, f1_score(precision, recall)


def classification_report(y_true, y_pred, loss: float = 0.0) -> ClassificationReport:
    """Per-class precision/recall/F1/support plus accuracy and averages."""
    y_true = np.asarray(y_true).astype(int)
    y_pred = np.asarray(y_pred).astype(int)
    if y_true.shape != y_pred.shape or y_true.size == 0:
        raise LengthMismatch(f"{y_true.shape} vs {y_pred.shape}")
    tp = int(np.sum((y_true == 1) & (y_pred == 1)))
    tn = int(np.sum((y_true == 0) & (y_pred == 0)))
    fp = int(np.sum((y_true == 0) & (y_pred == 1)))
    fn = int(np.sum((y_true == 1) & (y_pred == 0)))
    n = y_true.size

    p1, r1, f1_pos = _prf(tp, fp, fn)
    p0, r0, f1_neg = _prf(tn, fn, fp)  # negative class: swap roles
    support0, support1 = tn + fp, tp + fn
    macro = ((p0 + p1) / 2, (r0 + r1) / 2, (f1_neg + f1_pos) / 2)
    weighted = (
        (p0 * support0 + p1 * support1) / n,
        (r0 * support0 + r1 * support1) / n,
        (f1_neg * support0 + f1_pos * support1) / n,
    )
    return ClassificationReport(
        non_residential=ClassMetrics(p0, r0, f1_neg, support0),
        residential=ClassMetrics(p1, r1, f1_pos, support1),
        accuracy=(tp + tn) / n,
        macro_avg=macro,
        weighted_avg=weighted,
        confusion_matrix=[[tn, fp], [fn, tp]],
        loss=loss,
    )


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 8
    max_epochs: int = 500
    patience: int = 50
    threshold: float = 0.5
    monitor: str = "weighted"  # "weighted" or "positive" validation F1
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must be in (0, 1)")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.monitor not in ("weighted", "positive"):
            raise ValueError(f"unknown monitor {self.monitor!r}")


@dataclass
class TrainHistory:
    """Per-epoch series (epochs are 0-based) and the stopping bookkeeping.

    Train-side metrics accumulate over the minibatches of the epoch as the
    weights evolve; validation metrics come from one full pass at epoch end.
    """

    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    train_f1: list[float] = field(default_factory=list)  # monitored flavor
    val_f1: list[float] = field(default_factory=list)
    train_f1_weighted: list[float] = field(default_factory=list)
    train_f1_positive: list[float] = field(default_factory=list)
    val_f1_weighted: list[float] = field(default_factory=list)
    val_f1_positive: list[float] = field(default_factory=list)
    monitor: str = "weighted"
    best_epoch: int = 0
    stopped_epoch: int = 0

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(HISTORY_HEADER)
        for e in range(len(self.train_loss)):
            writer.writerow([
                e, repr(self.train_loss[e]), repr(self.val_loss[e]),
                repr(self.train_f1[e]), repr(self.val_f1[e]),
            ])
        return buf.getvalue()


def _f1_pair(y_true: np.ndarray, y_pred: np.ndarray) -> tuple[float, float]:
    """(weighted F1, positive-class F1) from one prediction pass."""
    report = classification_report(y_true, y_pred)
    return report.weighted_avg[2], report.residential.f1


def train(
    model: Mlp,
    state: OptimizerState,
    data: FeatureMatrix,
    split: SplitIndices,
    config: TrainConfig,
) -> tuple[Mlp, TrainHistory]:
    """Minibatch training with early stopping and best-weight restore.

    Per epoch: shuffle the train indices, step AMSGrad per batch (final
    partial batch included), then score the full validation set. Training
    stops when the monitored validation F1 has not strictly improved for
    ``patience`` epochs or at max_epochs; the returned model carries the
    weights of the best epoch.
    """
    if split.train.size == 0 or split.val.size == 0:
        raise EmptySplit("train and val splits must be nonempty")
    if data.y is None:
        raise EmptySplit("feature matrix has no labels")
    if data.x.shape[1] != model.layer_sizes[0]:
        raise ShapeMismatch(
            f"data width {data.x.shape[1]} != model d_in {model.layer_sizes[0]}"
        )
    x_val = data.x[split.val]
    y_val = data.y[split.val]
    rng = np.random.default_rng(config.seed)
    history = TrainHistory(monitor=config.monitor)
    best_metric = -np.inf
    best_theta = model.theta.copy()
    epochs_since_best = 0

    for epoch in range(config.max_epochs):
        perm = rng.permutation(split.train)
        loss_sum = 0.0
        preds = np.empty(perm.size, dtype=np.int8)
        targets = np.empty(perm.size, dtype=np.int8)
        for start in range(0, perm.size, config.batch_size):
            idx = perm[start:start + config.batch_size]
            trace = forward(model, data.x[idx])
            y_batch = data.y[idx]
            batch_loss = bce_loss(trace.y_hat, y_batch)
            if not np.isfinite(batch_loss):
                raise DivergedLoss(f"non-finite training loss at epoch {epoch}")
            loss_sum += batch_loss * idx.size
            preds[start:start + idx.size] = trace.y_hat >= config.threshold
            targets[start:start + idx.size] = y_batch
            grads = backward(model, trace, y_batch)
            amsgrad_step(model, grads, state)

        train_loss = loss_sum / perm.size
        train_w, train_p = _f1_pair(targets, preds)
        val_probs = forward_probs(model, x_val)
        val_loss = bce_loss(val_probs, y_val)
        if not np.isfinite(val_loss):
            raise DivergedLoss(f"non-finite validation loss at epoch {epoch}")
        val_w, val_p = _f1_pair(y_val, val_probs >= config.threshold)

        history.train_loss.append(train_loss)
        history.val_loss.append(val_loss)
        history.train_f1_weighted.append(train_w)
        history.train_f1_positive.append(train_p)
        history.val_f1_weighted.append(val_w)
        history.val_f1_positive.append(val_p)
        monitored = val_w if config.monitor == "weighted" else val_p
        history.train_f1.append(train_w if config.monitor == "weighted" else train_p)
        history.val_f1.append(monitored)

        if monitored > best_metric:
            best_metric = monitored
            history.best_epoch = epoch
            best_theta = model.theta.copy()
            epochs_since_best = 0
        else:
            epochs_since_best += 1
        history.stopped_epoch = epoch
        if epochs_since_best >= config.patience:
            break

    best = Mlp(layer_sizes=list(model.layer_sizes), alpha=model.alpha, theta=best_theta)
    best.weights, best.biases = _carve(best.theta, best.layer_sizes)
    return best, history


def predict(model: Mlp, x: np.ndarray, threshold: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """(probabilities, classes); class 1 (residential) iff prob >= threshold."""
    probs = forward_probs(model, x)
    return probs, (probs >= threshold).astype(int)
