"""Training protocol, class-balanced sampling and split evaluation."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, TrainingDiverged, UndefinedMetricError
from .metrics import (
    accuracy,
    binary_f1,
    macro_f1,
    macro_recall,
    pr_auc,
    roc_auc_binary,
    roc_auc_ovr,
    threshold_sweep,
)
from .model import select_loss
from .nn.layers import Module
from .nn.optim import Adam, EarlyStopping, ReduceLROnPlateau, clip_global_norm, global_grad_norm
from .nn.tensor import Tensor, _sigmoid, no_grad

log = logging.getLogger(__name__)

SEEDS = (44, 36, 10)


@dataclass
class TrainConfig:
    max_epochs: int = 100
    batch_size: int = 64
    lr: float = 3e-4
    weight_decay: float = 5e-4
    scheduler_factor: float = 0.5
    scheduler_patience: int = 5
    scheduler_threshold: float = 1e-6
    early_stop_patience: int = 15
    clip_norm: float = 1.0
    dropout_global: float = 0.3
    dropout_cnn: float = 0.25
    seeds: tuple[int, ...] = SEEDS
    weighted_sampling: Optional[bool] = None  # None -> on for binary tasks
    eval_batch_size: int = 256

    def validate(self) -> "TrainConfig":
        positive = {
            "max_epochs": self.max_epochs,
            "batch_size": self.batch_size,
            "lr": self.lr,
            "scheduler_factor": self.scheduler_factor,
            "scheduler_patience": self.scheduler_patience,
            "early_stop_patience": self.early_stop_patience,
            "clip_norm": self.clip_norm,
        }
        bad = [k for k, v in positive.items() if not v > 0]
        if bad:
            raise ConfigError(f"training parameters must be positive: {', '.join(bad)}")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2 (batch-norm)")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        if "seeds" in d:
            d["seeds"] = tuple(d["seeds"])
        return cls(**d)


@dataclass
class SplitArrays:
    x_time: np.ndarray  # (N, C, T)
    x_spec: np.ndarray  # (N, C, F, T')
    y: np.ndarray

    def __len__(self) -> int:
        return len(self.y)

    def take(self, idx) -> "SplitArrays":
        return SplitArrays(self.x_time[idx], self.x_spec[idx], self.y[idx])


@dataclass
class MetricsRow:
    split: str
    acc: float
    f1: float
    recall: float
    roc_auc: float
    loss: float
    pr_auc: Optional[float] = None
    threshold: Optional[float] = None
    n: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    model: Module
    history: list[dict]
    best_epoch: int
    best_score: float
    stopped_epoch: int
    loss_info: dict = field(default_factory=dict)


# ---------------------------------------------------------------- sampling


def sample_weights(labels, n_classes: Optional[int] = None) -> np.ndarray:
    """Per-example weights inversely proportional to class frequency (sum 1)."""
    labels = np.asarray(labels, dtype=int)
    k = int(labels.max()) + 1 if n_classes is None else n_classes
    counts = np.bincount(labels, minlength=k)
    if np.any(counts == 0):
        raise ConfigError(f"every class needs at least one example, got counts {counts.tolist()}")
    w = 1.0 / counts[labels]
    return w / w.sum()


def weighted_sampler(labels, seed, n_samples: Optional[int] = None, n_classes: Optional[int] = None) -> np.ndarray:
    """Index stream drawn with replacement under ``sample_weights``."""
    w = sample_weights(labels, n_classes)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = len(w) if n_samples is None else n_samples
    return rng.choice(len(w), size=n, replace=True, p=w)


# ---------------------------------------------------------------- inference / evaluation


def predict_logits(model: Module, data: SplitArrays, batch_size: int = 256) -> np.ndarray:
    model.eval()
    out = []
    with no_grad():
        for start in range(0, len(data), batch_size):
            sl = slice(start, start + batch_size)
            out.append(model(data.x_time[sl], data.x_spec[sl]).data)
    return np.concatenate(out, axis=0).astype(np.float64)


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _safe(fn, *args) -> float:
    try:
        return fn(*args)
    except UndefinedMetricError:
        return float("nan")


def metrics_from_logits(
    logits: np.ndarray,
    labels: np.ndarray,
    n_classes: int,
    loss: float,
    split: str = "",
    threshold: Optional[float] = None,
) -> MetricsRow:
    """Percent-scaled metrics. Binary tasks report positive-class F1/recall
    at ``threshold`` (default 0.5); multi-class tasks report macro averages."""
    labels = np.asarray(labels, dtype=int)
    if labels.size == 0:
        raise ConfigError(f"cannot evaluate an empty split {split!r}")
    if n_classes == 2:
        z = logits.reshape(-1)
        probs = _sigmoid(z.astype(np.float64))
        t = 0.5 if threshold is None else threshold
        pred = (probs >= t).astype(int)
        tp_recall = float(np.mean(pred[labels == 1])) if np.any(labels == 1) else float("nan")
        return MetricsRow(
            split=split,
            acc=100 * accuracy(labels, pred),
            f1=100 * binary_f1(labels, pred),
            recall=100 * tp_recall,
            roc_auc=100 * _safe(roc_auc_binary, labels, z),
            pr_auc=100 * _safe(pr_auc, labels, probs),
            loss=loss,
            threshold=t,
            n=int(labels.size),
        )
    probs = _softmax(logits)
    pred = probs.argmax(axis=1)
    return MetricsRow(
        split=split,
        acc=100 * accuracy(labels, pred),
        f1=100 * macro_f1(labels, pred, n_classes),
        recall=100 * macro_recall(labels, pred, n_classes),
        roc_auc=100 * _safe(roc_auc_ovr, labels, probs),
        loss=loss,
        n=int(labels.size),
    )


def evaluate(
    model: Module,
    data: SplitArrays,
    n_classes: int,
    loss_fn: Callable,
    split: str = "",
    threshold: Optional[float] = None,
    batch_size: int = 256,
) -> MetricsRow:
    if len(data) == 0:
        raise ConfigError(f"cannot evaluate an empty split {split!r}")
    logits = predict_logits(model, data, batch_size)
    loss = float(loss_fn(Tensor(logits), data.y).data)
    return metrics_from_logits(logits, data.y, n_classes, loss, split, threshold)


def fit_threshold(model: Module, val: SplitArrays, batch_size: int = 256) -> float:
    """F1-maximizing decision threshold on validation sigmoid probabilities."""
    probs = _sigmoid(predict_logits(model, val, batch_size).reshape(-1))
    return threshold_sweep(probs, val.y)[0]


def selection_score(row: MetricsRow, n_classes: int) -> float:
    """Checkpoint / config selection metric: accuracy for multi-class,
    PR-AUC (falling back to ROC-AUC) for binary."""
    if n_classes > 2:
        return row.acc
    if row.pr_auc is not None and not math.isnan(row.pr_auc):
        return row.pr_auc
    return row.roc_auc


# ---------------------------------------------------------------- training loop


def train(
    model: Module,
    splits: dict[str, SplitArrays],
    cfg: TrainConfig,
    seed: int,
    n_classes: int,
    loss_fn: Optional[Callable] = None,
    on_epoch: Optional[Callable[[dict], None]] = None,
) -> TrainResult:
    """Adam + global-norm clipping + plateau LR halving + early stopping on
    validation accuracy. The returned model holds the best checkpoint by
    ``selection_score``."""
    cfg.validate()
    train_set, val_set = splits.get("train"), splits.get("val")
    if train_set is None or len(train_set) == 0:
        raise ConfigError("training split is empty")
    if val_set is None or len(val_set) == 0:
        raise ConfigError("validation split is empty")
    loss_info: dict = {}
    if loss_fn is None:
        loss_fn, loss_info = select_loss(n_classes, train_set.y)
    weighted = cfg.weighted_sampling if cfg.weighted_sampling is not None else n_classes == 2

    rng = np.random.default_rng(seed)
    model.set_rng(np.random.default_rng(seed + 1))
    params = model.parameters()
    opt = Adam(params, lr=cfg.lr, weight_decay=cfg.weight_decay)
    scheduler = ReduceLROnPlateau(opt, cfg.scheduler_factor, cfg.scheduler_patience, cfg.scheduler_threshold)
    stopper = EarlyStopping(cfg.early_stop_patience)

    history: list[dict] = []
    best_score, best_epoch, best_state = -math.inf, 0, model.state_dict()
    n = len(train_set)
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        model.train()
        order = weighted_sampler(train_set.y, rng, n, n_classes) if weighted else rng.permutation(n)
        losses, max_norm = [], 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            if len(idx) < 2:
                continue
            batch = train_set.take(idx)
            opt.zero_grad()
            loss = loss_fn(model(batch.x_time, batch.x_spec), batch.y)
            if not np.isfinite(loss.data):
                raise TrainingDiverged(
                    f"non-finite loss {float(loss.data)} at epoch {epoch}, batch starting {start}, lr {opt.lr:g}"
                )
            loss.backward()
            clip_global_norm(params, cfg.clip_norm)
            max_norm = max(max_norm, global_grad_norm(params))
            opt.step()
            losses.append(float(loss.data))

        val = evaluate(model, val_set, n_classes, loss_fn, "val", batch_size=cfg.eval_batch_size)
        score = selection_score(val, n_classes)
        row = {
            "epoch": epoch,
            "train_loss": float(np.mean(losses)) if losses else float("nan"),
            "val_loss": val.loss,
            "val_acc": val.acc,
            "val_score": score,
            "lr": opt.lr,
            "max_grad_norm": max_norm,
        }
        history.append(row)
        if on_epoch is not None:
            on_epoch(row)
        log.debug("epoch %d %s", epoch, row)
        if score > best_score:
            best_score, best_epoch, best_state = score, epoch, model.state_dict()
        scheduler.step(val.loss)
        if stopper.step(val.acc):
            break

    model.load_state_dict(best_state)
    model.eval()
    return TrainResult(model, history, best_epoch, best_score, epoch, loss_info)


def table_row(rows: dict[str, MetricsRow], n_classes: int) -> dict:
    """Flatten split metrics into the ablation-table column layout."""
    out = {
        "val_acc": rows["val"].acc,
        "seen_acc": rows["seen"].acc,
        "seen_loss": rows["seen"].loss,
        "unseen_acc": rows["unseen"].acc,
        "unseen_f1": rows["unseen"].f1,
        "unseen_recall": rows["unseen"].recall,
        "unseen_auc": rows["unseen"].roc_auc,
    }
    if n_classes == 2:
        out["unseen_pr_auc"] = rows["unseen"].pr_auc
        out["val_pr_auc"] = rows["val"].pr_auc
        out["val_auc"] = rows["val"].roc_auc
        out["threshold"] = rows["val"].threshold
    out["unseen_loss"] = rows["unseen"].loss
    return out


def train_and_evaluate(
    model: Module,
    splits: dict[str, SplitArrays],
    cfg: TrainConfig,
    seed: int,
    n_classes: int,
) -> tuple[TrainResult, dict[str, MetricsRow]]:
    """Full protocol: train, freeze the validation threshold (binary), then
    evaluate validation, seen-subject and unseen-subject splits."""
    result = train(model, splits, cfg, seed, n_classes)
    loss_fn, _ = select_loss(n_classes, splits["train"].y)
    threshold = fit_threshold(result.model, splits["val"], cfg.eval_batch_size) if n_classes == 2 else None
    rows = {}
    for name in ("val", "seen", "unseen"):
        if name in splits and len(splits[name]):
            rows[name] = evaluate(result.model, splits[name], n_classes, loss_fn, name, threshold, cfg.eval_batch_size)
    return result, rows
