"""Mini-batch training with early stopping, plus the cross-validation driver."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .metrics import confusion_and_metrics, roc_and_auc
from .nn import AdamState, Model, adam_step, loss_bce, one_hot


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 15
    seed: int = 0

    def __post_init__(self):
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class TrainResult:
    best_weights: dict
    best_val_loss: float
    best_epoch: int
    history: list = field(default_factory=list)  # per-epoch dicts
    optimizer: AdamState | None = None


def _epoch_batches(n, batch_size, rng):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def evaluate_loss(model: Model, x, y) -> tuple[float, float]:
    """Validation loss and threshold-0.5 accuracy in eval mode."""
    probs, _ = model.forward(x, mode="eval")
    loss, _ = loss_bce(probs, one_hot(y, dtype=model.dtype))
    preds = (probs[:, 1] >= 0.5).astype(int)
    acc = float((preds == np.asarray(y)).mean())
    return loss, acc


def train(model: Model, train_set, val_set, config: TrainConfig = TrainConfig()) -> TrainResult:
    """Seeded epoch loop; keeps the best-validation-loss checkpoint.

    Stops at max_epochs or after `patience` consecutive epochs without a
    strict improvement of the validation loss. The best weights are
    returned, not the last.
    """
    x_train, y_train = train_set
    x_val, y_val = val_set
    if len(x_train) == 0 or len(x_val) == 0:
        raise ValueError("train and validation sets must be non-empty")

    rng = np.random.default_rng(config.seed)
    state = AdamState(lr=config.lr)
    best = TrainResult(best_weights={}, best_val_loss=float("inf"), best_epoch=-1)
    epochs_since_improve = 0
    params = model.named_params()

    for epoch in range(config.max_epochs):
        train_loss = 0.0
        n_batches = 0
        for batch_idx in _epoch_batches(len(x_train), config.batch_size, rng):
            xb = x_train[batch_idx]
            yb = one_hot(y_train[batch_idx], dtype=model.dtype)
            probs, cache = model.forward(
                xb, mode="train", rng_seed=int(rng.integers(2 ** 31))
            )
            loss, dlogits = loss_bce(probs, yb)
            grads = model.backward(cache, dlogits)
            adam_step(params, grads, state)
            train_loss += loss
            n_batches += 1

        val_loss, val_acc = evaluate_loss(model, x_val, y_val)
        best.history.append({
            "epoch": epoch,
            "train_loss": train_loss / max(n_batches, 1),
            "val_loss": val_loss,
            "val_accuracy": val_acc,
        })

        if val_loss < best.best_val_loss:
            best.best_val_loss = val_loss
            best.best_epoch = epoch
            best.best_weights = {k: v.copy() for k, v in params.items()}
            epochs_since_improve = 0
        else:
            epochs_since_improve += 1
            if epochs_since_improve >= config.patience:
                break

    best.optimizer = state
    model.set_named_params(best.best_weights)
    return best


def cross_validate(model_builder, images, labels, folds, config: TrainConfig = TrainConfig()) -> dict:
    """Train/validate once per fold; returns per-fold metrics and their mean.

    model_builder(seed) must return a fresh Model. `folds` is a
    FoldAssignment over indices 0..n-1.
    """
    labels = np.asarray(labels)
    fold_reports = []
    for fold in range(folds.k):
        val_idx = np.array(sorted(folds.fold_items(fold)), dtype=int)
        train_idx = np.array(
            sorted(set(range(len(labels))) - set(val_idx.tolist())), dtype=int
        )
        if len(set(labels[val_idx].tolist())) < 2:
            raise ValueError(f"fold {fold} validation set contains a single class")

        model = model_builder(config.seed + fold)
        result = train(model, (images[train_idx], labels[train_idx]),
                       (images[val_idx], labels[val_idx]), config)
        probs, _ = model.forward(images[val_idx], mode="eval")
        scores = probs[:, 1]
        preds = (scores >= 0.5).astype(int)
        metrics = confusion_and_metrics(labels[val_idx], preds)
        roc = roc_and_auc(scores, labels[val_idx])
        fold_reports.append({
            "fold": fold,
            "metrics": metrics,
            "roc": roc,
            "scores": scores.tolist(),
            "labels": labels[val_idx].tolist(),
            "best_val_loss": result.best_val_loss,
            "best_epoch": result.best_epoch,
        })

    accuracies = [r["metrics"]["accuracy"] for r in fold_reports]
    return {
        "folds": fold_reports,
        "mean_accuracy": float(np.mean(accuracies)),
    }
