"""Two-class cross-entropy over softmax probabilities."""
from __future__ import annotations

import numpy as np

PROB_CLAMP = 1e-12


def loss_bce(probs: np.ndarray, labels_onehot: np.ndarray):
    """Mean cross-entropy and its gradient with respect to pre-softmax logits.

    probs rows must sum to 1 (softmax output). The returned gradient is the
    combined softmax + cross-entropy form (probs - labels) / batch.
    """
    probs = np.asarray(probs)
    labels = np.asarray(labels_onehot, dtype=probs.dtype)
    if probs.shape != labels.shape:
        raise ValueError(f"probs {probs.shape} and labels {labels.shape} differ")
    batch = probs.shape[0]
    loss = float(-(labels * np.log(np.maximum(probs, PROB_CLAMP))).sum() / batch)
    dlogits = (probs - labels) / batch
    return loss, dlogits


def one_hot(labels: np.ndarray, n_classes: int = 2, dtype=np.float32) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((len(labels), n_classes), dtype=dtype)
    out[np.arange(len(labels)), labels] = 1
    return out
