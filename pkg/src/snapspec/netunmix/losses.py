"""Pixel-wise regression losses with analytic gradients.

``mse_loss`` averages squared error over every pixel of the batch.
``hard_mining_loss`` restricts the average to the highest-loss half of
the pixels: the threshold t is the smallest per-pixel loss among the
top ceil(N/2), every pixel with loss >= t is kept (ties widen the
set), and excluded pixels get zero gradient.
"""

from __future__ import annotations

import math

import numpy as np


def mse_loss(pred: np.ndarray, label: np.ndarray) -> tuple[float, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    label = np.asarray(label, dtype=np.float64)
    if pred.shape != label.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {label.shape}")
    diff = pred - label
    loss = float((diff ** 2).mean())
    grad = (2.0 / diff.size) * diff
    return loss, grad


def hard_mining_selection(pred: np.ndarray, label: np.ndarray) -> np.ndarray:
    """Boolean mask of the pixels the hard-mining loss keeps."""
    pred = np.asarray(pred, dtype=np.float64)
    label = np.asarray(label, dtype=np.float64)
    if pred.shape != label.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {label.shape}")
    d = (pred - label) ** 2
    flat = d.ravel()
    top = math.ceil(flat.size / 2)
    t = np.partition(flat, flat.size - top)[flat.size - top]
    return d >= t


def hard_mining_loss(
    pred: np.ndarray,
    label: np.ndarray,
    selection: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """Mean squared error over the hard half of the pixels.

    ``selection`` freezes the kept-pixel mask (used by the gradient
    checker, where the threshold must not move with the perturbation).
    """
    pred = np.asarray(pred, dtype=np.float64)
    label = np.asarray(label, dtype=np.float64)
    if selection is None:
        selection = hard_mining_selection(pred, label)
    diff = pred - label
    count = int(selection.sum())
    loss = float(((diff ** 2)[selection]).sum() / count)
    grad = np.zeros_like(diff)
    grad[selection] = (2.0 / count) * diff[selection]
    return loss, grad


LOSSES = {"mse": mse_loss, "hard-mining": hard_mining_loss}
