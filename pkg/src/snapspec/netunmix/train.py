"""Minibatch training loop with SGD/Adam and deterministic mode.

The dataset is a list of (input, label) pairs shaped (1, H, Wd) and
(1, H, W).  In deterministic mode the shuffle order is fixed by the
seed and gradient accumulation is serial, so the loss curve is
bit-reproducible for a given (seed, dataset, config).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import TrainingDiverged
from .losses import LOSSES
from .network import ArchConfig, Network, NetworkParams, build_network


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 8
    epochs: int = 50
    optimizer: str = "adam"   # "adam" | "sgd"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    loss: str = "mse"         # "mse" | "hard-mining"
    seed: int = 0
    deterministic: bool = True

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")


class _Adam:
    def __init__(self, params: NetworkParams, cfg: TrainConfig):
        self.cfg = cfg
        self.t = 0
        self.m = [{k: np.zeros_like(v) for k, v in b.items()} for b in params.blocks]
        self.v = [{k: np.zeros_like(v) for k, v in b.items()} for b in params.blocks]

    def step(self, params: NetworkParams, grads: list[dict]):
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1 ** self.t
        bc2 = 1.0 - c.beta2 ** self.t
        for block, g, m, v in zip(params.blocks, grads, self.m, self.v):
            for key in block:
                m[key] = c.beta1 * m[key] + (1.0 - c.beta1) * g[key]
                v[key] = c.beta2 * v[key] + (1.0 - c.beta2) * g[key] ** 2
                block[key] = block[key] - c.lr * (m[key] / bc1) / (np.sqrt(v[key] / bc2) + c.eps)


class _Sgd:
    def __init__(self, params: NetworkParams, cfg: TrainConfig):
        self.cfg = cfg

    def step(self, params: NetworkParams, grads: list[dict]):
        for block, g in zip(params.blocks, grads):
            for key in block:
                block[key] = block[key] - self.cfg.lr * g[key]


def _stack(dataset):
    xs = np.stack([np.asarray(x, dtype=np.float64) for x, _ in dataset])
    ys = np.stack([np.asarray(y, dtype=np.float64) for _, y in dataset])
    return xs, ys


def evaluate_loss(params: NetworkParams, dataset, loss: str = "mse") -> float:
    """Mean loss of the current parameters over a dataset."""
    net = Network(params.cfg)
    xs, ys = _stack(dataset)
    pred = net.forward(params, xs)
    value, _ = LOSSES[loss](pred, ys)
    return value


def train(
    dataset,
    cfg: TrainConfig,
    arch: ArchConfig | None = None,
    params: NetworkParams | None = None,
    val_dataset=None,
    checkpoint_epochs=(),
    checkpoint_fn=None,
):
    """Train from scratch (arch + seed) or continue from given params.

    Returns (params, curve) where curve rows are (epoch, train_loss,
    val_loss); val_loss is NaN without a validation set.  Raises
    TrainingDiverged with the epoch index if the loss goes non-finite.
    ``checkpoint_fn(epoch, params)`` fires after each epoch listed in
    ``checkpoint_epochs``.
    """
    if not dataset:
        raise ValueError("dataset is empty")
    if params is None:
        if arch is None:
            raise ValueError("need arch or initial params")
        params = build_network(arch, seed=cfg.seed)
    else:
        params = params.copy()
    net = Network(params.cfg)
    loss_fn = LOSSES[cfg.loss]
    opt = _Adam(params, cfg) if cfg.optimizer == "adam" else _Sgd(params, cfg)

    xs, ys = _stack(dataset)
    n = xs.shape[0]
    rng = np.random.default_rng(cfg.seed)
    curve = []
    checkpoint_epochs = set(checkpoint_epochs)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            bx, by = xs[idx], ys[idx]
            pred, state = net.forward(params, bx, want_caches=True)
            value, gy = loss_fn(pred, by)
            if not np.isfinite(value):
                raise TrainingDiverged(epoch)
            total += value * len(idx)
            grads = net.backward(params, state, gy)
            opt.step(params, grads)
        train_loss = total / n
        val_loss = float("nan")
        if val_dataset:
            val_loss = evaluate_loss(params, val_dataset, cfg.loss)
        curve.append((epoch, train_loss, val_loss))
        if epoch in checkpoint_epochs and checkpoint_fn is not None:
            checkpoint_fn(epoch, params)
    return params, curve


def save_loss_curve(curve, path: str | Path) -> None:
    lines = ["epoch,train_loss,val_loss"]
    for epoch, tr, va in curve:
        lines.append(f"{epoch},{tr!r},{va!r}")
    Path(path).write_text("\n".join(lines) + "\n")
