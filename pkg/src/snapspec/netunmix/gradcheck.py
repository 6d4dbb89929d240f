"""Finite-difference verification of the analytic gradients.

Central differences of the full forward + loss against backprop, over
a random subset of parameter coordinates.  For the hard-mining loss
the kept-pixel selection is frozen at the unperturbed parameters so
both sides differentiate the same function.
"""

from __future__ import annotations

import numpy as np

from .losses import hard_mining_loss, hard_mining_selection, mse_loss
from .network import Network, NetworkParams


def loss_and_grads(params: NetworkParams, x, y, loss: str = "mse", selection=None):
    """Scalar loss and per-block parameter gradients for one batch."""
    net = Network(params.cfg)
    pred, state = net.forward(params, x, want_caches=True)
    if loss == "mse":
        value, gy = mse_loss(pred, y)
    elif loss == "hard-mining":
        value, gy = hard_mining_loss(pred, y, selection)
    else:
        raise ValueError(f"unknown loss {loss!r}")
    return value, net.backward(params, state, gy)


def grad_check(
    params: NetworkParams,
    sample,
    eps: float = 1e-4,
    num_params: int = 200,
    loss: str = "mse",
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference
    gradients over >= num_params randomly sampled coordinates."""
    x, y = sample
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim == 3:
        x = x[None]
        y = y[None]
    net = Network(params.cfg)
    selection = None
    if loss == "hard-mining":
        selection = hard_mining_selection(net.forward(params, x), y)

    def loss_only():
        pred = net.forward(params, x)
        if loss == "mse":
            return mse_loss(pred, y)[0]
        return hard_mining_loss(pred, y, selection)[0]

    _, grads = loss_and_grads(params, x, y, loss, selection)

    coords = []
    for bi, block in enumerate(params.blocks):
        for key, arr in block.items():
            coords.extend((bi, key, flat) for flat in range(arr.size))
    rng = np.random.default_rng(seed)
    take = min(num_params, len(coords))
    picked = rng.choice(len(coords), size=take, replace=False)

    worst = 0.0
    for ci in picked:
        bi, key, flat = coords[ci]
        arr = params.blocks[bi][key]
        orig = arr.flat[flat]
        arr.flat[flat] = orig + eps
        up = loss_only()
        arr.flat[flat] = orig - eps
        down = loss_only()
        arr.flat[flat] = orig
        numeric = (up - down) / (2.0 * eps)
        analytic = grads[bi][key].flat[flat]
        denom = max(abs(numeric), abs(analytic), 1e-8)
        worst = max(worst, abs(numeric - analytic) / denom)
    return worst
