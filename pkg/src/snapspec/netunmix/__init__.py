"""From-scratch trainable network recovering the coded intensity image
from the overlapped dispersive measurement."""

from .gradcheck import grad_check, loss_and_grads
from .kernels import available_backends, backend_name, set_backend
from .layers import (
    conv2d,
    conv2d_grad,
    downsampler,
    nonbt1d,
    relu,
    relu_grad,
    transposed_conv2d,
    transposed_conv2d_grad,
)
from .losses import hard_mining_loss, hard_mining_selection, mse_loss
from .network import (
    ArchConfig,
    Network,
    NetworkParams,
    build_network,
    infer,
    load_params,
    save_params,
)
from .train import TrainConfig, evaluate_loss, save_loss_curve, train

__all__ = [
    "ArchConfig",
    "Network",
    "NetworkParams",
    "TrainConfig",
    "available_backends",
    "backend_name",
    "build_network",
    "conv2d",
    "conv2d_grad",
    "downsampler",
    "evaluate_loss",
    "grad_check",
    "hard_mining_loss",
    "hard_mining_selection",
    "infer",
    "load_params",
    "loss_and_grads",
    "mse_loss",
    "nonbt1d",
    "relu",
    "relu_grad",
    "save_loss_curve",
    "save_params",
    "set_backend",
    "train",
    "transposed_conv2d",
    "transposed_conv2d_grad",
]
