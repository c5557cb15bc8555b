"""Small reverse-mode autodiff core with the layers the graph optimizer needs."""

from .io import load_weights, save_weights
from .layers import MLPSpec, ModelWeights, gru_cell, init_gru, init_mlp, mlp_forward
from .optim import AdamState, adamw_step, clip_grad_norm, lr_schedule
from .value import (
    Value,
    absolute,
    add,
    as_value,
    concat,
    cross,
    div,
    gather,
    getitem,
    l1_loss,
    matmul,
    mean,
    mul,
    parameter,
    relu,
    reshape,
    scatter_mean,
    sigmoid,
    sqrt,
    stack,
    sub,
    swapaxes,
    tanh,
)
