"""Minimal differentiable compute kernel: tensors, primitives, optimizer."""

from statetrack.numerics.gradcheck import GradCheckReport, check_gradients
from statetrack.numerics.layers import (
    affine,
    gru_step,
    layer_norm,
    multi_head_attention,
)
from statetrack.numerics.params import (
    Adam,
    ParamStore,
    atomic_write_text,
    load_checkpoint,
    save_checkpoint,
)
from statetrack.numerics.tensor import (
    Tensor,
    concat,
    dropout,
    gelu,
    log_softmax,
    no_grad,
    scatter_add_rows,
    set_rows,
    softmax,
    stack,
)

__all__ = [
    "Adam",
    "GradCheckReport",
    "ParamStore",
    "Tensor",
    "affine",
    "atomic_write_text",
    "check_gradients",
    "concat",
    "dropout",
    "gelu",
    "gru_step",
    "layer_norm",
    "load_checkpoint",
    "log_softmax",
    "multi_head_attention",
    "no_grad",
    "save_checkpoint",
    "scatter_add_rows",
    "set_rows",
    "softmax",
    "stack",
]
