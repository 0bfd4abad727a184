from . import autodiff
from .autodiff import Tensor, grad_check, tensor
from .layers import (
    Adam,
    GateAddNorm,
    Glu,
    Grn,
    InterpretableAttention,
    Linear,
    LstmCell,
    ParamStore,
    causal_mask,
    pinball,
    quantile_loss,
)

__all__ = [
    "Adam",
    "GateAddNorm",
    "Glu",
    "Grn",
    "InterpretableAttention",
    "Linear",
    "LstmCell",
    "ParamStore",
    "Tensor",
    "autodiff",
    "causal_mask",
    "grad_check",
    "pinball",
    "quantile_loss",
    "tensor",
]
