"""
Minimal reverse-mode autodiff over numpy arrays.
"""
from app.core.autodiff.gradcheck import grad_check
from app.core.autodiff.optim import Adam, AdamState, adam_step, lr_schedule
from app.core.autodiff.parameters import ParameterStore, kaiming_uniform
from app.core.autodiff.tensor import Tensor, no_grad

__all__ = [
    "Adam",
    "AdamState",
    "ParameterStore",
    "Tensor",
    "adam_step",
    "grad_check",
    "kaiming_uniform",
    "lr_schedule",
    "no_grad",
]
