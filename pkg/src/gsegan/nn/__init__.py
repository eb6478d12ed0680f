"""Autodiff tensors, neural-net ops and optimization utilities."""

from . import ops
from .adam import Adam, adam_update
from .backend import BACKEND, conv_geometry
from .checkpoint import load_tensors, save_tensors
from .gradcheck import GradReport, grad_check
from .tensor import Parameter, Tensor, no_grad, set_nan_check

__all__ = [
    "ops", "Adam", "adam_update", "BACKEND", "conv_geometry",
    "load_tensors", "save_tensors", "GradReport", "grad_check",
    "Parameter", "Tensor", "no_grad", "set_nan_check",
]
