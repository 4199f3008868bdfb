from src.autodiff.tensor import Tensor, as_tensor, default_dtype, no_grad, precision
from src.autodiff.params import BoundParams, ParamSet
from src.autodiff.gradcheck import grad_check
from src.autodiff.checkpoint import load_checkpoint, save_checkpoint
from src.autodiff import ops

__all__ = [
    "Tensor",
    "as_tensor",
    "default_dtype",
    "no_grad",
    "precision",
    "ParamSet",
    "BoundParams",
    "grad_check",
    "load_checkpoint",
    "save_checkpoint",
    "ops",
]
