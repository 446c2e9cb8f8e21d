from .gradcheck import gradcheck
from .tensor import Function, Parameter, Tensor

__all__ = ["Function", "Parameter", "Tensor", "gradcheck"]
