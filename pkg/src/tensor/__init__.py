"""Package initialization for src.tensor"""

from src.tensor.autodiff import ComputationRecord, Function, Tensor, concat, no_grad, stack, tensor
from src.tensor.functional import conv1d, conv2d, dense, dropout, pool, softmax
from src.tensor.gradcheck import gradcheck, gradcheck_module, gradcheck_tensors

__all__ = [
    'ComputationRecord',
    'Function',
    'Tensor',
    'concat',
    'no_grad',
    'stack',
    'tensor',
    'conv1d',
    'conv2d',
    'dense',
    'dropout',
    'pool',
    'softmax',
    'gradcheck',
    'gradcheck_module',
    'gradcheck_tensors',
]
