__package__ = 'onlinevis.tensorcore'

from .tensor import (                                   # noqa
    Tensor, TensorLike, TapeNode, as_tensor, parameter, backward, no_grad, is_grad_enabled,
    check_mode, set_precision, get_precision, get_default_dtype,
)
from . import functional as F                           # noqa
from .rng import RngState                               # noqa
from .nn import Module, Linear, LayerNorm, Conv2d, MLP, FeedForward     # noqa
