__package__ = 'onlinevis.tensorcore'

import math

from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from ..misc.errors import ConfigurationError
from . import functional as F
from .rng import RngState
from .tensor import Tensor, TensorLike, parameter


class Module:
    """
    Container for parameters and sub-modules. Attributes are discovered in
    insertion order, so parameter names are stable across runs:

        class Head(Module):
            def __init__(self, rng):
                self.proj = Linear(8, 4, rng)

        Head(rng).state_dict()      # {'proj.weight': ..., 'proj.bias': ...}
    """

    def named_parameters(self, prefix: str='') -> Iterator[Tuple[str, Tensor]]:
        for key, value in vars(self).items():
            name = f'{prefix}{key}'
            if isinstance(value, Tensor) and value.requires_grad:
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f'{name}.')
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f'{name}.{i}.')
                    elif isinstance(item, Tensor) and item.requires_grad:
                        yield f'{name}.{i}', item

    def parameters(self) -> List[Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray], strict: bool=True) -> None:
        params = dict(self.named_parameters())
        missing = sorted(set(params) - set(state))
        unexpected = sorted(set(state) - set(params))
        if strict and (missing or unexpected):
            raise ConfigurationError(
                f'Checkpoint does not fit this model: missing={missing[:5]} unexpected={unexpected[:5]}',
                hints=('Check that the checkpoint was trained with the same --preset and width settings',),
            )
        for name, value in state.items():
            if name not in params:
                continue
            if params[name].shape != tuple(value.shape):
                raise ConfigurationError(
                    f'Checkpoint tensor {name} has shape {tuple(value.shape)}, the model expects {params[name].shape}',
                    hints=('Check that the checkpoint was trained with the same --preset and width settings',),
                )
            params[name].data = np.array(value, dtype=params[name].dtype)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def xavier_uniform(shape: Tuple[int, int], rng: RngState) -> np.ndarray:
    fan_in, fan_out = shape
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, shape)


class Linear(Module):
    """y = x @ W + b, with W stored as in×out"""

    def __init__(self, in_features: int, out_features: int, rng: RngState, bias: bool=True, zero_init: bool=False):
        self.in_features = in_features
        self.out_features = out_features
        init = np.zeros((in_features, out_features)) if zero_init else xavier_uniform((in_features, out_features), rng)
        self.weight = parameter(init)
        self.bias: Optional[Tensor] = parameter(np.zeros(out_features)) if bias else None

    def forward(self, x: TensorLike) -> Tensor:
        out = F.matmul(x, self.weight)
        return out if self.bias is None else out + self.bias


class LayerNorm(Module):
    def __init__(self, width: int, eps: float=1e-5):
        self.eps = eps
        self.weight = parameter(np.ones(width))
        self.bias = parameter(np.zeros(width))

    def forward(self, x: TensorLike) -> Tensor:
        return F.layer_norm(x, self.weight, self.bias, eps=self.eps)


class Conv2d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, rng: RngState, stride: int=1, padding: Optional[int]=None):
        self.stride = stride
        self.padding = kernel_size // 2 if padding is None else padding
        fan_in = in_channels * kernel_size * kernel_size
        self.weight = parameter(rng.normal((out_channels, in_channels, kernel_size, kernel_size), scale=math.sqrt(2.0 / fan_in)))
        self.bias = parameter(np.zeros(out_channels))

    def forward(self, x: TensorLike) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class MLP(Module):
    """Stack of Linear layers with ReLU between them (none after the last)"""

    def __init__(self, in_features: int, hidden: int, out_features: int, num_layers: int, rng: RngState, zero_last: bool=False):
        widths = [in_features] + [hidden] * (num_layers - 1) + [out_features]
        self.layers = [
            Linear(widths[i], widths[i + 1], rng, zero_init=(zero_last and i == num_layers - 1))
            for i in range(num_layers)
        ]

    def forward(self, x: TensorLike) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = F.relu(x)
        return x


class FeedForward(Module):
    """Position-wise FFN block: LN(x + W2 relu(W1 x))"""

    def __init__(self, width: int, hidden: int, rng: RngState):
        self.linear1 = Linear(width, hidden, rng)
        self.linear2 = Linear(hidden, width, rng)
        self.norm = LayerNorm(width)

    def forward(self, x: Tensor) -> Tensor:
        return self.norm(x + self.linear2(F.relu(self.linear1(x))))
