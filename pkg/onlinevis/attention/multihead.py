__package__ = 'onlinevis.attention'

import math

from typing import Optional, Tuple, Union

from ..misc.errors import ContractError, DimensionError
from ..tensorcore import Module, Linear, Tensor, F, RngState


class MultiHeadAttention(Module):
    """
    Scaled dot-product attention over M heads. Positional encodings are added to
    the query and key inputs before projection, never to the values. The residual
    connection is left to the caller.
    """

    def __init__(self, width: int, heads: int, rng: RngState):
        if width % heads != 0:
            raise DimensionError(f'width {width} is not divisible by {heads} heads')
        self.width = width
        self.heads = heads
        self.q_proj = Linear(width, width, rng)
        self.k_proj = Linear(width, width, rng)
        self.v_proj = Linear(width, width, rng)
        self.out_proj = Linear(width, width, rng)

    def forward(
        self,
        queries: Tensor,
        keys_values: Tensor,
        query_pos: Optional[Tensor]=None,
        key_pos: Optional[Tensor]=None,
        return_weights: bool=False,
    ) -> Union[Tensor, Tuple[Tensor, Tensor]]:
        n, s = queries.shape[0], keys_values.shape[0]
        if s == 0:
            raise ContractError('multi-head attention needs at least one key')
        heads, head_width = self.heads, self.width // self.heads

        q_in = queries if query_pos is None else queries + query_pos
        k_in = keys_values if key_pos is None else keys_values + key_pos

        q = F.transpose(F.reshape(self.q_proj(q_in), (n, heads, head_width)), (1, 0, 2))        # M×N×Dh
        k = F.transpose(F.reshape(self.k_proj(k_in), (s, heads, head_width)), (1, 2, 0))        # M×Dh×S
        v = F.transpose(F.reshape(self.v_proj(keys_values), (s, heads, head_width)), (1, 0, 2)) # M×S×Dh

        weights = F.softmax(F.matmul(q, k) / math.sqrt(head_width), axis=-1)                 # M×N×S
        mixed = F.reshape(F.transpose(F.matmul(weights, v), (1, 0, 2)), (n, self.width))
        out = self.out_proj(mixed)
        return (out, weights) if return_weights else out
