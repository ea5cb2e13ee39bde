__package__ = 'onlinevis.model'

from typing import Optional

from ..attention import AttentionConfig, MSDeformAttn, MultiHeadAttention, MultiScaleFeatures
from ..memory import MemoryCrossAttention, MemoryQueue
from ..tensorcore import Module, LayerNorm, FeedForward, Tensor, RngState, parameter


class DecoderLayer(Module):
    """self-attention, then deformable cross-attention, then memory attention, then FFN"""

    def __init__(self, config: AttentionConfig, num_queries: int, ffn_dim: int, rng: RngState):
        self.self_attn = MultiHeadAttention(config.width, config.heads, rng)
        self.norm1 = LayerNorm(config.width)
        self.cross_attn = MSDeformAttn(config, rng)
        self.norm2 = LayerNorm(config.width)
        self.memory_attn = MemoryCrossAttention(config.width, config.heads, num_queries, rng)
        self.ffn = FeedForward(config.width, ffn_dim, rng)

    def forward(self, q: Tensor, query_pos: Tensor, ref: Tensor, feats: MultiScaleFeatures, queue: Optional[MemoryQueue], t: int) -> Tensor:
        q = self.norm1(q + self.self_attn(q, q, query_pos=query_pos, key_pos=query_pos))
        q = self.norm2(q + self.cross_attn(q + query_pos, ref, feats))
        q = self.memory_attn(q, queue, t)
        return self.ffn(q)


class MemoryDecoder(Module):
    def __init__(self, config: AttentionConfig, num_layers: int, num_queries: int, ffn_dim: int, rng: RngState):
        self.query_pos = parameter(rng.normal((num_queries, config.width), scale=0.02))
        self.layers = [DecoderLayer(config, num_queries, ffn_dim, rng) for _ in range(num_layers)]

    def forward(self, q: Tensor, ref: Tensor, feats: MultiScaleFeatures, queue: Optional[MemoryQueue]=None, t: int=0) -> Tensor:
        query_pos = self.query_pos[:q.shape[0]]
        for layer in self.layers:
            q = layer(q, query_pos, ref, feats, queue, t)
        return q
