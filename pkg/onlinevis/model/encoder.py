__package__ = 'onlinevis.model'

from typing import List, Tuple

import numpy as np

from ..attention import AttentionConfig, MSDeformAttn, MultiScaleFeatures, sine_positional_encoding
from ..tensorcore import Module, LayerNorm, FeedForward, Tensor, F, RngState, parameter


def token_reference_points(level_shapes: List[Tuple[int, int]]) -> np.ndarray:
    """Normalized centre ((x+0.5)/W, (y+0.5)/H) of every token, levels concatenated"""
    refs = []
    for h, w in level_shapes:
        ys, xs = np.mgrid[0:h, 0:w]
        refs.append(np.stack([(xs.reshape(-1) + 0.5) / w, (ys.reshape(-1) + 0.5) / h], axis=-1))
    return np.concatenate(refs, axis=0)


class EncoderLayer(Module):
    def __init__(self, config: AttentionConfig, ffn_dim: int, rng: RngState):
        self.self_attn = MSDeformAttn(config, rng)
        self.norm = LayerNorm(config.width)
        self.ffn = FeedForward(config.width, ffn_dim, rng)

    def forward(self, tokens: Tensor, pos: Tensor, ref: np.ndarray, level_shapes: List[Tuple[int, int]]) -> Tensor:
        feats = MultiScaleFeatures.from_tokens(tokens, level_shapes)
        tokens = self.norm(tokens + self.self_attn(tokens + pos, ref, feats))
        return self.ffn(tokens)


class DeformableEncoder(Module):
    """Stack of multi-scale deformable self-attention layers over all tokens of all levels"""

    def __init__(self, config: AttentionConfig, num_layers: int, ffn_dim: int, rng: RngState):
        self.config = config
        self.level_embed = parameter(rng.normal((config.levels, config.width), scale=0.02))
        self.layers = [EncoderLayer(config, ffn_dim, rng) for _ in range(num_layers)]

    def positional_encoding(self, level_shapes: List[Tuple[int, int]]) -> Tensor:
        width = self.config.width
        per_level = [
            F.add(sine_positional_encoding(h, w, width).reshape(h * w, width), self.level_embed[lvl])
            for lvl, (h, w) in enumerate(level_shapes)
        ]
        return F.concat(per_level, axis=0)

    def forward(self, feats: MultiScaleFeatures) -> MultiScaleFeatures:
        if not self.layers:
            return feats
        shapes = feats.level_shapes
        pos = self.positional_encoding(shapes)
        ref = token_reference_points(shapes)
        tokens = feats.flatten()
        for layer in self.layers:
            tokens = layer(tokens, pos, ref, shapes)
        return MultiScaleFeatures.from_tokens(tokens, shapes)
