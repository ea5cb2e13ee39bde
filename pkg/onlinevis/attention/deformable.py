__package__ = 'onlinevis.attention'

import math

from typing import Sequence, Tuple, Union

import numpy as np

from ..misc.errors import ContractError
from ..tensorcore import Module, Linear, Tensor, TensorLike, F, RngState, as_tensor
from .features import AttentionConfig, MultiScaleFeatures


def compute_sampling_locations(ref: TensorLike, offsets: TensorLike, level_shapes: Sequence[Tuple[int, int]]) -> Tensor:
    """
    ref: N×2 normalized (x, y), offsets: N×M×L×K×2 in pixels of each level.
    Returns absolute pixel coordinates (x·W_l - 0.5 + Δx, y·H_l - 0.5 + Δy), N×M×L×K×2.
    """
    ref, offsets = as_tensor(ref), as_tensor(offsets)
    scale = np.array([[w, h] for h, w in level_shapes], dtype=np.float64).reshape(1, 1, len(level_shapes), 1, 2)
    base = F.sub(F.mul(F.reshape(ref, (ref.shape[0], 1, 1, 1, 2)), scale), 0.5)
    return F.add(base, offsets)


def circle_offset_bias(heads: int, levels: int, points: int) -> np.ndarray:
    """Head m points along angle 2πm/M; point k sits k+1 pixels out along that direction"""
    thetas = np.arange(heads, dtype=np.float64) * (2.0 * math.pi / heads)
    grid = np.stack([np.cos(thetas), np.sin(thetas)], axis=-1)
    grid = grid / np.abs(grid).max(axis=-1, keepdims=True)
    grid = np.tile(grid[:, None, None, :], (1, levels, points, 1))
    grid *= np.arange(1, points + 1, dtype=np.float64)[None, None, :, None]
    return grid.reshape(-1)


class MSDeformAttn(Module):
    """
    Multi-scale deformable attention: each query attends to K sampled points per
    head and level, placed around its reference point by offsets predicted from
    the query itself.
    """

    def __init__(self, config: AttentionConfig, rng: RngState):
        self.config = config
        c, m, l, k = config.width, config.heads, config.levels, config.points
        self.sampling_offsets = Linear(c, m * l * k * 2, rng, zero_init=True)
        self.sampling_offsets.bias.data[...] = circle_offset_bias(m, l, k)
        self.attention_weights = Linear(c, m * l * k, rng, zero_init=True)
        self.value_proj = Linear(c, c, rng)
        self.output_proj = Linear(c, c, rng)

    def forward(self, query: Tensor, ref: TensorLike, feats: MultiScaleFeatures, return_weights: bool=False) -> Union[Tensor, Tuple[Tensor, Tensor]]:
        cfg = self.config
        n, m, k, dh = query.shape[0], cfg.heads, cfg.points, cfg.head_width
        if len(feats) != cfg.levels:
            raise ContractError(f'deformable attention was built for {cfg.levels} levels, got {len(feats)}')

        offsets = F.reshape(self.sampling_offsets(query), (n, m, cfg.levels, k, 2))
        logits = F.reshape(self.attention_weights(query), (n, m, cfg.levels * k))
        weights = F.reshape(F.softmax(logits, axis=-1), (n, m, cfg.levels, k))
        locations = compute_sampling_locations(ref, offsets, feats.level_shapes)

        value = self.value_proj(feats.flatten())
        out = None
        for lvl, ((h, w), start) in enumerate(zip(feats.level_shapes, feats.level_starts)):
            level_value = F.transpose(F.reshape(value[start:start + h * w], (h, w, m, dh)), (2, 3, 0, 1))    # M×Dh×H×W
            level_loc = F.reshape(F.transpose(locations[:, :, lvl], (1, 0, 2, 3)), (m, n * k, 2))          # M×(N·K)×2
            sampled = F.reshape(F.bilinear_sample_pixels(level_value, level_loc), (m, n, k, dh))
            level_weights = F.reshape(F.transpose(weights[:, :, lvl], (1, 0, 2)), (m, n, k, 1))
            head_out = F.sum(sampled * level_weights, axis=2)                                             # M×N×Dh
            out = head_out if out is None else out + head_out

        out = self.output_proj(F.reshape(F.transpose(out, (1, 0, 2)), (n, cfg.width)))
        return (out, weights) if return_weights else out
