__package__ = 'onlinevis.attention'

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from ..misc.errors import ConfigurationError, ContractError
from ..tensorcore import Tensor, F


@dataclass(frozen=True)
class AttentionConfig:
    width: int          # C
    heads: int          # M
    levels: int         # L
    points: int         # K

    def __post_init__(self):
        if self.width % self.heads != 0:
            raise ConfigurationError(f'Attention width {self.width} is not divisible by {self.heads} heads')
        if self.points < 1 or self.levels < 1 or self.heads < 1:
            raise ConfigurationError(f'Attention needs heads, levels and points >= 1, got M={self.heads} L={self.levels} K={self.points}')

    @property
    def head_width(self) -> int:
        return self.width // self.heads

    @classmethod
    def from_model_config(cls, config) -> 'AttentionConfig':
        return cls(width=config.WIDTH, heads=config.HEADS, levels=config.LEVELS, points=config.POINTS)


class MultiScaleFeatures:
    """Per-level feature maps, each C×H_l×W_l, finest level first"""

    def __init__(self, levels: Sequence[Tensor]):
        levels = list(levels)
        if not levels:
            raise ContractError('MultiScaleFeatures needs at least one level')
        channels = {level.shape[0] for level in levels}
        if len(channels) != 1 or any(level.ndim != 3 for level in levels):
            raise ContractError(f'All levels must be C×H×W with a shared C, got {[level.shape for level in levels]}')
        for finer, coarser in zip(levels, levels[1:]):
            if not (coarser.shape[1] < finer.shape[1] and coarser.shape[2] < finer.shape[2]):
                raise ContractError(f'Level shapes must strictly decrease, got {[level.shape[1:] for level in levels]}')
        self.levels: List[Tensor] = levels

    def __len__(self) -> int:
        return len(self.levels)

    def __getitem__(self, index: int) -> Tensor:
        return self.levels[index]

    @property
    def channels(self) -> int:
        return self.levels[0].shape[0]

    @property
    def level_shapes(self) -> List[Tuple[int, int]]:
        return [(level.shape[1], level.shape[2]) for level in self.levels]

    @property
    def level_starts(self) -> List[int]:
        sizes = [h * w for h, w in self.level_shapes]
        return [0] + list(np.cumsum(sizes)[:-1].astype(int))

    @property
    def num_tokens(self) -> int:
        return sum(h * w for h, w in self.level_shapes)

    def flatten(self) -> Tensor:
        """(Σ H_l·W_l)×C tokens, row-major within each level"""
        c = self.channels
        return F.concat([F.transpose(F.reshape(level, (c, -1))) for level in self.levels], axis=0)

    @classmethod
    def from_tokens(cls, tokens: Tensor, level_shapes: Sequence[Tuple[int, int]]) -> 'MultiScaleFeatures':
        levels, start = [], 0
        for h, w in level_shapes:
            chunk = tokens[start:start + h * w]
            levels.append(F.transpose(F.reshape(chunk, (h, w, tokens.shape[1])), (2, 0, 1)))
            start += h * w
        if start != tokens.shape[0]:
            raise ContractError(f'{tokens.shape[0]} tokens do not match the level shapes {list(level_shapes)}')
        return cls(levels)
