__package__ = 'onlinevis.config'

import os
import sys

from typing import Dict, List, Literal, Optional

from rich import print
from pydantic import AliasChoices, Field, field_validator

from ..misc.errors import ConfigurationError
from .base_configset import BaseConfigSet
from .constants import CONSTANTS, PRESETS, PAPER_FIXED_KEYS

###################### Config ##########################


class ShellConfig(BaseConfigSet):
    DEBUG: bool                         = Field(default=lambda: '--debug' in sys.argv)

    IS_TTY: bool                        = Field(default=sys.stdout.isatty())
    USE_COLOR: bool                     = Field(default=lambda c: c['IS_TTY'])
    SHOW_PROGRESS: bool                 = Field(default=lambda c: c['IS_TTY'])

    THREADS: int                        = Field(default=1, ge=1, validation_alias=AliasChoices(CONSTANTS.THREADS_ENV, 'THREADS'))

SHELL_CONFIG = ShellConfig()

if not SHELL_CONFIG.USE_COLOR:
    os.environ['NO_COLOR'] = '1'


class StorageConfig(BaseConfigSet):
    OUTPUT_PERMISSIONS: str             = Field(default='644')
    ENFORCE_ATOMIC_WRITES: bool         = Field(default=True)

STORAGE_CONFIG = StorageConfig()


def preset_default(key: str):
    return lambda c: PRESETS[c['PRESET']][key]


class ModelConfig(BaseConfigSet):
    PRESET: Literal['toy', 'paper']     = Field(default='toy')

    WIDTH: int                          = Field(default=preset_default('WIDTH'), ge=2)
    NUM_QUERIES: int                    = Field(default=preset_default('NUM_QUERIES'), ge=1)
    ENC_LAYERS: int                     = Field(default=preset_default('ENC_LAYERS'), ge=0)
    DEC_LAYERS: int                     = Field(default=preset_default('DEC_LAYERS'), ge=1)
    HEADS: int                          = Field(default=preset_default('HEADS'), ge=1)
    LEVELS: int                         = Field(default=preset_default('LEVELS'), ge=1)
    POINTS: int                         = Field(default=preset_default('POINTS'), ge=1)
    FFN_DIM: int                        = Field(default=preset_default('FFN_DIM'), ge=1)
    MEMORY_FRAMES: int                  = Field(default=preset_default('MEMORY_FRAMES'), ge=1)
    MEMORY_TOKENS: int                  = Field(default=preset_default('MEMORY_TOKENS'), ge=1)

    NUM_CLASSES: int                    = Field(default=len(CONSTANTS.CLASS_NAMES), ge=1)
    MASK_DIM: int                       = Field(default=8, ge=1)
    TAU: float                          = Field(default=0.1, gt=0)
    REF_MODE: Literal['offset', 'literal'] = Field(default='offset')
    CLS_SCORE_SOURCE: Literal['prior', 'raw'] = Field(default='prior')
    TOP_K_TRACKS: int                   = Field(default=lambda c: min(10, c['NUM_QUERIES']), ge=1)

    # ablation switches, one per row of the propagation/memory ablation grid
    USE_REF_PROPAGATION: bool           = Field(default=True)
    USE_CLASS_PRIOR: bool               = Field(default=True)
    USE_MEMORY: bool                    = Field(default=True)

    def check_consistency(self) -> None:
        if self.WIDTH % self.HEADS != 0:
            raise ConfigurationError(f'WIDTH={self.WIDTH} is not divisible by HEADS={self.HEADS}')
        if self.WIDTH % 2 != 0:
            raise ConfigurationError(f'WIDTH={self.WIDTH} must be even for the sine positional encoding')
        if self.PRESET == 'paper':
            pinned = {key: getattr(self, key) for key in PAPER_FIXED_KEYS if getattr(self, key) != PRESETS['paper'][key]}
            if pinned:
                raise ConfigurationError(
                    f'The paper preset fixes {", ".join(PAPER_FIXED_KEYS)}, got overrides {pinned}',
                    hints=('Use PRESET=toy to change the model size',),
                )

    @property
    def head_width(self) -> int:
        return self.WIDTH // self.HEADS


class LossConfig(BaseConfigSet):
    CLS_WEIGHT: float                   = Field(default=2.0, ge=0)
    BOX_WEIGHT: float                   = Field(default=5.0, ge=0)
    MASK_WEIGHT: float                  = Field(default=2.0, ge=0)
    TCL_WEIGHT: float                   = Field(default=2.0, ge=0)

    MATCH_CLASS_WEIGHT: float           = Field(default=2.0, ge=0)
    MATCH_L1_WEIGHT: float              = Field(default=5.0, ge=0)
    MATCH_GIOU_WEIGHT: float            = Field(default=2.0, ge=0)

    FOCAL_ALPHA: float                  = Field(default=0.25, ge=0, le=1)
    FOCAL_GAMMA: float                  = Field(default=2.0, ge=0)
    USE_DICE: bool                      = Field(default=False)
    USE_TCL: bool                       = Field(default=True)
    TCL_NORMALIZE: bool                 = Field(default=True)


class TrainConfig(BaseConfigSet):
    ITERS: int                          = Field(default=300, ge=0)
    LR: Optional[float]                 = Field(default=None, gt=0)
    BACKBONE_LR_MULT: float             = Field(default=0.1, gt=0)
    WEIGHT_DECAY: float                 = Field(default=1e-4, ge=0)
    BETA1: float                        = Field(default=0.9, ge=0, lt=1)
    BETA2: float                        = Field(default=0.999, ge=0, lt=1)
    LR_MILESTONES: List[float]          = Field(default=[2 / 3])
    LR_GAMMA: float                     = Field(default=0.1, gt=0)
    GRAD_CLIP_NORM: float               = Field(default=0.1, ge=0)

    MIN_CLIP_FRAMES: int                = Field(default=3, ge=1)
    MAX_CLIP_FRAMES: int                = Field(default=5, ge=1)
    CHECKPOINT_EVERY: int               = Field(default=100, ge=1)
    LOG_EVERY: int                      = Field(default=1, ge=1)
    SEED: int                           = Field(default=0, ge=0)
    PARALLEL_CLIPS: int                 = Field(default=1, ge=1)

    @field_validator('LR_MILESTONES', mode='after')
    @classmethod
    def validate_milestones(cls, milestones: List[float]) -> List[float]:
        if any(not (0 < m < 1) for m in milestones):
            print(f'[red][!] Warning: LR_MILESTONES={milestones} are fractions of ITERS and must lie in (0, 1)[/red]', file=sys.stderr)
            raise ValueError('LR_MILESTONES entries must lie in (0, 1)')
        return sorted(milestones)

    def check_consistency(self) -> None:
        if self.MIN_CLIP_FRAMES > self.MAX_CLIP_FRAMES:
            raise ConfigurationError(f'MIN_CLIP_FRAMES={self.MIN_CLIP_FRAMES} exceeds MAX_CLIP_FRAMES={self.MAX_CLIP_FRAMES}')

    def learning_rate(self, preset: str) -> float:
        return self.LR if self.LR is not None else float(PRESETS[preset]['LR'])


class DataConfig(BaseConfigSet):
    CANVAS: int                         = Field(default=64, ge=16)
    FRAMES: int                         = Field(default=24, ge=1)
    VIDEOS: int                         = Field(default=8, ge=0)
    MIN_INSTANCES: int                  = Field(default=2, ge=1)
    MAX_INSTANCES: int                  = Field(default=6, ge=1)
    MIN_SIZE: int                       = Field(default=8, ge=4)
    MAX_SIZE: int                       = Field(default=16, ge=4)
    MAX_SPEED: float                    = Field(default=3.0, ge=0)
    CROSSING_RATE: float                = Field(default=0.3, ge=0, le=1)
    DATA_SEED: int                      = Field(default=0, ge=0)

    def check_consistency(self) -> None:
        if self.CANVAS % 16 != 0:
            raise ConfigurationError(f'CANVAS={self.CANVAS} must be a multiple of 16')
        if self.MIN_INSTANCES > self.MAX_INSTANCES:
            raise ConfigurationError(f'MIN_INSTANCES={self.MIN_INSTANCES} exceeds MAX_INSTANCES={self.MAX_INSTANCES}')
        if self.MIN_SIZE > self.MAX_SIZE:
            raise ConfigurationError(f'MIN_SIZE={self.MIN_SIZE} exceeds MAX_SIZE={self.MAX_SIZE}')
        if self.MAX_SPEED > self.MIN_SIZE:
            raise ConfigurationError(f'MAX_SPEED={self.MAX_SPEED} exceeds MIN_SIZE={self.MIN_SIZE}; shapes would skip across occluders')
