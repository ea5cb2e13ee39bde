__package__ = 'onlinevis.attention'

import math

import numpy as np

from ..misc.errors import ContractError
from ..tensorcore import get_default_dtype


def _interleave_sin_cos(positions: np.ndarray, channels: int, temperature: float) -> np.ndarray:
    """positions[..., None] / temperature^(2·(i//2)/channels), sin on even channels, cos on odd"""
    index = np.arange(channels)
    dim_t = temperature ** (2 * (index // 2) / channels)
    angles = positions[..., None] / dim_t
    return np.where(index % 2 == 0, np.sin(angles), np.cos(angles))


def sine_positional_encoding(height: int, width: int, channels: int, temperature: float=10000.0) -> np.ndarray:
    """
    Fixed 2D sine/cosine encoding, H×W×C. The first C/2 channels encode the row,
    the last C/2 the column; coordinates are normalized to (0, 2π) at texel centres.
    """
    if channels % 2 != 0:
        raise ContractError(f'sine_positional_encoding needs an even channel count, got {channels}')
    half = channels // 2
    scale = 2 * math.pi
    y_embed = (np.arange(height, dtype=np.float64) + 0.5) / height * scale
    x_embed = (np.arange(width, dtype=np.float64) + 0.5) / width * scale
    pos_y = _interleave_sin_cos(np.broadcast_to(y_embed[:, None], (height, width)), half, temperature)
    pos_x = _interleave_sin_cos(np.broadcast_to(x_embed[None, :], (height, width)), half, temperature)
    return np.concatenate([pos_y, pos_x], axis=-1).astype(get_default_dtype())


def sinusoidal_encoding_1d(positions: np.ndarray, channels: int, temperature: float=10000.0) -> np.ndarray:
    """1D sine/cosine encoding of (possibly fractional) positions, len(positions)×C"""
    positions = np.asarray(positions, dtype=np.float64).reshape(-1)
    return _interleave_sin_cos(positions, channels, temperature).astype(get_default_dtype())
