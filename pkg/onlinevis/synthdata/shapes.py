__package__ = 'onlinevis.synthdata'

import math

from dataclasses import dataclass
from enum import IntEnum
from typing import Tuple

import numpy as np

from ..misc.errors import ConfigurationError


class ShapeClass(IntEnum):
    circle = 0
    square = 1
    triangle = 2


@dataclass(frozen=True)
class ShapeSpec:
    """
    One moving shape. Positions are in pixel units with pixel (row i, col j)
    centred at (x=j, y=i); depth 0 is in front.
    """
    shape_class: ShapeClass
    size: float
    color: Tuple[int, int, int]
    position: Tuple[float, float]
    velocity: Tuple[float, float]
    depth: int

    def __post_init__(self):
        if self.size < 4:
            raise ConfigurationError(f'Shape size must be >= 4 pixels, got {self.size}')
        speed = math.hypot(*self.velocity)
        if speed > self.size:
            raise ConfigurationError(f'Shape speed {speed:.2f} exceeds its size {self.size}')

    @property
    def nominal_area(self) -> float:
        return nominal_area(self.shape_class, self.size)


def nominal_area(shape_class: ShapeClass, size: float) -> float:
    if shape_class == ShapeClass.circle:
        return math.pi * (size / 2) ** 2
    if shape_class == ShapeClass.square:
        return float(size * size)
    return size * size / 2


def rasterize_shape(shape_class: ShapeClass, size: float, position: Tuple[float, float], canvas: Tuple[int, int]) -> np.ndarray:
    """
    Exact pixel-centre rasterization, H×W bool:
    circle: (x-cx)² + (y-cy)² <= (size/2)²
    square: cx - size/2 <= x < cx + size/2 (same for y)
    triangle: upward isosceles, apex at cy - size/2, base of width size at cy + size/2
    """
    height, width = canvas
    cx, cy = position
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    half = size / 2

    if shape_class == ShapeClass.circle:
        return (xs - cx) ** 2 + (ys - cy) ** 2 <= half * half
    if shape_class == ShapeClass.square:
        return (xs >= cx - half) & (xs < cx + half) & (ys >= cy - half) & (ys < cy + half)
    if shape_class == ShapeClass.triangle:
        top = cy - half
        depth_below_apex = ys - top
        return (ys >= top) & (ys < cy + half) & (np.abs(xs - cx) <= depth_below_apex / 2)
    raise ConfigurationError(f'Unknown shape class {shape_class!r}')
