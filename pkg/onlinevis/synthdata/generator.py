__package__ = 'onlinevis.synthdata'

import math

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..config.constants import CONSTANTS
from ..misc.errors import ConfigurationError
from ..tensorcore.rng import RngState
from .shapes import ShapeClass, ShapeSpec, nominal_area, rasterize_shape
from .video import InstanceTrack, SynthVideo


@dataclass(frozen=True)
class VideoSpec:
    canvas: int = 64
    frames: int = 24
    min_instances: int = 2
    max_instances: int = 6
    min_size: int = 8
    max_size: int = 16
    max_speed: float = 3.0
    crossing_rate: float = 0.3

    @classmethod
    def from_config(cls, config) -> 'VideoSpec':
        return cls(
            canvas=config.CANVAS, frames=config.FRAMES,
            min_instances=config.MIN_INSTANCES, max_instances=config.MAX_INSTANCES,
            min_size=config.MIN_SIZE, max_size=config.MAX_SIZE,
            max_speed=config.MAX_SPEED, crossing_rate=config.CROSSING_RATE,
        )

    def check_feasible(self) -> None:
        if self.canvas % 16 != 0:
            raise ConfigurationError(f'Canvas {self.canvas} must be a multiple of 16')
        if self.min_instances > self.max_instances or self.min_size > self.max_size:
            raise ConfigurationError(f'Empty instance or size range: instances {self.min_instances}..{self.max_instances}, sizes {self.min_size}..{self.max_size}')
        if self.max_speed > self.min_size:
            raise ConfigurationError(f'max speed {self.max_speed} exceeds the smallest shape size {self.min_size}')
        worst_area = self.max_instances * nominal_area(ShapeClass.square, self.max_size)
        budget = CONSTANTS.MAX_PACKING_FRACTION * self.canvas * self.canvas
        if worst_area > budget:
            raise ConfigurationError(
                f'{self.max_instances} shapes of size {self.max_size} can cover {worst_area:.0f} px, '
                f'more than {CONSTANTS.MAX_PACKING_FRACTION:.0%} of the {self.canvas}x{self.canvas} canvas',
                hints=('Lower --shapes or the maximum size, or use a bigger --canvas',),
            )


def reflect(position: float, low: float, high: float) -> float:
    """Fold an unbounded 1D trajectory back into [low, high] as if it bounced off both ends"""
    span = high - low
    if span <= 0:
        return low
    u = (position - low) % (2 * span)
    return low + (u if u <= span else 2 * span - u)


def position_at(shape: ShapeSpec, t: int, canvas: int) -> Tuple[float, float]:
    half = shape.size / 2
    low, high = half - 0.5, canvas - half - 0.5
    return (
        reflect(shape.position[0] + shape.velocity[0] * t, low, high),
        reflect(shape.position[1] + shape.velocity[1] * t, low, high),
    )


def render_frame(shapes: Sequence[ShapeSpec], t: int, canvas: int) -> Tuple[np.ndarray, np.ndarray, List[np.ndarray]]:
    """RGB frame, label map and each shape's unoccluded mask at time t; shape i gets label i+1"""
    image = np.zeros((canvas, canvas, 3), dtype=np.uint8)
    labels = np.zeros((canvas, canvas), dtype=np.uint16)
    full_masks = [rasterize_shape(s.shape_class, s.size, position_at(s, t, canvas), (canvas, canvas)) for s in shapes]
    # back to front, deepest first; ties paint the lower index last
    for i in sorted(range(len(shapes)), key=lambda i: (-shapes[i].depth, -i)):
        image[full_masks[i]] = shapes[i].color
        labels[full_masks[i]] = i + 1
    return image, labels, full_masks


def tight_box(mask: np.ndarray) -> List[float]:
    """Normalized cx, cy, w, h of the pixels set in mask; pixel j spans [j, j+1)"""
    height, width = mask.shape
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    x0, x1 = cols[0], cols[-1] + 1
    y0, y1 = rows[0], rows[-1] + 1
    return [(x0 + x1) / 2 / width, (y0 + y1) / 2 / height, (x1 - x0) / width, (y1 - y0) / height]


def generate_video_from_shapes(shapes: Sequence[ShapeSpec], canvas: int, frames: int, name: str='video') -> SynthVideo:
    if canvas % 16 != 0:
        raise ConfigurationError(f'Canvas {canvas} must be a multiple of 16')
    total_area = sum(s.nominal_area for s in shapes)
    if total_area > CONSTANTS.MAX_PACKING_FRACTION * canvas * canvas:
        raise ConfigurationError(f'Shapes cover {total_area:.0f} px, more than {CONSTANTS.MAX_PACKING_FRACTION:.0%} of the canvas')

    images = np.zeros((frames, canvas, canvas, 3), dtype=np.uint8)
    label_maps = np.zeros((frames, canvas, canvas), dtype=np.uint16)
    tracks = [InstanceTrack(instance_id=i + 1, class_id=int(s.shape_class), boxes=[], visibility=[]) for i, s in enumerate(shapes)]

    for t in range(frames):
        images[t], label_maps[t], full_masks = render_frame(shapes, t, canvas)
        for i, track in enumerate(tracks):
            visible = label_maps[t] == track.instance_id
            unoccluded = int(full_masks[i].sum())
            visibility = float(visible.sum()) / unoccluded if unoccluded else 0.0
            track.visibility.append(visibility)
            track.boxes.append(tight_box(visible) if visibility >= CONSTANTS.INVISIBLE_BELOW else None)

    return SynthVideo(name=name, frames=images, labels=label_maps, instances=tracks)


def sample_shapes(spec: VideoSpec, rng: RngState) -> List[ShapeSpec]:
    count = rng.integers(spec.min_instances, spec.max_instances + 1)
    depths = rng.permutation(count)
    centre = (spec.canvas - 1) / 2
    shapes = []
    for i in range(count):
        size = float(rng.integers(spec.min_size, spec.max_size + 1))
        half = size / 2
        x = float(rng.uniform(half, spec.canvas - half - 1))
        y = float(rng.uniform(half, spec.canvas - half - 1))
        speed = float(rng.uniform(0.0, spec.max_speed))
        if rng.uniform() < spec.crossing_rate:
            angle = math.atan2(centre - y, centre - x)
        else:
            angle = float(rng.uniform(0.0, 2 * math.pi))
        color = tuple(int(c) for c in rng.integers(64, 256, shape=3))
        shapes.append(ShapeSpec(
            shape_class=ShapeClass(rng.integers(0, len(ShapeClass))),
            size=size,
            color=color,
            position=(x, y),
            velocity=(speed * math.cos(angle), speed * math.sin(angle)),
            depth=int(depths[i]),
        ))
    return shapes


def generate_video(spec: VideoSpec, seed: int, index: int=0, name: Optional[str]=None) -> SynthVideo:
    """Deterministic per (spec, seed, index)"""
    spec.check_feasible()
    rng = RngState(seed, key=(index,))
    shapes = sample_shapes(spec, rng)
    return generate_video_from_shapes(shapes, spec.canvas, spec.frames, name=name or f'video_{index:04d}')
