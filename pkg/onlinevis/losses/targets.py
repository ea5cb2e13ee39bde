__package__ = 'onlinevis.losses'

from dataclasses import dataclass, field
from typing import List

import numpy as np


@dataclass
class FrameGroundTruth:
    """Visible instances of one frame; masks are soft targets at prediction resolution"""
    instance_ids: np.ndarray        # G, int
    classes: np.ndarray             # G, int
    boxes: np.ndarray               # G×4 normalized cx, cy, w, h
    masks: np.ndarray               # G×h×w in [0, 1]

    def __len__(self) -> int:
        return len(self.instance_ids)

    @classmethod
    def empty(cls, mask_shape=(1, 1)) -> 'FrameGroundTruth':
        return cls(
            instance_ids=np.zeros(0, dtype=np.int64),
            classes=np.zeros(0, dtype=np.int64),
            boxes=np.zeros((0, 4)),
            masks=np.zeros((0,) + tuple(mask_shape)),
        )


@dataclass
class FrameTargets:
    """Supervision for one frame after matching"""
    class_targets: np.ndarray                       # N×K, one-hot rows for matched queries, zero rows otherwise
    queries: np.ndarray                             # M matched query indices, aligned with the rows below
    instance_ids: np.ndarray                        # M
    boxes: np.ndarray                               # M×4
    masks: np.ndarray                               # M×h×w
    new_assignments: List[int] = field(default_factory=list)

    @property
    def num_matched(self) -> int:
        return len(self.queries)
