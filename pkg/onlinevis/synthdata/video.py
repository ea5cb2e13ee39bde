__package__ = 'onlinevis.synthdata'

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from ..config.constants import CONSTANTS
from ..losses.targets import FrameGroundTruth


@dataclass
class InstanceTrack:
    """Ground truth of one instance across the video"""
    instance_id: int                                # label-map value, >= 1
    class_id: int
    boxes: List[Optional[List[float]]]              # per frame cx, cy, w, h normalized, None while invisible
    visibility: List[float]                         # per frame visible / unoccluded pixels

    def to_dict(self) -> dict:
        return {
            'instance_id': self.instance_id,
            'class_id': self.class_id,
            'boxes': self.boxes,
            'visibility': self.visibility,
        }

    @classmethod
    def from_dict(cls, info: dict) -> 'InstanceTrack':
        return cls(
            instance_id=int(info['instance_id']),
            class_id=int(info['class_id']),
            boxes=[None if box is None else [float(v) for v in box] for box in info['boxes']],
            visibility=[float(v) for v in info['visibility']],
        )

    def is_visible(self, t: int) -> bool:
        return self.boxes[t] is not None


@dataclass
class SynthVideo:
    name: str
    frames: np.ndarray                              # T×H×W×3 u8
    labels: np.ndarray                              # T×H×W u16, 0 = background
    instances: List[InstanceTrack] = field(default_factory=list)

    def __len__(self) -> int:
        return int(self.frames.shape[0])

    @property
    def canvas(self) -> tuple:
        return tuple(self.frames.shape[1:3])

    def frame_tensor(self, t: int) -> np.ndarray:
        """3×H×W float in [0, 1]"""
        return self.frames[t].transpose(2, 0, 1).astype(np.float64) / 255.0

    def annotations(self) -> Dict[str, object]:
        return {
            'name': self.name,
            'num_frames': len(self),
            'classes': list(CONSTANTS.CLASS_NAMES),
            'instances': [instance.to_dict() for instance in self.instances],
        }

    def instance_mask(self, instance_id: int, t: int) -> np.ndarray:
        return self.labels[t] == instance_id

    def frame_ground_truth(self, t: int, stride: int=4) -> FrameGroundTruth:
        """Visible instances at frame t, masks area-averaged down to 1/stride resolution"""
        height, width = self.canvas
        visible = [inst for inst in self.instances if inst.is_visible(t)]
        masks = np.zeros((len(visible), height // stride, width // stride))
        for row, inst in enumerate(visible):
            full = self.labels[t] == inst.instance_id
            masks[row] = full.reshape(height // stride, stride, width // stride, stride).mean(axis=(1, 3))
        return FrameGroundTruth(
            instance_ids=np.array([inst.instance_id for inst in visible], dtype=np.int64),
            classes=np.array([inst.class_id for inst in visible], dtype=np.int64),
            boxes=np.array([inst.boxes[t] for inst in visible], dtype=np.float64).reshape(-1, 4),
            masks=masks,
        )
