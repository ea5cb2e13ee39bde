__package__ = 'onlinevis.evalkit'

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ..misc.errors import ContractError


@dataclass
class Track:
    """One predicted or ground-truth instance over a whole video"""
    masks: List[Optional[np.ndarray]]       # per frame H×W bool, None where the instance is absent
    class_id: int
    score: float = 1.0
    source: int = 0                         # query index for predictions, instance id for ground truth
    video: str = ''
    class_scores: List[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.masks)

    def area(self, t: int) -> int:
        mask = self.masks[t]
        return 0 if mask is None else int(np.count_nonzero(mask))


def _intersection_union(a: Optional[np.ndarray], b: Optional[np.ndarray]):
    if a is None and b is None:
        return 0, 0
    if a is None:
        return 0, int(np.count_nonzero(b))
    if b is None:
        return 0, int(np.count_nonzero(a))
    a, b = np.asarray(a, dtype=bool), np.asarray(b, dtype=bool)
    return int(np.count_nonzero(a & b)), int(np.count_nonzero(a | b))


def mask_iou(a: Optional[np.ndarray], b: Optional[np.ndarray]) -> float:
    inter, union = _intersection_union(a, b)
    return inter / union if union else 0.0


def track_iou(a: Track, b: Track) -> float:
    """Σ_t |a_t ∩ b_t| / Σ_t |a_t ∪ b_t|; absent frames are empty masks, 0/0 is 0"""
    if len(a) != len(b):
        raise ContractError(f'track_iou needs tracks of the same length, got {len(a)} and {len(b)}')
    inter = union = 0
    for mask_a, mask_b in zip(a.masks, b.masks):
        i, u = _intersection_union(mask_a, mask_b)
        inter += i
        union += u
    return inter / union if union else 0.0


def iou_matrix(preds: List[Track], gts: List[Track]) -> np.ndarray:
    ious = np.zeros((len(preds), len(gts)))
    for i, pred in enumerate(preds):
        for j, gt in enumerate(gts):
            ious[i, j] = track_iou(pred, gt)
    return ious
