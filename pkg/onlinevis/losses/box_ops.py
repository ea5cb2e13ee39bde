__package__ = 'onlinevis.losses'

import numpy as np

from ..tensorcore import Tensor, TensorLike, F, as_tensor


def box_cxcywh_to_xyxy(boxes: TensorLike) -> Tensor:
    boxes = as_tensor(boxes)
    cx, cy, w, h = (boxes[:, i] for i in range(4))
    return F.stack([cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h], axis=1)


def generalized_box_iou(a: TensorLike, b: TensorLike) -> Tensor:
    """Pairwise-aligned GIoU of two M×4 cxcywh box sets, M values in [-1, 1]"""
    a, b = box_cxcywh_to_xyxy(a), box_cxcywh_to_xyxy(b)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])

    inter_w = F.relu(F.minimum(a[:, 2], b[:, 2]) - F.maximum(a[:, 0], b[:, 0]))
    inter_h = F.relu(F.minimum(a[:, 3], b[:, 3]) - F.maximum(a[:, 1], b[:, 1]))
    inter = inter_w * inter_h
    union = area_a + area_b - inter

    hull_w = F.maximum(a[:, 2], b[:, 2]) - F.minimum(a[:, 0], b[:, 0])
    hull_h = F.maximum(a[:, 3], b[:, 3]) - F.minimum(a[:, 1], b[:, 1])
    hull = hull_w * hull_h
    return inter / union - (hull - union) / hull


def cxcywh_to_xyxy_np(boxes: np.ndarray) -> np.ndarray:
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    cx, cy, w, h = boxes.T
    return np.stack([cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h], axis=1)


def generalized_box_iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """All-pairs GIoU for cxcywh boxes, len(a)×len(b)"""
    a, b = cxcywh_to_xyxy_np(a), cxcywh_to_xyxy_np(b)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])

    lt = np.maximum(a[:, None, :2], b[None, :, :2])
    rb = np.minimum(a[:, None, 2:], b[None, :, 2:])
    wh = np.clip(rb - lt, 0, None)
    inter = wh[..., 0] * wh[..., 1]
    union = area_a[:, None] + area_b[None, :] - inter

    lt_hull = np.minimum(a[:, None, :2], b[None, :, :2])
    rb_hull = np.maximum(a[:, None, 2:], b[None, :, 2:])
    hull = np.prod(np.clip(rb_hull - lt_hull, 0, None), axis=-1)
    return inter / union - (hull - union) / hull
