__package__ = 'onlinevis.evalkit'

from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..config.constants import CONSTANTS
from .tracks import Track, iou_matrix


IOU_THRESHOLDS = np.round(np.linspace(0.5, 0.95, 10), 2)
RECALL_POINTS = np.linspace(0.0, 1.0, 101)


@dataclass
class MatchedDetections:
    """Score-ordered detections of one (video, class) and their match flags per threshold"""
    scores: np.ndarray          # D
    matched: np.ndarray         # T×D bool
    num_gt: int


def greedy_match(ious: np.ndarray, thresholds: Sequence[float]=IOU_THRESHOLDS) -> np.ndarray:
    """
    COCO matching: detections in the given order each take the unmatched ground
    truth of highest IoU, provided it reaches the threshold. Returns T×D flags.
    """
    num_dt, num_gt = ious.shape
    matched = np.zeros((len(thresholds), num_dt), dtype=bool)
    for ti, threshold in enumerate(thresholds):
        taken = np.zeros(num_gt, dtype=bool)
        for d in range(num_dt):
            best, best_iou = -1, min(float(threshold), 1 - 1e-10)
            for g in range(num_gt):
                if taken[g] or ious[d, g] < best_iou:
                    continue
                best, best_iou = g, ious[d, g]
            if best >= 0:
                taken[best] = True
                matched[ti, d] = True
    return matched


def match_video_class(preds: List[Track], gts: List[Track], max_dets: int, thresholds: Sequence[float]=IOU_THRESHOLDS) -> MatchedDetections:
    order = np.argsort([-p.score for p in preds], kind='mergesort')[:max_dets]
    preds = [preds[i] for i in order]
    ious = iou_matrix(preds, gts)
    return MatchedDetections(
        scores=np.array([p.score for p in preds], dtype=np.float64),
        matched=greedy_match(ious, thresholds),
        num_gt=len(gts),
    )


def interpolated_precision(tp: np.ndarray, num_gt: int) -> Tuple[float, float]:
    """101-point interpolated AP and final recall of one score-ordered tp sequence"""
    if num_gt == 0:
        return 0.0, 0.0
    if tp.size == 0:
        return 0.0, 0.0
    tp_sum = np.cumsum(tp, dtype=np.float64)
    fp_sum = np.cumsum(~tp, dtype=np.float64)
    recall = tp_sum / num_gt
    precision = tp_sum / (tp_sum + fp_sum + np.spacing(1))
    # monotone envelope from the right
    precision = np.maximum.accumulate(precision[::-1])[::-1]
    inds = np.searchsorted(recall, RECALL_POINTS, side='left')
    q = np.array([precision[i] if i < len(precision) else 0.0 for i in inds])
    return float(q.mean()), float(recall[-1])


def accumulate(groups: List[MatchedDetections], threshold_index: int, max_dets: Optional[int]=None) -> Tuple[float, float]:
    scores, flags, num_gt = [], [], 0
    for group in groups:
        keep = slice(None) if max_dets is None else slice(0, max_dets)
        scores.append(group.scores[keep])
        flags.append(group.matched[threshold_index, keep])
        num_gt += group.num_gt
    if not scores:
        return 0.0, 0.0
    all_scores = np.concatenate(scores)
    all_flags = np.concatenate(flags)
    order = np.argsort(-all_scores, kind='mergesort')
    return interpolated_precision(all_flags[order], num_gt)


def _group(tracks: Mapping[str, List[Track]]) -> Dict[Tuple[str, int], List[Track]]:
    grouped: Dict[Tuple[str, int], List[Track]] = defaultdict(list)
    for video, video_tracks in tracks.items():
        for track in video_tracks:
            grouped[(video, int(track.class_id))].append(track)
    return grouped


def evaluate(
    preds: Mapping[str, List[Track]],
    gts: Mapping[str, List[Track]],
    thresholds: Sequence[float]=IOU_THRESHOLDS,
    max_dets: Sequence[int]=CONSTANTS.MAX_DETS,
) -> Dict[str, object]:
    """
    Video AP/AR over per-video track lists keyed by video name. Classes without
    any ground truth are left out of every mean.
    """
    thresholds = [float(t) for t in thresholds]
    pred_groups, gt_groups = _group(preds), _group(gts)
    classes = sorted({cls for (_, cls) in gt_groups})
    videos = sorted(set(gts) | set(preds))
    ap_max_dets = max(max_dets)

    per_class: Dict[int, Dict[str, float]] = {}
    ap_table = np.zeros((len(thresholds), len(classes)))
    recall_tables = {n: np.zeros((len(thresholds), len(classes))) for n in max_dets}
    for ci, cls in enumerate(classes):
        groups = [
            match_video_class(pred_groups.get((video, cls), []), gt_groups.get((video, cls), []), ap_max_dets, thresholds)
            for video in videos
        ]
        for ti in range(len(thresholds)):
            ap_table[ti, ci], _ = accumulate(groups, ti)
            for n in max_dets:
                _, recall_tables[n][ti, ci] = accumulate(groups, ti, max_dets=n)
        per_class[cls] = _summary(ap_table[:, ci:ci + 1], {n: table[:, ci:ci + 1] for n, table in recall_tables.items()}, thresholds)

    overall = _summary(ap_table, recall_tables, thresholds)
    per_threshold = {
        f'{t:.2f}': {'AP': _mean(ap_table[ti]), **{f'AR@{n}': _mean(table[ti]) for n, table in recall_tables.items()}}
        for ti, t in enumerate(thresholds)
    }
    return {
        'overall': overall,
        'per_class': {str(cls): values for cls, values in per_class.items()},
        'per_threshold': per_threshold,
        'num_classes': len(classes),
    }


def _mean(values: np.ndarray) -> float:
    return float(np.mean(values)) if np.size(values) else 0.0


def _at(ap_table: np.ndarray, thresholds: List[float], value: float) -> float:
    matches = [i for i, t in enumerate(thresholds) if abs(t - value) < 1e-9]
    return _mean(ap_table[matches[0]]) if matches else 0.0


def _summary(ap_table: np.ndarray, recall_tables: Dict[int, np.ndarray], thresholds: List[float]) -> Dict[str, float]:
    summary = {
        'AP': _mean(ap_table),
        'AP50': _at(ap_table, thresholds, 0.5),
        'AP75': _at(ap_table, thresholds, 0.75),
    }
    for n, table in recall_tables.items():
        if n != max(recall_tables):
            summary[f'AR@{n}'] = _mean(table)
    return summary
