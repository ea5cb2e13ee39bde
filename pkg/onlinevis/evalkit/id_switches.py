__package__ = 'onlinevis.evalkit'

from typing import Dict, List, Optional

from .tracks import Track, mask_iou


CLAIM_IOU = 0.5


def frame_claims(preds: List[Track], gts: List[Track], t: int, min_iou: float=CLAIM_IOU) -> Dict[int, Optional[int]]:
    """GT source -> source of the prediction with the highest mask IoU >= min_iou at frame t (ties to the lower source)"""
    claims: Dict[int, Optional[int]] = {}
    for gt in gts:
        best, best_iou = None, min_iou
        for pred in sorted(preds, key=lambda p: p.source):
            iou = mask_iou(pred.masks[t], gt.masks[t])
            if iou >= best_iou and (best is None or iou > best_iou):
                best, best_iou = pred.source, iou
        claims[gt.source] = best
    return claims


def count_id_switches(preds: List[Track], gts: List[Track], min_iou: float=CLAIM_IOU) -> int:
    """
    Each GT is compared against its most recent claimed frame; unclaimed frames
    (e.g. while fully occluded) are skipped, so losing the id across an
    occlusion still counts.
    """
    if not gts:
        return 0
    num_frames = len(gts[0])
    last_claim: Dict[int, int] = {}
    switches = 0
    for t in range(num_frames):
        for gt_source, claimant in frame_claims(preds, gts, t, min_iou).items():
            if claimant is None:
                continue
            if gt_source in last_claim and last_claim[gt_source] != claimant:
                switches += 1
            last_claim[gt_source] = claimant
    return switches
