__package__ = 'onlinevis.losses'

from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from ..misc.errors import ContractError
from .box_ops import generalized_box_iou_matrix
from .targets import FrameGroundTruth, FrameTargets


def _assignment_cost(cost: np.ndarray) -> float:
    if cost.shape[1] == 0:
        return 0.0
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum())


def hungarian_match(cost: np.ndarray) -> np.ndarray:
    """
    Optimal one-to-one assignment of the G columns (ground truth) to the Q rows
    (queries) of cost. Among optimal assignments the lexicographically smallest
    (query for gt 0 first, then gt 1, ...) is returned. Result: query per gt.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ContractError(f'hungarian_match needs a Q×G cost matrix, got shape {cost.shape}')
    num_queries, num_gt = cost.shape
    if num_gt == 0:
        return np.zeros(0, dtype=np.int64)
    if num_queries < num_gt:
        raise ContractError(f'hungarian_match needs at least as many queries as ground truths, got {num_queries} < {num_gt}')
    if not np.isfinite(cost).all():
        raise ContractError('hungarian_match needs finite costs')

    rows, cols = linear_sum_assignment(cost)
    optimum = float(cost[rows, cols].sum())
    fallback = np.empty(num_gt, dtype=np.int64)
    fallback[cols] = rows

    tol = 1e-10 * max(float(np.abs(cost).max()), 1.0) * (num_gt + 1)
    assignment = np.empty(num_gt, dtype=np.int64)
    taken = np.zeros(num_queries, dtype=bool)
    fixed = 0.0
    for j in range(num_gt):
        rest = slice(j + 1, num_gt)
        chosen = None
        for q in range(num_queries):
            if taken[q]:
                continue
            partial = fixed + cost[q, j]
            # cheap lower bound before solving the remainder exactly
            free = ~taken
            free[q] = False
            remainder = cost[free][:, rest]
            if remainder.shape[1] and partial + remainder.min(axis=0).sum() > optimum + tol:
                continue
            if partial + _assignment_cost(remainder) <= optimum + tol:
                chosen = q
                break
        if chosen is None:
            return fallback
        assignment[j] = chosen
        taken[chosen] = True
        fixed += cost[chosen, j]
    return assignment


def focal_class_cost(probs: np.ndarray, classes: np.ndarray, alpha: float=0.25, gamma: float=2.0) -> np.ndarray:
    """Q×G classification cost on probabilities, the focal-loss difference used by deformable set matchers"""
    probs = np.asarray(probs, dtype=np.float64)
    neg = (1 - alpha) * (probs ** gamma) * (-np.log(1 - probs + 1e-8))
    pos = alpha * ((1 - probs) ** gamma) * (-np.log(probs + 1e-8))
    return pos[:, classes] - neg[:, classes]


def matching_cost(
    probs: np.ndarray,
    boxes: np.ndarray,
    gt_classes: np.ndarray,
    gt_boxes: np.ndarray,
    class_weight: float=2.0,
    l1_weight: float=5.0,
    giou_weight: float=2.0,
    alpha: float=0.25,
    gamma: float=2.0,
) -> np.ndarray:
    class_cost = focal_class_cost(probs, np.asarray(gt_classes, dtype=np.int64), alpha, gamma)
    l1_cost = cdist(np.asarray(boxes, dtype=np.float64), np.asarray(gt_boxes, dtype=np.float64), metric='cityblock')
    giou_cost = -generalized_box_iou_matrix(boxes, gt_boxes)
    return class_weight * class_cost + l1_weight * l1_cost + giou_weight * giou_cost


@dataclass
class MatchState:
    """Persistent ground-truth id -> query index association of one video"""
    assoc: Dict[int, int] = field(default_factory=dict)
    matcher_calls: int = 0

    def free_queries(self, num_queries: int) -> List[int]:
        used = set(self.assoc.values())
        return [q for q in range(num_queries) if q not in used]

    def assign(self, instance_id: int, query: int) -> None:
        if instance_id in self.assoc:
            raise ContractError(f'Ground truth {instance_id} is already matched to query {self.assoc[instance_id]}')
        if query in self.assoc.values():
            raise ContractError(f'Query {query} is already matched')
        self.assoc[instance_id] = query


def update_matches(
    state: MatchState,
    gt: FrameGroundTruth,
    probs: np.ndarray,
    boxes: np.ndarray,
    num_classes: int,
    class_weight: float=2.0,
    l1_weight: float=5.0,
    giou_weight: float=2.0,
    alpha: float=0.25,
    gamma: float=2.0,
) -> FrameTargets:
    """
    Keep every established pair, run the matcher only for ground truths seen for
    the first time (over the still-free queries), and build this frame's targets.
    """
    num_queries = probs.shape[0]
    ids = [int(i) for i in gt.instance_ids]
    new_rows = [row for row, instance_id in enumerate(ids) if instance_id not in state.assoc]

    new_assignments = []
    if new_rows:
        free = state.free_queries(num_queries)
        if len(free) < len(new_rows):
            raise ContractError(f'{len(new_rows)} new instances but only {len(free)} free queries', hints=('Raise NUM_QUERIES above the instance count',))
        cost = matching_cost(
            probs[free], boxes[free], gt.classes[new_rows], gt.boxes[new_rows],
            class_weight=class_weight, l1_weight=l1_weight, giou_weight=giou_weight, alpha=alpha, gamma=gamma,
        )
        state.matcher_calls += 1
        for row, pick in zip(new_rows, hungarian_match(cost)):
            state.assign(ids[row], free[pick])
            new_assignments.append(free[pick])

    queries = np.array([state.assoc[i] for i in ids], dtype=np.int64)
    class_targets = np.zeros((num_queries, num_classes))
    if len(queries):
        class_targets[queries, gt.classes] = 1.0
    return FrameTargets(
        class_targets=class_targets,
        queries=queries,
        instance_ids=np.asarray(ids, dtype=np.int64),
        boxes=gt.boxes,
        masks=gt.masks,
        new_assignments=new_assignments,
    )
