__package__ = 'onlinevis.losses'

from dataclasses import dataclass, fields
from typing import Dict, Iterable, Optional, Sequence, Union

import numpy as np

from ..misc.errors import ConfigurationError, ContractError, NumericError
from ..memory import MemoryQueue
from ..tensorcore import Tensor, TensorLike, F, as_tensor
from .box_ops import generalized_box_iou


PROB_EPS = 1e-6
BOX_EPS = 1e-6


@dataclass(frozen=True)
class LossWeights:
    cls: float = 2.0
    box: float = 5.0
    mask: float = 2.0
    tcl: float = 2.0
    match_class: float = 2.0
    match_l1: float = 5.0
    match_giou: float = 2.0

    def __post_init__(self):
        negative = {f.name: getattr(self, f.name) for f in fields(self) if getattr(self, f.name) < 0}
        if negative:
            raise ConfigurationError(f'Loss weights must be >= 0, got {negative}')

    @classmethod
    def from_config(cls, config) -> 'LossWeights':
        return cls(
            cls=config.CLS_WEIGHT, box=config.BOX_WEIGHT, mask=config.MASK_WEIGHT, tcl=config.TCL_WEIGHT,
            match_class=config.MATCH_CLASS_WEIGHT, match_l1=config.MATCH_L1_WEIGHT, match_giou=config.MATCH_GIOU_WEIGHT,
        )


@dataclass
class LossParts:
    cls: Tensor
    box: Tensor
    mask: Tensor
    tcl: Tensor

    NAMES = ('cls', 'box', 'mask', 'tcl')

    def items(self) -> Iterable:
        return ((name, getattr(self, name)) for name in self.NAMES)

    def values(self) -> Dict[str, float]:
        return {name: part.item() for name, part in self.items()}

    @classmethod
    def zeros(cls) -> 'LossParts':
        return cls(*(Tensor(0.0) for _ in cls.NAMES))


def _zero() -> Tensor:
    return Tensor(0.0)


def classification_loss(
    scores: TensorLike,
    targets: np.ndarray,
    num_matched: int,
    alpha: float=0.25,
    gamma: float=2.0,
) -> Tensor:
    """Sigmoid focal loss on probabilities, summed and divided by max(num_matched, 1)"""
    p = F.clip(as_tensor(scores), PROB_EPS, 1 - PROB_EPS)
    t = np.asarray(targets)
    ce = -(F.log(p) * t + F.log(1 - p) * (1 - t))
    p_t = p * t + (1 - p) * (1 - t)
    modulated = ce * F.power(1 - p_t, gamma) if gamma != 0 else ce
    alpha_t = alpha * t + (1 - alpha) * (1 - t)
    return F.sum(modulated * alpha_t) / max(num_matched, 1)


def box_loss(pred: TensorLike, gt: np.ndarray, l1_weight: float=5.0, giou_weight: float=2.0) -> Tensor:
    """Σ l1_weight·|pred - gt|₁ + giou_weight·(1 - GIoU) over M box pairs, divided by max(M, 1)"""
    pred = as_tensor(pred)
    gt = np.asarray(gt).reshape(-1, 4)
    if pred.ndim == 1:
        pred = F.reshape(pred, (1, 4))
    if pred.shape[0] != gt.shape[0]:
        raise ContractError(f'box_loss got {pred.shape[0]} predictions for {gt.shape[0]} targets')
    if len(gt) == 0:
        return _zero()
    if (gt[:, 2:] <= 0).any():
        raise ContractError('box_loss needs target boxes with positive width and height')
    l1 = F.sum(F.abs(pred - gt), axis=1)
    # predicted w/h can underflow to 0 in 32-bit storage
    sized = F.concat([pred[:, :2], F.clip(pred[:, 2:], BOX_EPS)], axis=1)
    giou = generalized_box_iou(sized, gt)
    return F.sum(l1_weight * l1 + giou_weight * (1 - giou)) / max(len(gt), 1)


def dice_loss(logits: TensorLike, targets: np.ndarray) -> Tensor:
    probs = F.sigmoid(logits)
    m = probs.shape[0]
    flat = F.reshape(probs, (m, -1))
    t = np.asarray(targets).reshape(m, -1)
    numerator = 2 * F.sum(flat * t, axis=1) + 1
    denominator = F.sum(flat, axis=1) + t.sum(axis=1) + 1
    return F.mean(1 - numerator / denominator)


def mask_loss(logits: TensorLike, targets: np.ndarray, use_dice: bool=False) -> Tensor:
    """Mean per-pixel binary cross-entropy on logits, plus an optional dice term"""
    logits = as_tensor(logits)
    targets = np.asarray(targets)
    if logits.shape != targets.shape:
        raise ContractError(f'mask_loss shape mismatch: logits {logits.shape}, targets {targets.shape}')
    if logits.size == 0:
        return _zero()
    loss = F.mean(F.bce_with_logits(logits, targets))
    if use_dice:
        loss = loss + dice_loss(logits, targets)
    return loss


def temporal_contrastive_loss(
    queries: Tensor,
    matched: Sequence[int],
    queue: Optional[MemoryQueue],
    tau: float=0.1,
    normalize: bool=True,
) -> Tensor:
    """
    For every matched query i and every memory slot that holds a token of query i:
    -log softmax_j(z_i · m_j / tau) at the positive j, the softmax running over that
    slot's tokens. Memory embeddings are detached copies. Mean over all terms,
    0 without positives.
    """
    if tau <= 0:
        raise ContractError(f'temperature must be > 0, got {tau}')
    matched_set = {int(i) for i in matched}
    if queue is None or queue.is_empty or not matched_set:
        return _zero()

    terms = []
    for slot in queue:
        slot_indices = slot.query_indices
        positives = [i for i in sorted(matched_set) if i in slot_indices]
        if not positives:
            continue
        memory = np.stack([token.raw_query for token in slot.tokens])
        if normalize:
            memory = memory / np.sqrt((memory * memory).sum(axis=1, keepdims=True) + 1e-12)
        current = queries[np.array(positives)]
        if normalize:
            current = F.l2_normalize(current, axis=-1)
        log_probs = F.log_softmax(F.matmul(current, memory.T) / tau, axis=-1)
        columns = np.array([slot_indices.index(i) for i in positives])
        terms.append(log_probs[np.arange(len(positives)), columns])

    if not terms:
        return _zero()
    return -F.mean(F.concat(terms, axis=0))


def joint_loss(parts: Union[LossParts, Sequence[LossParts]], weights: LossWeights=LossWeights()) -> Tensor:
    """λ₁·cls + λ₂·box + λ₃·mask + λ₄·tcl, summed over the frames of a clip"""
    frames = [parts] if isinstance(parts, LossParts) else list(parts)
    total: Tensor = _zero()
    for frame_parts in frames:
        for name, value in frame_parts.items():
            if not np.isfinite(value.data).all():
                raise NumericError(f'Loss part {name} is not finite ({value.item()})', part=name)
            total = total + getattr(weights, name) * value
    return total
