__package__ = 'onlinevis.model'

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..misc.errors import ConfigurationError
from ..tensorcore import Tensor


@dataclass
class ParamGroup:
    params: List[Tensor]
    lr: float
    weight_decay: float = 0.0
    name: str = ''


@dataclass
class AdamW:
    """Adam with weight decay applied directly to the weights, not through the gradient"""
    groups: List[ParamGroup]
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    steps: int = 0
    moments: Dict[int, Tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)

    def __post_init__(self):
        seen = set()
        for group in self.groups:
            if group.lr <= 0:
                raise ConfigurationError(f'Learning rate of group {group.name!r} must be > 0, got {group.lr}')
            for p in group.params:
                if id(p) in seen:
                    raise ConfigurationError(f'Parameter {p.name or p.shape} appears in more than one group')
                seen.add(id(p))

    @property
    def params(self) -> List[Tensor]:
        return [p for group in self.groups for p in group.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        beta1, beta2 = self.betas
        self.steps += 1
        correction1 = 1 - beta1 ** self.steps
        correction2 = 1 - beta2 ** self.steps
        for group in self.groups:
            for p in group.params:
                if p.grad is None:
                    continue
                m, v = self.moments.get(id(p), (np.zeros_like(p.data), np.zeros_like(p.data)))
                m = beta1 * m + (1 - beta1) * p.grad
                v = beta2 * v + (1 - beta2) * p.grad * p.grad
                self.moments[id(p)] = (m, v)
                if group.weight_decay:
                    p.data *= 1 - group.lr * group.weight_decay
                p.data -= (group.lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)).astype(p.data.dtype)


@dataclass
class MultiStepLR:
    optimizer: AdamW
    milestones: Sequence[int]
    gamma: float = 0.1
    last_step: int = 0

    def step(self) -> None:
        self.last_step += 1
        if self.last_step in self.milestones:
            for group in self.optimizer.groups:
                group.lr *= self.gamma

    @classmethod
    def from_fractions(cls, optimizer: AdamW, fractions: Sequence[float], total_iters: int, gamma: float=0.1) -> 'MultiStepLR':
        return cls(optimizer, sorted({max(1, int(round(f * total_iters))) for f in fractions}), gamma)


def clip_grad_norm(params: Sequence[Tensor], max_norm: float) -> float:
    """Rescale all gradients so their global L2 norm is at most max_norm; returns the norm before clipping"""
    grads = [p.grad for p in params if p.grad is not None]
    if not grads:
        return 0.0
    total = float(np.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads)))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-6)
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * scale
    return total


def build_optimizer(model, train_config, preset: str, weight_decay: Optional[float]=None) -> AdamW:
    lr = train_config.learning_rate(preset)
    decay = train_config.WEIGHT_DECAY if weight_decay is None else weight_decay
    backbone = model.backbone.parameters()
    backbone_ids = {id(p) for p in backbone}
    rest = [p for p in model.parameters() if id(p) not in backbone_ids]
    return AdamW(
        groups=[
            ParamGroup(backbone, lr * train_config.BACKBONE_LR_MULT, decay, name='backbone'),
            ParamGroup(rest, lr, decay, name='transformer'),
        ],
        betas=(train_config.BETA1, train_config.BETA2),
    )
