__package__ = 'onlinevis.propagation'

from typing import Optional, Tuple

import numpy as np

from ..misc.errors import ContractError
from ..tensorcore import Module, Linear, Tensor, TensorLike, F, RngState, parameter, as_tensor
from .state import InstanceState, PropagationConfig


REF_EPS = 1e-6


class PriorPropagation(Module):
    """
    Carries instance queries, reference points and class scores from one frame
    to the next. Query index i is the track id of whatever instance it follows.
    """

    def __init__(self, width: int, num_queries: int, num_classes: int, config: PropagationConfig, rng: RngState):
        self.config = config
        self.query_embed = parameter(rng.normal((num_queries, width)))
        self.ref_proj = Linear(width, 2, rng)
        # temporal map over the class history, zero start gives uniform weights
        self.temporal_weight = parameter(np.zeros((config.history_depth, config.history_depth)))
        self.temporal_bias = parameter(np.zeros(config.history_depth))

    def init_queries(self) -> Tuple[Tensor, Tensor]:
        q0 = self.query_embed
        return q0, F.sigmoid(self.ref_proj(q0))

    def propagate_queries(self, state: InstanceState) -> Tensor:
        if state.q is None:
            raise ContractError('propagate_queries needs the state of a processed frame')
        return state.q

    def propagate_reference_points(self, q: Tensor, ref_prev: TensorLike, mode: Optional[str]=None) -> Tensor:
        mode = mode or self.config.ref_mode
        ref_prev = as_tensor(ref_prev)
        delta = self.ref_proj(q)
        if not self.config.use_ref_propagation:
            ref = F.sigmoid(delta)
        elif mode == 'offset':
            ref = F.sigmoid(delta + F.logit(ref_prev, REF_EPS))
        elif mode == 'literal':
            ref = F.sigmoid(F.sigmoid(delta) * ref_prev)
        else:
            raise ContractError(f'Unknown reference point mode {mode!r}')
        return F.clip(ref, REF_EPS, 1 - REF_EPS)

    def class_prior(self, c_hat: Tensor, state: InstanceState, record: bool=True) -> Tensor:
        """
        c = c_hat ⊙ prior, where prior is a per-class convex combination of the
        stored history rows weighted by softmax_t(sigmoid(T·H + b)). With no
        history c = c_hat. The detached result is appended to the history.
        """
        history = list(state.class_history)
        if not history or not self.config.use_class_prior:
            c = c_hat
        else:
            h = len(history)
            stacked = np.stack(history)                                  # h×N×K
            flat = stacked.reshape(h, -1)
            mixed = F.matmul(self.temporal_weight[:h, :h], flat) + F.reshape(self.temporal_bias[:h], (h, 1))
            weights = F.softmax(F.sigmoid(mixed), axis=0)
            prior = F.reshape(F.sum(weights * flat, axis=0), c_hat.shape)
            c = c_hat * prior
        if record:
            state.class_history.append(c.data.copy())
        return c
