__package__ = 'onlinevis.model'

from contextlib import nullcontext
from typing import Literal, NamedTuple, Optional, Tuple

import numpy as np

from ..attention import AttentionConfig
from ..config.constants import CONSTANTS
from ..losses import (
    FrameGroundTruth, LossParts, LossWeights, update_matches,
    classification_loss, box_loss, mask_loss, temporal_contrastive_loss,
)
from ..memory import MemoryTokenizer, select_instances
from ..misc.errors import ContractError
from ..propagation import InstanceState, PriorPropagation, PropagationConfig
from ..tensorcore import Module, TensorLike, RngState, no_grad
from .backbone import ToyBackbone
from .encoder import DeformableEncoder
from .decoder import MemoryDecoder
from .heads import FramePrediction, PredictionHeads


class OnlineVISModel(Module):
    """
    Backbone, deformable encoder, memory decoder and prediction heads, driven one
    frame at a time by process_frame. Everything a video carries across frames
    lives in the InstanceState the caller passes in.
    """

    def __init__(self, model_config, loss_config, rng: Optional[RngState]=None):
        rng = rng or RngState(0)
        self.model_config = model_config
        self.loss_config = loss_config
        self.weights = LossWeights.from_config(loss_config)
        self.propagation_config = PropagationConfig.from_model_config(model_config)
        attention = AttentionConfig.from_model_config(model_config)

        width, queries, classes = model_config.WIDTH, model_config.NUM_QUERIES, model_config.NUM_CLASSES
        self.backbone = ToyBackbone(width, model_config.LEVELS, rng.spawn(1))
        self.encoder = DeformableEncoder(attention, model_config.ENC_LAYERS, model_config.FFN_DIM, rng.spawn(2))
        self.propagation = PriorPropagation(width, queries, classes, self.propagation_config, rng.spawn(3))
        self.decoder = MemoryDecoder(attention, model_config.DEC_LAYERS, queries, model_config.FFN_DIM, rng.spawn(4))
        self.heads = PredictionHeads(width, classes, model_config.MASK_DIM, rng.spawn(5))
        self.tokenizer = MemoryTokenizer(width, classes, rng.spawn(6))

    def init_state(self) -> InstanceState:
        return InstanceState.empty(
            history_depth=self.propagation_config.history_depth,
            memory_frames=self.model_config.MEMORY_FRAMES,
            memory_tokens=self.model_config.MEMORY_TOKENS,
        )

    def process_frame(
        self,
        state: InstanceState,
        frame: TensorLike,
        mode: Literal['train', 'infer']='infer',
        gt: Optional[FrameGroundTruth]=None,
        t: Optional[int]=None,
    ) -> Tuple[FramePrediction, InstanceState]:
        t = state.next_frame if t is None else t
        if t != state.next_frame:
            raise ContractError(f'Frames must arrive in order: expected frame {state.next_frame}, got {t}')
        if mode not in ('train', 'infer'):
            raise ContractError(f'Unknown mode {mode!r}')
        if mode == 'train' and gt is None:
            raise ContractError('process_frame(mode="train") needs the frame ground truth')

        with (no_grad() if mode == 'infer' else nullcontext()):
            prediction = self._step(state, frame, mode, gt, t)
        return prediction, state

    def _step(self, state: InstanceState, frame: TensorLike, mode: str, gt: Optional[FrameGroundTruth], t: int) -> FramePrediction:
        config = self.model_config
        backbone_out = self.backbone(frame)
        feats = self.encoder(backbone_out.features)

        if state.q is None:
            q_init, ref = self.propagation.init_queries()
        else:
            q_init, ref = self.propagation.propagate_queries(state), state.ref

        queue = state.queue if config.USE_MEMORY else None
        q = self.decoder(q_init, ref, feats, queue, t)

        c_hat = self.heads.classify(q)
        scores = self.propagation.class_prior(c_hat, state)
        boxes = self.heads.regress_boxes(q, ref)
        mask_logits, _ = self.heads.segment(q, boxes, feats, backbone_out.detail)

        prediction = FramePrediction(frame_index=t, c_hat=c_hat, scores=scores, boxes=boxes, mask_logits=mask_logits, queries=q)
        if mode == 'train':
            prediction.losses, prediction.matched = self.frame_losses(state, prediction, gt)
            prediction.selected = select_instances('train', config.MEMORY_TOKENS, matched=prediction.matched, scores=prediction.confidence)
        else:
            prediction.selected = select_instances('infer', config.MEMORY_TOKENS, scores=prediction.confidence)

        if config.USE_MEMORY:
            tokens = self.tokenizer.make_memory_tokens(q, boxes, scores, prediction.selected, t)
            state.queue.enqueue_frame(tokens, t)

        state.ref = self.propagation.propagate_reference_points(q, ref)
        state.q = q
        state.frame_index = t
        return prediction

    def frame_losses(self, state: InstanceState, prediction: FramePrediction, gt: FrameGroundTruth) -> Tuple[LossParts, np.ndarray]:
        config, loss_config, weights = self.model_config, self.loss_config, self.weights
        cls_scores = prediction.scores if config.CLS_SCORE_SOURCE == 'prior' else prediction.c_hat

        # matching always costs classes on c_hat, the class history never feeds back into assignment
        targets = update_matches(
            state.match_state, gt, prediction.c_hat.data, prediction.boxes.data, config.NUM_CLASSES,
            class_weight=weights.match_class, l1_weight=weights.match_l1, giou_weight=weights.match_giou,
            alpha=loss_config.FOCAL_ALPHA, gamma=loss_config.FOCAL_GAMMA,
        )
        parts = LossParts.zeros()
        parts.cls = classification_loss(cls_scores, targets.class_targets, targets.num_matched, loss_config.FOCAL_ALPHA, loss_config.FOCAL_GAMMA)
        if targets.num_matched:
            parts.box = box_loss(prediction.boxes[targets.queries], targets.boxes)
            parts.mask = mask_loss(prediction.mask_logits[targets.queries], targets.masks, use_dice=loss_config.USE_DICE)
        # memory still holds frames < t here, the current frame is enqueued afterwards
        if loss_config.USE_TCL and config.USE_MEMORY:
            parts.tcl = temporal_contrastive_loss(
                prediction.queries, targets.queries, state.queue, tau=config.TAU, normalize=loss_config.TCL_NORMALIZE,
            )
        return parts, targets.queries


class MergedScores(NamedTuple):
    candidates: np.ndarray          # track ids (query indices), ascending
    class_scores: np.ndarray        # len(candidates)×K, mean over all frames


def merge_video_scores(frame_scores: np.ndarray, top_k: int, first_frames: int=CONSTANTS.MERGE_FIRST_FRAMES) -> MergedScores:
    """
    Candidate tracks are the top_k queries by max confidence within the first
    frames; each candidate's class distribution is its mean over the whole video.
    """
    frame_scores = np.asarray(frame_scores, dtype=np.float64)
    if frame_scores.ndim != 3 or frame_scores.shape[0] == 0:
        raise ContractError(f'merge_video_scores needs a T×N×K array with T >= 1, got shape {frame_scores.shape}')
    num_queries = frame_scores.shape[1]

    early = frame_scores[:min(first_frames, len(frame_scores))]
    confidence = early.max(axis=(0, 2))
    order = np.lexsort((np.arange(num_queries), -confidence))
    candidates = np.sort(order[:min(top_k, num_queries)])
    return MergedScores(candidates, frame_scores[:, candidates].mean(axis=0))
