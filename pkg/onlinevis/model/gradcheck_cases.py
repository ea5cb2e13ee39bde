__package__ = 'onlinevis.model'

"""
Gradient-check cases for the composite layers and losses. Importing this module
registers them next to the primitive op cases of tensorcore.gradcheck.
"""

from typing import List, Sequence

import numpy as np

from ..attention import AttentionConfig, MultiHeadAttention, MSDeformAttn, MultiScaleFeatures
from ..config.common import ModelConfig, LossConfig
from ..losses import FrameGroundTruth, LossParts, classification_loss, box_loss, mask_loss, temporal_contrastive_loss, joint_loss
from ..memory import MemoryCrossAttention, MemoryQueue, MemoryToken
from ..propagation import InstanceState, PriorPropagation, PropagationConfig
from ..synthdata import ShapeClass, ShapeSpec, generate_video_from_shapes
from ..tensorcore import Module, Tensor, F, RngState, parameter
from ..tensorcore.gradcheck import GradcheckCase, register_gradcheck
from .decoder import DecoderLayer
from .encoder import EncoderLayer, token_reference_points
from .network import OnlineVISModel


WIDTH, HEADS, LEVELS, POINTS = 8, 2, 2, 2
LEVEL_SHAPES = [(4, 4), (2, 2)]


def _attention_config() -> AttentionConfig:
    return AttentionConfig(width=WIDTH, heads=HEADS, levels=LEVELS, points=POINTS)


def _jitter(module: Module, rng: RngState, scale: float=0.1) -> List[Tensor]:
    """Move every parameter off its (often zero) initial value so no gradient path is trivially flat"""
    params = module.parameters()
    for p in params:
        p.data = p.data + rng.normal(p.shape, scale=scale).astype(p.data.dtype)
    return params


def _levels(rng: RngState) -> List[Tensor]:
    return [parameter(rng.normal((WIDTH, h, w))) for h, w in LEVEL_SHAPES]


def _scalar(rng: RngState, shape: Sequence[int]):
    weights = rng.normal(tuple(shape))
    return lambda out: F.sum(F.mul(out, weights))


def _memory_queue(rng: RngState, frames: Sequence[int], indices: Sequence[Sequence[int]], trainable: bool=True) -> MemoryQueue:
    queue = MemoryQueue(max_frames=len(frames), max_tokens=max(len(i) for i in indices))
    for frame, slot_indices in zip(frames, indices):
        tokens = [
            MemoryToken(
                embedding=parameter(rng.normal((WIDTH,))) if trainable else Tensor(rng.normal((WIDTH,))),
                query_index=int(i),
                frame=frame,
                raw_query=rng.normal((WIDTH,)),
            )
            for i in slot_indices
        ]
        queue.enqueue_frame(tokens, frame)
    return queue


@register_gradcheck('multi_head_attention')
def multi_head_attention_case(rng: RngState) -> GradcheckCase:
    attn = MultiHeadAttention(WIDTH, HEADS, rng.spawn(1))
    queries, keys, pos = parameter(rng.normal((4, WIDTH))), parameter(rng.normal((5, WIDTH))), rng.normal((5, WIDTH))
    reduce = _scalar(rng, (4, WIDTH))
    return GradcheckCase(lambda *_: reduce(attn(queries, keys, key_pos=pos)), [queries, keys, *attn.parameters()])


@register_gradcheck('ms_deform_attn')
def ms_deform_attn_case(rng: RngState) -> GradcheckCase:
    attn = MSDeformAttn(_attention_config(), rng.spawn(1))
    params = _jitter(attn, rng.spawn(2))
    levels = _levels(rng)
    feats = MultiScaleFeatures(levels)
    query = parameter(rng.normal((3, WIDTH)))
    ref = parameter(rng.uniform(0.15, 0.85, (3, 2)))
    reduce = _scalar(rng, (3, WIDTH))
    return GradcheckCase(lambda *_: reduce(attn(query, ref, feats)), [query, ref, *levels, *params])


@register_gradcheck('class_prior')
def class_prior_case(rng: RngState) -> GradcheckCase:
    queries, classes, depth = 4, 3, 3
    prior = PriorPropagation(WIDTH, queries, classes, PropagationConfig(history_depth=depth), rng.spawn(1))
    _jitter(prior, rng.spawn(2), scale=0.5)
    state = InstanceState.empty(history_depth=depth, memory_frames=2, memory_tokens=2)
    for _ in range(depth - 1):
        state.class_history.append(rng.uniform(0.05, 0.95, (queries, classes)))
    c_hat = parameter(rng.uniform(0.05, 0.95, (queries, classes)))
    reduce = _scalar(rng, (queries, classes))
    return GradcheckCase(
        lambda *_: reduce(prior.class_prior(c_hat, state, record=False)),
        [c_hat, prior.temporal_weight, prior.temporal_bias],
    )


@register_gradcheck('memory_cross_attention')
def memory_cross_attention_case(rng: RngState) -> GradcheckCase:
    attn = MemoryCrossAttention(WIDTH, HEADS, 4, rng.spawn(1))
    params = _jitter(attn, rng.spawn(2), scale=0.05)
    queue = _memory_queue(rng, frames=[0, 1], indices=[[0, 2], [1, 2, 3]])
    embeddings = [token.embedding for slot in queue for token in slot.tokens]
    q = parameter(rng.normal((4, WIDTH)))
    reduce = _scalar(rng, (4, WIDTH))
    return GradcheckCase(lambda *_: reduce(attn(q, queue, 2)), [q, *embeddings, *params])


@register_gradcheck('classification_loss')
def classification_loss_case(rng: RngState) -> GradcheckCase:
    scores = parameter(rng.uniform(0.05, 0.95, (6, 3)))
    targets = np.zeros((6, 3))
    targets[1, 0] = targets[4, 2] = 1.0
    return GradcheckCase(lambda s: classification_loss(s, targets, num_matched=2), [scores])


def _random_boxes(rng: RngState, count: int) -> np.ndarray:
    return np.concatenate([rng.uniform(0.3, 0.7, (count, 2)), rng.uniform(0.1, 0.4, (count, 2))], axis=1)


@register_gradcheck('box_loss')
def box_loss_case(rng: RngState) -> GradcheckCase:
    pred = parameter(_random_boxes(rng, 4))
    gt = _random_boxes(rng, 4)
    return GradcheckCase(lambda p: box_loss(p, gt), [pred])


@register_gradcheck('mask_loss')
def mask_loss_case(rng: RngState) -> GradcheckCase:
    logits = parameter(rng.normal((2, 4, 4), scale=2.0))
    targets = rng.uniform(0.0, 1.0, (2, 4, 4))
    return GradcheckCase(lambda x: mask_loss(x, targets, use_dice=True), [logits])


@register_gradcheck('temporal_contrastive_loss')
def temporal_contrastive_loss_case(rng: RngState) -> GradcheckCase:
    queue = _memory_queue(rng, frames=[0, 1], indices=[[0, 1, 2], [0, 2, 3]], trainable=False)
    queries = parameter(rng.normal((5, WIDTH)))
    return GradcheckCase(lambda q: temporal_contrastive_loss(q, [0, 2], queue, tau=0.1), [queries])


@register_gradcheck('encoder_layer')
def encoder_layer_case(rng: RngState) -> GradcheckCase:
    layer = EncoderLayer(_attention_config(), 16, rng.spawn(1))
    params = _jitter(layer, rng.spawn(2), scale=0.05)
    num_tokens = sum(h * w for h, w in LEVEL_SHAPES)
    tokens = parameter(rng.normal((num_tokens, WIDTH)))
    pos = rng.normal((num_tokens, WIDTH), scale=0.1)
    ref = token_reference_points(LEVEL_SHAPES)
    reduce = _scalar(rng, (num_tokens, WIDTH))
    return GradcheckCase(lambda *_: reduce(layer(tokens, pos, ref, LEVEL_SHAPES)), [tokens, *params])


@register_gradcheck('decoder_layer')
def decoder_layer_case(rng: RngState) -> GradcheckCase:
    num_queries = 3
    layer = DecoderLayer(_attention_config(), num_queries, 16, rng.spawn(1))
    params = _jitter(layer, rng.spawn(2), scale=0.05)
    levels = _levels(rng)
    feats = MultiScaleFeatures(levels)
    queue = _memory_queue(rng, frames=[0], indices=[[0, 2]])
    q = parameter(rng.normal((num_queries, WIDTH)))
    query_pos = parameter(rng.normal((num_queries, WIDTH), scale=0.1))
    ref = rng.uniform(0.15, 0.85, (num_queries, 2))
    reduce = _scalar(rng, (num_queries, WIDTH))
    return GradcheckCase(lambda *_: reduce(layer(q, query_pos, ref, feats, queue, 1)), [q, query_pos, *levels, *params])


REDUCED_MODEL = dict(
    PRESET='toy', WIDTH=8, NUM_QUERIES=4, ENC_LAYERS=1, DEC_LAYERS=1, HEADS=2, LEVELS=2, POINTS=2,
    FFN_DIM=16, MEMORY_FRAMES=2, MEMORY_TOKENS=2, MASK_DIM=4, TOP_K_TRACKS=4,
)
REDUCED_CANVAS = 16
CLIP_FRAMES = 3


def reduced_clip(rng: RngState):
    """Two shapes on a 16×16 canvas for 3 frames, pixels jittered so no activation sits on a kink"""
    shapes = [
        ShapeSpec(ShapeClass.square, 6.0, (200, 80, 80), (4.5, 5.5), (1.0, 0.5), depth=0),
        ShapeSpec(ShapeClass.circle, 6.0, (80, 200, 120), (10.5, 9.5), (-1.0, 0.0), depth=1),
    ]
    video = generate_video_from_shapes(shapes, REDUCED_CANVAS, CLIP_FRAMES, name='gradcheck')
    frames = [video.frame_tensor(t) + rng.normal((3, REDUCED_CANVAS, REDUCED_CANVAS), scale=0.05) for t in range(CLIP_FRAMES)]
    gts: List[FrameGroundTruth] = [video.frame_ground_truth(t) for t in range(CLIP_FRAMES)]
    return frames, gts


@register_gradcheck('joint_loss')
def joint_loss_case(rng: RngState) -> GradcheckCase:
    model = OnlineVISModel(ModelConfig(**REDUCED_MODEL), LossConfig(), rng.spawn(1))
    params = _jitter(model, rng.spawn(2), scale=0.02)
    frames, gts = reduced_clip(rng.spawn(3))

    def clip_loss(*_):
        state = model.init_state()
        parts: List[LossParts] = []
        for t, (frame, gt) in enumerate(zip(frames, gts)):
            prediction, state = model.process_frame(state, frame, mode='train', gt=gt, t=t)
            parts.append(prediction.losses)
        return joint_loss(parts, model.weights)

    return GradcheckCase(clip_loss, params, eps=1e-5, floor=1e-6, max_checks=2)
