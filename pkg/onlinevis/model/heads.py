__package__ = 'onlinevis.model'

import math

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from ..attention import MultiScaleFeatures
from ..losses import LossParts
from ..tensorcore import Module, Linear, Conv2d, MLP, Tensor, F, RngState
from .backbone import DETAIL_CHANNELS


PRIOR_PROB = 0.01


@dataclass
class FramePrediction:
    frame_index: int
    c_hat: Tensor                   # N×K raw class probabilities
    scores: Tensor                  # N×K class distribution after the temporal prior
    boxes: Tensor                   # N×4 cx, cy, w, h in (0, 1)
    mask_logits: Tensor             # N×H/4×W/4
    queries: Tensor                 # N×C final decoder embeddings
    losses: Optional[LossParts] = None
    matched: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    selected: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def confidence(self) -> np.ndarray:
        return self.scores.data.max(axis=1)


def dynamic_param_count(mask_dim: int) -> int:
    """(D+2)·D + D  +  D·D + D  +  D·1 + 1 for three dynamic 1×1 layers"""
    d = mask_dim
    return (d + 2) * d + d + d * d + d + d + 1


def relative_coords(centers: np.ndarray, height: int, width: int) -> np.ndarray:
    """N×2×(H·W): normalized pixel-centre coordinates minus each query's centre"""
    ys, xs = np.mgrid[0:height, 0:width]
    grid = np.stack([(xs.reshape(-1) + 0.5) / width, (ys.reshape(-1) + 0.5) / height])        # 2×P
    return grid[None, :, :] - centers[:, :, None]


class MaskHead(Module):
    """
    Per-query dynamic convolution: a controller turns each query into the weights
    of three 1×1 layers applied to a shared stride-4 mask feature map plus the
    pixel coordinates relative to the query's box centre.
    """

    def __init__(self, width: int, mask_dim: int, rng: RngState):
        self.mask_dim = mask_dim
        self.detail_proj = Conv2d(DETAIL_CHANNELS, width, 1, rng, padding=0)
        self.mask_proj = Conv2d(width, mask_dim, 1, rng, padding=0)
        self.controller = Linear(width, dynamic_param_count(mask_dim), rng)

    def fuse(self, feats: MultiScaleFeatures, detail: Tensor) -> Tensor:
        """D×H/4×W/4: upsampled encoder levels summed with the stride-4 detail lateral"""
        _, height, width = detail.shape
        fused = self.detail_proj(F.reshape(detail, (1,) + detail.shape))
        for level in feats.levels:
            factor = height // level.shape[1]
            fused = fused + F.upsample_nearest(F.reshape(level, (1,) + level.shape), factor)
        out = self.mask_proj(fused)
        return F.reshape(out, out.shape[1:])

    def split_params(self, params: Tensor):
        d = self.mask_dim
        n = params.shape[0]
        shapes = [(d, d + 2), (d,), (d, d), (d,), (1, d), (1,)]
        pieces, start = [], 0
        for shape in shapes:
            size = int(np.prod(shape))
            pieces.append(F.reshape(params[:, start:start + size], (n,) + shape))
            start += size
        return pieces

    def forward(self, q: Tensor, centers: np.ndarray, mask_feature: Tensor) -> Tensor:
        n = q.shape[0]
        d, height, width = mask_feature.shape
        pixels = height * width
        w1, b1, w2, b2, w3, b3 = self.split_params(self.controller(q))

        shared = F.broadcast_to(F.reshape(mask_feature, (1, d, pixels)), (n, d, pixels))
        x = F.concat([shared, relative_coords(centers, height, width)], axis=1)                 # N×(D+2)×P
        x = F.relu(F.matmul(w1, x) + F.reshape(b1, (n, d, 1)))
        x = F.relu(F.matmul(w2, x) + F.reshape(b2, (n, d, 1)))
        x = F.matmul(w3, x) + F.reshape(b3, (n, 1, 1))
        return F.reshape(x, (n, height, width))


class PredictionHeads(Module):
    def __init__(self, width: int, num_classes: int, mask_dim: int, rng: RngState):
        self.class_embed = Linear(width, num_classes, rng)
        self.class_embed.bias.data[...] = -math.log((1 - PRIOR_PROB) / PRIOR_PROB)
        self.bbox_embed = MLP(width, width, 4, 3, rng, zero_last=True)
        self.mask_head = MaskHead(width, mask_dim, rng)

    def classify(self, q: Tensor) -> Tensor:
        """c_hat = sigmoid(W_cls q)"""
        return F.sigmoid(self.class_embed(q))

    def regress_boxes(self, q: Tensor, ref: Tensor) -> Tensor:
        """centre = sigmoid(Δ_xy + logit(ref)), size = sigmoid(Δ_wh)"""
        delta = self.bbox_embed(q)
        centers = F.sigmoid(delta[:, :2] + F.logit(ref))
        sizes = F.sigmoid(delta[:, 2:])
        return F.concat([centers, sizes], axis=1)

    def segment(self, q: Tensor, boxes: Tensor, feats: MultiScaleFeatures, detail: Tensor) -> Tuple[Tensor, Tensor]:
        mask_feature = self.mask_head.fuse(feats, detail)
        return self.mask_head(q, boxes.data[:, :2], mask_feature), mask_feature
