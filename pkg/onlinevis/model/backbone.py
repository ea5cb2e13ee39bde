__package__ = 'onlinevis.model'

from typing import NamedTuple

from ..attention import MultiScaleFeatures
from ..misc.errors import ContractError
from ..tensorcore import Module, Conv2d, Tensor, TensorLike, F, RngState, as_tensor


STEM_CHANNELS = (16, 32, 64)
DETAIL_CHANNELS = STEM_CHANNELS[1]


class BackboneOutput(NamedTuple):
    features: MultiScaleFeatures     # L levels at strides 8, 16, ..., each C channels
    detail: Tensor                   # stride-4 stem activation, DETAIL_CHANNELS×H/4×W/4


class ToyBackbone(Module):
    """
    Small strided conv stem: 3→16 (/2), 16→32 (/4), 32→64 (/8) and one more
    64→64 stride-2 conv per extra level. Each level is projected to C by a 1×1 conv.
    """

    def __init__(self, width: int, levels: int, rng: RngState):
        c1, c2, c3 = STEM_CHANNELS
        self.conv1 = Conv2d(3, c1, 3, rng, stride=2)
        self.conv2 = Conv2d(c1, c2, 3, rng, stride=2)
        self.conv3 = Conv2d(c2, c3, 3, rng, stride=2)
        self.extra = [Conv2d(c3, c3, 3, rng, stride=2) for _ in range(levels - 1)]
        self.proj = [Conv2d(c3, width, 1, rng, padding=0) for _ in range(levels)]

    def forward(self, frame: TensorLike) -> BackboneOutput:
        frame = as_tensor(frame)
        if frame.ndim != 3 or frame.shape[0] != 3:
            raise ContractError(f'Backbone expects a 3×H×W frame, got {frame.shape}')
        _, height, width = frame.shape
        if height % 16 or width % 16:
            raise ContractError(f'Frame size {height}x{width} must be a multiple of 16')

        x = F.reshape(frame, (1,) + frame.shape)
        x = F.relu(self.conv1(x))
        detail = F.relu(self.conv2(x))
        x = F.relu(self.conv3(detail))
        stages = [x]
        for conv in self.extra:
            x = F.relu(conv(x))
            stages.append(x)

        levels = [_unbatch(proj(stage)) for proj, stage in zip(self.proj, stages)]
        return BackboneOutput(MultiScaleFeatures(levels), _unbatch(detail))


def _unbatch(x: Tensor) -> Tensor:
    return F.reshape(x, x.shape[1:])
