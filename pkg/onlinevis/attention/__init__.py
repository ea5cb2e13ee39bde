__package__ = 'onlinevis.attention'

from .features import AttentionConfig, MultiScaleFeatures                       # noqa
from .position import sine_positional_encoding, sinusoidal_encoding_1d          # noqa
from .multihead import MultiHeadAttention                                       # noqa
from .deformable import MSDeformAttn, compute_sampling_locations, circle_offset_bias     # noqa
