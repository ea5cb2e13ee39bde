__package__ = 'onlinevis.synthdata'

from .shapes import ShapeClass, ShapeSpec, rasterize_shape, nominal_area                     # noqa
from .video import InstanceTrack, SynthVideo                                                 # noqa
from .generator import (                                                                     # noqa
    VideoSpec, generate_video, generate_video_from_shapes, render_frame, tight_box,
)
from .dataset import write_dataset, read_dataset, read_manifest                              # noqa
