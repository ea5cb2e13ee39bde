__package__ = 'onlinevis.evalkit'

from .tracks import Track, track_iou, mask_iou, iou_matrix                                  # noqa
from .rle import rle_encode, rle_decode                                                     # noqa
from .metrics import IOU_THRESHOLDS, evaluate, greedy_match, interpolated_precision         # noqa
from .id_switches import count_id_switches, frame_claims                                    # noqa
from .io import gt_tracks_from_video, gt_tracks_from_dataset, load_tracks_json, tracks_from_json     # noqa
