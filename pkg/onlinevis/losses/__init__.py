__package__ = 'onlinevis.losses'

from .targets import FrameGroundTruth, FrameTargets                                     # noqa
from .box_ops import box_cxcywh_to_xyxy, generalized_box_iou, generalized_box_iou_matrix    # noqa
from .matcher import MatchState, hungarian_match, matching_cost, focal_class_cost, update_matches     # noqa
from .criterion import (                                                                # noqa
    LossWeights, LossParts, classification_loss, box_loss, mask_loss, dice_loss,
    temporal_contrastive_loss, joint_loss,
)
