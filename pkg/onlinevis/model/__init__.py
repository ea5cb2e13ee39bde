__package__ = 'onlinevis.model'

from .backbone import ToyBackbone, BackboneOutput                                           # noqa
from .encoder import DeformableEncoder, EncoderLayer, token_reference_points                # noqa
from .decoder import MemoryDecoder, DecoderLayer                                            # noqa
from .heads import FramePrediction, PredictionHeads, MaskHead                               # noqa
from .network import OnlineVISModel, MergedScores, merge_video_scores                       # noqa
from .optim import AdamW, ParamGroup, MultiStepLR, clip_grad_norm, build_optimizer          # noqa
from .checkpoint import save_model, load_model                                              # noqa
from .inference import VideoResult, run_video, tracks_document, upsample_masks              # noqa
from .trainer import Trainer, TrainingRun, sample_clip, train_clip                          # noqa
