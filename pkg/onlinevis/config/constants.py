__package__ = 'onlinevis.config'

from typing import Dict, Tuple
from pathlib import Path
from collections.abc import Mapping

from benedict import benedict


from .version import PACKAGE_DIR, detect_installed_version

###################### Config ##########################


PRESETS: Dict[str, Dict[str, object]] = {
    'toy': {
        'WIDTH': 64,
        'NUM_QUERIES': 16,
        'ENC_LAYERS': 2,
        'DEC_LAYERS': 2,
        'HEADS': 2,
        'LEVELS': 2,
        'POINTS': 4,
        'FFN_DIM': 128,
        'MEMORY_FRAMES': 4,
        'MEMORY_TOKENS': 4,
        'LR': 1e-3,
    },
    'paper': {
        'WIDTH': 256,
        'NUM_QUERIES': 300,
        'ENC_LAYERS': 6,
        'DEC_LAYERS': 6,
        'HEADS': 8,
        'LEVELS': 4,
        'POINTS': 4,
        'FFN_DIM': 1024,
        'MEMORY_FRAMES': 4,
        'MEMORY_TOKENS': 10,
        'LR': 1e-4,
    },
}

# values the paper preset pins; overriding any of them is a configuration error
PAPER_FIXED_KEYS: Tuple[str, ...] = ('WIDTH', 'NUM_QUERIES', 'ENC_LAYERS', 'DEC_LAYERS', 'MEMORY_FRAMES', 'MEMORY_TOKENS', 'HEADS', 'LEVELS', 'POINTS')


class ConstantsDict(Mapping):
    PACKAGE_DIR: Path                   = PACKAGE_DIR
    VERSION: str                        = detect_installed_version(PACKAGE_DIR)

    # Dataset layout
    MANIFEST_FILENAME: str              = 'manifest.json'
    VIDEOS_DIR_NAME: str                = 'videos'
    FRAMES_FILENAME: str                = 'frames.ift'
    LABELS_FILENAME: str                = 'labels.ift'
    ANNOTATIONS_FILENAME: str           = 'annotations.json'
    CLASS_NAMES: Tuple[str, ...]        = ('circle', 'square', 'triangle')

    # Run outputs
    RESOLVED_CONFIG_FILENAME: str       = 'resolved-config.json'
    CHECKPOINT_FILENAME: str            = 'checkpoint.ift'
    CHECKPOINT_INDEX_FILENAME: str      = 'checkpoint.json'
    LOSS_LOG_FILENAME: str              = 'loss.csv'
    TRACKS_FILENAME: str                = 'tracks.json'
    EMBEDDINGS_FILENAME: str            = 'embeddings.csv'
    OVERLAYS_DIR_NAME: str              = 'overlays'
    METRICS_FILENAME: str               = 'metrics.json'
    GRADCHECK_FILENAME: str             = 'gradcheck.json'
    ABLATION_FILENAME: str              = 'ablation.csv'

    # Binary tensor format
    TENSOR_MAGIC: bytes                 = b'IFT1'
    TENSOR_DTYPES: Dict[int, str]       = {0: '<f4', 1: '<f8', 2: '|u1', 3: '<u2'}

    # Exit codes
    EXIT_OK: int                        = 0
    EXIT_VERIFY_FAILED: int             = 1
    EXIT_USAGE: int                     = 2
    EXIT_NUMERIC: int                   = 3

    # Numerics
    GRADCHECK_TOLERANCE: float          = 1e-3
    INVISIBLE_BELOW: float              = 0.05
    MAX_PACKING_FRACTION: float         = 0.6
    MERGE_FIRST_FRAMES: int             = 3
    MAX_DETS: Tuple[int, ...]           = (1, 10, 100)

    # Config constants
    PRESETS: Dict[str, Dict[str, object]] = PRESETS
    PAPER_FIXED_KEYS: Tuple[str, ...]   = PAPER_FIXED_KEYS
    CONFIG_FILE_ENV: str                = 'ONLINEVIS_CONFIG_FILE'
    THREADS_ENV: str                    = 'IFORMER_THREADS'

    @classmethod
    def __getitem__(cls, key: str):
        return getattr(cls, key)

    @classmethod
    def __benedict__(cls):
        return benedict({key: value for key, value in cls.__dict__.items() if key.isupper() and not key.startswith('_')})

    @classmethod
    def __len__(cls):
        return len(cls.__benedict__())

    @classmethod
    def __iter__(cls):
        return iter(cls.__benedict__())

CONSTANTS = ConstantsDict()
