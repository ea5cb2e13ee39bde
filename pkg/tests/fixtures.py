import os
import math
import subprocess

import numpy as np
import pytest
from scipy.special import softmax

from onlinevis.config.common import ModelConfig, LossConfig, TrainConfig, DataConfig
from onlinevis.synthdata import ShapeClass, ShapeSpec, VideoSpec, generate_video, generate_video_from_shapes
from onlinevis.tensorcore import RngState


TINY_MODEL = dict(
    PRESET='toy', WIDTH=16, NUM_QUERIES=6, ENC_LAYERS=1, DEC_LAYERS=1, HEADS=2, LEVELS=2, POINTS=2,
    FFN_DIM=32, MEMORY_FRAMES=2, MEMORY_TOKENS=2, MASK_DIM=4, TOP_K_TRACKS=4,
)

TINY_DATA = ['--videos', '2', '--frames', '4', '--canvas', '32', '--set', 'MIN_SIZE=8', '--set', 'MAX_SIZE=10', '--set', 'MAX_SPEED=2']


@pytest.fixture
def process(tmp_path):
    os.chdir(tmp_path)
    process = subprocess.run(['onlinevis', 'gen-data', '--out', 'data', *TINY_DATA], capture_output=True)
    return process


@pytest.fixture
def tiny_env():
    env = os.environ.copy()
    env.update({
        'SHOW_PROGRESS': 'False',
        'USE_COLOR': 'False',
        'IFORMER_THREADS': '1',
    })
    return env


@pytest.fixture
def tiny_model_config():
    return ModelConfig(**TINY_MODEL)


@pytest.fixture
def tiny_train_config():
    return TrainConfig(ITERS=4, MIN_CLIP_FRAMES=2, MAX_CLIP_FRAMES=3, CHECKPOINT_EVERY=2)


@pytest.fixture
def loss_config():
    return LossConfig()


@pytest.fixture
def tiny_videos():
    spec = VideoSpec.from_config(DataConfig(VIDEOS=2, FRAMES=4, CANVAS=32, MIN_SIZE=8, MAX_SIZE=10, MAX_SPEED=2))
    return [generate_video(spec, 0, index=i) for i in range(2)]


@pytest.fixture
def crossing_video():
    """A square sliding left-to-right under a static circle; the square is the deeper shape"""
    shapes = [
        ShapeSpec(ShapeClass.circle, 10.0, (80, 200, 120), (24.0, 16.0), (0.0, 0.0), depth=0),
        ShapeSpec(ShapeClass.square, 8.0, (200, 80, 80), (6.0, 16.0), (3.0, 0.0), depth=1),
    ]
    return generate_video_from_shapes(shapes, 48, 12, name='crossing')


@pytest.fixture
def rng():
    return RngState(1234)


def random_masks(rng: RngState, count: int, frames: int, size: int=6, p: float=0.4) -> np.ndarray:
    return rng.uniform(0.0, 1.0, (count, frames, size, size)) < p


def linear(layer, x):
    return x @ layer.weight.data + layer.bias.data


def dense_attention(attn, queries, keys, query_pos, key_pos):
    """Per-head softmax(QKᵀ/√d)V, heads concatenated, then projected"""
    q = linear(attn.q_proj, queries + query_pos)
    k = linear(attn.k_proj, keys + key_pos)
    v = linear(attn.v_proj, keys)
    dh = attn.width // attn.heads
    out = np.zeros((queries.shape[0], attn.width))
    for h in range(attn.heads):
        cols = slice(h * dh, (h + 1) * dh)
        weights = softmax(q[:, cols] @ k[:, cols].T / math.sqrt(dh), axis=-1)
        out[:, cols] = weights @ v[:, cols]
    return linear(attn.out_proj, out)
