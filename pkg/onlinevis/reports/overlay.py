__package__ = 'onlinevis.reports'

from pathlib import Path
from typing import Dict, List, Union

import numpy as np

from ..config.constants import CONSTANTS
from ..misc.errors import ContractError
from ..misc.system import atomic_write


PALETTE = np.array([
    (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200), (245, 130, 48),
    (145, 30, 180), (70, 240, 240), (240, 50, 230), (210, 245, 60), (250, 190, 212),
    (0, 128, 128), (220, 190, 255), (170, 110, 40), (255, 250, 200), (128, 0, 0),
    (170, 255, 195), (128, 128, 0), (255, 215, 180), (0, 0, 128), (128, 128, 128),
], dtype=np.float64)

ALPHA = 0.5


def track_color(track_id: int) -> np.ndarray:
    return PALETTE[int(track_id) % len(PALETTE)]


def encode_ppm(image: np.ndarray) -> bytes:
    """Binary P6 image of an H×W×3 u8 array"""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise ContractError(f'encode_ppm needs an H×W×3 uint8 image, got {image.shape} {image.dtype}')
    height, width, _ = image.shape
    return f'P6\n{width} {height}\n255\n'.encode('ascii') + image.tobytes()


def decode_ppm(data: bytes) -> np.ndarray:
    """Inverse of encode_ppm; only the newline-separated header it writes is understood"""
    parts = data.split(b'\n', 3)
    if len(parts) < 4 or parts[0] != b'P6' or parts[2] != b'255':
        raise ContractError('Not a binary 8-bit PPM image')
    width, height = (int(v) for v in parts[1].split())
    pixels = np.frombuffer(parts[3], dtype=np.uint8)
    if pixels.size != width * height * 3:
        raise ContractError(f'PPM body has {pixels.size} bytes, expected {width * height * 3}')
    return pixels.reshape(height, width, 3)


def blend_masks(frame: np.ndarray, masks: Dict[int, np.ndarray], alpha: float=ALPHA) -> np.ndarray:
    """Paint each track's mask over the frame in its palette colour, tracks in ascending id order"""
    out = np.asarray(frame, dtype=np.float64).copy()
    for track_id in sorted(masks):
        mask = np.asarray(masks[track_id], dtype=bool)
        out[mask] = (1 - alpha) * out[mask] + alpha * track_color(track_id)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def write_overlays(out_dir: Union[Path, str], video_name: str, frames: np.ndarray, frame_masks: List[Dict[int, np.ndarray]]) -> List[Path]:
    """One <video>/<frame:04d>.ppm per frame under out_dir/overlays"""
    if len(frames) != len(frame_masks):
        raise ContractError(f'{len(frames)} frames but masks for {len(frame_masks)}')
    video_dir = Path(out_dir) / CONSTANTS.OVERLAYS_DIR_NAME / video_name
    paths = []
    for t, (frame, masks) in enumerate(zip(frames, frame_masks)):
        path = video_dir / f'{t:04d}.ppm'
        atomic_write(path, encode_ppm(blend_masks(frame, masks)))
        paths.append(path)
    return paths
