__package__ = 'onlinevis.synthdata'

import json

from pathlib import Path
from typing import List, Sequence, Union

from ..config.constants import CONSTANTS
from ..misc.errors import FormatError
from ..misc.system import atomic_write
from ..tensorcore.serialization import read_tensor, write_tensor
from .video import InstanceTrack, SynthVideo


def video_dir(root: Path, name: str) -> Path:
    return root / CONSTANTS.VIDEOS_DIR_NAME / name


def write_dataset(videos: Sequence[SynthVideo], path: Union[Path, str]) -> Path:
    """
    <path>/manifest.json
    <path>/videos/<name>/frames.ift         T×H×W×3 u8
    <path>/videos/<name>/labels.ift         T×H×W u16
    <path>/videos/<name>/annotations.json
    """
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for video in videos:
        out = video_dir(root, video.name)
        write_tensor(out / CONSTANTS.FRAMES_FILENAME, video.frames)
        write_tensor(out / CONSTANTS.LABELS_FILENAME, video.labels)
        atomic_write(out / CONSTANTS.ANNOTATIONS_FILENAME, video.annotations())
        entries.append({
            'name': video.name,
            'frames_shape': list(video.frames.shape),
            'labels_shape': list(video.labels.shape),
            'num_instances': len(video.instances),
        })

    atomic_write(root / CONSTANTS.MANIFEST_FILENAME, {
        'classes': list(CONSTANTS.CLASS_NAMES),
        'videos': entries,
    })
    return root


def _read_json(path: Path) -> dict:
    if not path.is_file():
        raise FormatError('File is missing', path=path, offset=0)
    try:
        return json.loads(path.read_text(encoding='utf-8'))
    except json.JSONDecodeError as err:
        raise FormatError(f'Invalid JSON: {err.msg}', path=path, offset=err.pos)


def read_manifest(path: Union[Path, str]) -> dict:
    return _read_json(Path(path) / CONSTANTS.MANIFEST_FILENAME)


def read_video(root: Path, entry: dict) -> SynthVideo:
    folder = video_dir(root, entry['name'])
    frames = read_tensor(folder / CONSTANTS.FRAMES_FILENAME, shape=tuple(entry['frames_shape']))
    labels = read_tensor(folder / CONSTANTS.LABELS_FILENAME, shape=tuple(entry['labels_shape']))
    annotations = _read_json(folder / CONSTANTS.ANNOTATIONS_FILENAME)
    instances = [InstanceTrack.from_dict(info) for info in annotations.get('instances', [])]
    for instance in instances:
        if len(instance.boxes) != frames.shape[0]:
            raise FormatError(f'Instance {instance.instance_id} has {len(instance.boxes)} boxes for {frames.shape[0]} frames', path=folder / CONSTANTS.ANNOTATIONS_FILENAME, offset=0)
    return SynthVideo(name=entry['name'], frames=frames, labels=labels, instances=instances)


def read_dataset(path: Union[Path, str]) -> List[SynthVideo]:
    root = Path(path)
    manifest = read_manifest(root)
    return [read_video(root, entry) for entry in manifest.get('videos', [])]
