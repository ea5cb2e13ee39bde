__package__ = 'onlinevis.evalkit'

import json

from pathlib import Path
from typing import Dict, List, Union

from ..misc.errors import FormatError
from ..synthdata import SynthVideo
from .rle import rle_decode
from .tracks import Track


def gt_tracks_from_video(video: SynthVideo) -> List[Track]:
    """A GT track's mask at frame t is label == instance id, absent while the instance is invisible"""
    tracks = []
    for instance in video.instances:
        masks = [
            video.instance_mask(instance.instance_id, t) if instance.is_visible(t) else None
            for t in range(len(video))
        ]
        tracks.append(Track(masks=masks, class_id=instance.class_id, score=1.0, source=instance.instance_id, video=video.name))
    return tracks


def gt_tracks_from_dataset(videos: List[SynthVideo]) -> Dict[str, List[Track]]:
    return {video.name: gt_tracks_from_video(video) for video in videos}


def tracks_from_json(info: dict) -> Dict[str, List[Track]]:
    result: Dict[str, List[Track]] = {}
    for video in info['videos']:
        name = str(video['name'])
        result[name] = [
            Track(
                masks=[None if rle is None else rle_decode(rle) for rle in track['masks']],
                class_id=int(track['class_id']),
                score=float(track['score']),
                source=int(track['track_id']),
                video=name,
                class_scores=[float(s) for s in track.get('class_scores', [])],
            )
            for track in video['tracks']
        ]
    return result


def load_tracks_json(path: Union[Path, str]) -> Dict[str, List[Track]]:
    path = Path(path)
    if not path.is_file():
        raise FormatError('Tracks file does not exist', path=path, hints=('Run `onlinevis infer` first, or pass --tracks',))
    try:
        info = json.loads(path.read_text(encoding='utf-8'))
    except json.JSONDecodeError as err:
        raise FormatError(f'Tracks file is not valid JSON: {err.msg}', path=path, offset=err.pos)
    try:
        return tracks_from_json(info)
    except (KeyError, TypeError, ValueError) as err:
        raise FormatError(f'Tracks file is missing a field: {err}', path=path)
