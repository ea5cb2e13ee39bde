__package__ = 'onlinevis.model'

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from ..config.constants import CONSTANTS
from ..evalkit import Track, rle_encode
from ..synthdata import SynthVideo
from .network import OnlineVISModel, MergedScores, merge_video_scores


MASK_STRIDE = 4


def upsample_masks(mask_logits: np.ndarray, stride: int=MASK_STRIDE) -> np.ndarray:
    """N×h×w logits -> N×(h·s)×(w·s) bool masks, nearest upsampling then logit > 0"""
    return np.repeat(np.repeat(mask_logits > 0, stride, axis=1), stride, axis=2)


@dataclass
class VideoResult:
    name: str
    num_frames: int
    merged: MergedScores
    masks: Dict[int, List[np.ndarray]]                  # query -> per-frame canvas mask
    boxes: Dict[int, List[List[float]]]                 # query -> per-frame cx, cy, w, h
    embeddings: Dict[int, List[np.ndarray]] = field(default_factory=dict)
    selected: List[List[int]] = field(default_factory=list)

    def tracks(self) -> List[Track]:
        return [
            Track(
                masks=self.masks[int(query)],
                class_id=int(np.argmax(scores)),
                score=float(np.max(scores)),
                source=int(query),
                video=self.name,
                class_scores=[float(s) for s in scores],
            )
            for query, scores in zip(self.merged.candidates, self.merged.class_scores)
        ]

    def to_json(self) -> dict:
        return {
            'name': self.name,
            'num_frames': self.num_frames,
            'tracks': [
                {
                    'track_id': track.source,
                    'class_id': track.class_id,
                    'score': track.score,
                    'class_scores': track.class_scores,
                    'masks': [rle_encode(mask) for mask in track.masks],
                    'boxes': self.boxes[track.source],
                }
                for track in self.tracks()
            ],
        }

    def embedding_rows(self) -> List[dict]:
        rows = []
        for t in range(self.num_frames):
            for query in self.merged.candidates:
                vector = self.embeddings[int(query)][t]
                rows.append({'video': self.name, 'frame': t, 'query': int(query), **{f'e{i}': float(v) for i, v in enumerate(vector)}})
        return rows


def run_video(model: OnlineVISModel, video: SynthVideo, top_k: Optional[int]=None, first_frames: int=CONSTANTS.MERGE_FIRST_FRAMES) -> VideoResult:
    """
    Stream the frames through process_frame in order. Until the candidate set is
    known (after the first frames) every query's outputs are kept; afterwards
    only the candidates'.
    """
    top_k = top_k or model.model_config.TOP_K_TRACKS
    state = model.init_state()
    frame_scores = []
    masks: Dict[int, List[np.ndarray]] = {}
    boxes: Dict[int, List[List[float]]] = {}
    embeddings: Dict[int, List[np.ndarray]] = {}
    selected = []
    keep = None

    for t in range(len(video)):
        prediction, state = model.process_frame(state, video.frame_tensor(t), mode='infer', t=t)
        frame_scores.append(prediction.scores.data.astype(np.float64))
        selected.append([int(i) for i in prediction.selected])

        if keep is None and t + 1 >= first_frames:
            keep = merge_video_scores(np.stack(frame_scores), top_k, first_frames).candidates
            for store in (masks, boxes, embeddings):
                for query in [q for q in store if q not in set(keep.tolist())]:
                    del store[query]

        queries = range(prediction.scores.shape[0]) if keep is None else keep
        frame_masks = upsample_masks(prediction.mask_logits.data)
        for query in queries:
            query = int(query)
            masks.setdefault(query, []).append(frame_masks[query])
            boxes.setdefault(query, []).append([float(v) for v in prediction.boxes.data[query]])
            embeddings.setdefault(query, []).append(prediction.queries.data[query].astype(np.float64))

    merged = merge_video_scores(np.stack(frame_scores), top_k, first_frames)
    return VideoResult(
        name=video.name,
        num_frames=len(video),
        merged=merged,
        masks=masks,
        boxes=boxes,
        embeddings=embeddings,
        selected=selected,
    )


def tracks_document(results: List[VideoResult]) -> dict:
    return {'videos': [result.to_json() for result in results]}
