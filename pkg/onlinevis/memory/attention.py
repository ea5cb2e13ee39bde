__package__ = 'onlinevis.memory'

from typing import List, Optional, Sequence

import numpy as np

from ..misc.errors import ContractError
from ..attention import MultiHeadAttention, sinusoidal_encoding_1d
from ..tensorcore import Module, Linear, LayerNorm, Tensor, F, RngState, parameter
from .queue import MemoryQueue, MemoryToken


class MemoryTokenizer(Module):
    """Projects the detached (query, box, class scores) of selected instances to width C"""

    def __init__(self, width: int, num_classes: int, rng: RngState):
        self.width = width
        self.num_classes = num_classes
        self.proj = Linear(width + 4 + num_classes, width, rng)

    def forward(self, q: Tensor, boxes: Tensor, scores: Tensor, selected: Sequence[int], frame: int) -> List[MemoryToken]:
        return self.make_memory_tokens(q, boxes, scores, selected, frame)

    def make_memory_tokens(self, q: Tensor, boxes: Tensor, scores: Tensor, selected: Sequence[int], frame: int) -> List[MemoryToken]:
        selected = [int(i) for i in selected]
        if not selected:
            return []
        features = np.concatenate([q.data, boxes.data, scores.data], axis=1)[selected]
        embeddings = self.proj(Tensor(features))
        return [
            MemoryToken(embedding=embeddings[row], query_index=index, frame=frame, raw_query=q.data[index].copy())
            for row, index in enumerate(selected)
        ]


class TemporalIndexEmbedding(Module):
    """Key position of a memory token: learned embedding of its query index plus a sinusoid of its age"""

    def __init__(self, num_queries: int, width: int, rng: RngState):
        self.width = width
        self.index_embed = parameter(rng.normal((num_queries, width), scale=0.02))

    def forward(self, query_indices: np.ndarray, frames: np.ndarray, t: int) -> Tensor:
        deltas = t - np.asarray(frames, dtype=np.int64)
        if (deltas <= 0).any():
            raise ContractError(f'Memory tokens must come from frames before {t}, got frames {sorted(set(frames.tolist()))}')
        return self.index_embed[np.asarray(query_indices, dtype=np.int64)] + sinusoidal_encoding_1d(deltas, self.width)


class MemoryCrossAttention(Module):
    """LN(q + Attn(q, M_t)), or q untouched when memory is empty"""

    def __init__(self, width: int, heads: int, num_queries: int, rng: RngState):
        self.attn = MultiHeadAttention(width, heads, rng)
        self.temporal = TemporalIndexEmbedding(num_queries, width, rng)
        self.norm = LayerNorm(width)

    def forward(self, q: Tensor, queue: Optional[MemoryQueue], t: int) -> Tensor:
        if queue is None or queue.is_empty:
            return q
        embeddings, indices, frames = queue.flatten()
        key_pos = self.temporal(indices, frames, t)
        query_pos = self.temporal.index_embed[:q.shape[0]]
        return self.norm(q + self.attn(q, embeddings, query_pos=query_pos, key_pos=key_pos))
