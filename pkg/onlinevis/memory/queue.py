__package__ = 'onlinevis.memory'

from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Iterator, List, Optional, Tuple

import numpy as np

from ..misc.errors import ContractError
from ..tensorcore import Tensor, F


@dataclass
class MemoryToken:
    embedding: Tensor           # C, projection of the detached (q, b, c) of its source frame
    query_index: int
    frame: int
    raw_query: np.ndarray       # detached C-dim copy of the source query, used by the contrastive loss


@dataclass
class MemorySlot:
    frame: int
    tokens: List[MemoryToken] = field(default_factory=list)

    @property
    def query_indices(self) -> List[int]:
        return [token.query_index for token in self.tokens]


class MemoryQueue:
    """FIFO of at most max_frames slots, each holding at most max_tokens tokens"""

    def __init__(self, max_frames: int, max_tokens: int):
        if max_frames < 1 or max_tokens < 1:
            raise ContractError(f'MemoryQueue needs max_frames >= 1 and max_tokens >= 1, got {max_frames}, {max_tokens}')
        self.max_frames = max_frames
        self.max_tokens = max_tokens
        self.slots: Deque[MemorySlot] = deque(maxlen=max_frames)

    def __len__(self) -> int:
        return len(self.slots)

    def __iter__(self) -> Iterator[MemorySlot]:
        return iter(self.slots)

    def __repr__(self) -> str:
        return f'<MemoryQueue frames={[slot.frame for slot in self.slots]} tokens={self.num_tokens}>'

    @property
    def is_empty(self) -> bool:
        return self.num_tokens == 0

    @property
    def num_tokens(self) -> int:
        return sum(len(slot.tokens) for slot in self.slots)

    @property
    def newest_frame(self) -> Optional[int]:
        return self.slots[-1].frame if self.slots else None

    def enqueue_frame(self, tokens: List[MemoryToken], frame: int) -> None:
        """Append one slot for frame; the oldest slot drops out once there are more than max_frames"""
        newest = self.newest_frame
        if newest is not None and frame <= newest:
            raise ContractError(f'Memory frames must increase: got frame {frame} after {newest}')
        if len(tokens) > self.max_tokens:
            raise ContractError(f'A memory slot holds at most {self.max_tokens} tokens, got {len(tokens)}')
        indices = [token.query_index for token in tokens]
        if len(set(indices)) != len(indices):
            raise ContractError(f'Duplicate query indices in one memory slot: {indices}')
        if any(token.frame != frame for token in tokens):
            raise ContractError(f'Tokens enqueued for frame {frame} carry other source frames')
        if not tokens:
            return
        self.slots.append(MemorySlot(frame=frame, tokens=list(tokens)))

    def flatten(self) -> Tuple[Tensor, np.ndarray, np.ndarray]:
        """All tokens oldest first: embeddings S×C, query indices S, source frames S"""
        tokens = [token for slot in self.slots for token in slot.tokens]
        if not tokens:
            raise ContractError('Cannot flatten an empty memory queue')
        embeddings = F.stack([token.embedding for token in tokens], axis=0)
        indices = np.array([token.query_index for token in tokens], dtype=np.int64)
        frames = np.array([token.frame for token in tokens], dtype=np.int64)
        return embeddings, indices, frames
