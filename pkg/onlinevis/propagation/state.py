__package__ = 'onlinevis.propagation'

from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, Literal, Optional

import numpy as np

from ..misc.errors import ConfigurationError
from ..losses.matcher import MatchState
from ..memory import MemoryQueue
from ..tensorcore import Tensor


@dataclass(frozen=True)
class PropagationConfig:
    ref_mode: Literal['offset', 'literal'] = 'offset'
    history_depth: int = 4
    use_class_prior: bool = True
    use_ref_propagation: bool = True

    def __post_init__(self):
        if self.history_depth < 1:
            raise ConfigurationError(f'Class history depth must be >= 1, got {self.history_depth}')
        if self.ref_mode not in ('offset', 'literal'):
            raise ConfigurationError(f'Unknown reference point mode {self.ref_mode!r}')

    @classmethod
    def from_model_config(cls, config) -> 'PropagationConfig':
        return cls(
            ref_mode=config.REF_MODE,
            history_depth=config.MEMORY_FRAMES,
            use_class_prior=config.USE_CLASS_PRIOR,
            use_ref_propagation=config.USE_REF_PROPAGATION,
        )


@dataclass
class InstanceState:
    """Everything one video carries from frame t-1 to frame t"""
    q: Optional[Tensor]                     # N×C final decoder embeddings of the last frame
    ref: Optional[Tensor]                   # N×2 reference points for the next frame, in (0, 1)
    class_history: Deque[np.ndarray]        # up to d detached N×K class distributions, oldest first
    queue: MemoryQueue
    match_state: MatchState = field(default_factory=MatchState)
    frame_index: int = -1                   # last processed frame

    @classmethod
    def empty(cls, history_depth: int, memory_frames: int, memory_tokens: int) -> 'InstanceState':
        return cls(
            q=None,
            ref=None,
            class_history=deque(maxlen=history_depth),
            queue=MemoryQueue(memory_frames, memory_tokens),
        )

    @property
    def assoc(self) -> Dict[int, int]:
        return self.match_state.assoc

    @property
    def next_frame(self) -> int:
        return self.frame_index + 1

    def footprint(self) -> int:
        """Number of stored scalars; stays bounded however long the video is"""
        size = sum(h.size for h in self.class_history)
        size += 0 if self.q is None else self.q.size
        size += 0 if self.ref is None else self.ref.size
        size += sum(token.embedding.size + token.raw_query.size for slot in self.queue for token in slot.tokens)
        return int(size)
