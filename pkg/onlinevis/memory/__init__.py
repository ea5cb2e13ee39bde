__package__ = 'onlinevis.memory'

from .queue import MemoryToken, MemorySlot, MemoryQueue                                     # noqa
from .selection import select_instances                                                     # noqa
from .attention import MemoryTokenizer, TemporalIndexEmbedding, MemoryCrossAttention        # noqa
