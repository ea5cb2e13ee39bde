__package__ = 'onlinevis.memory'

from typing import Literal, Optional, Sequence

import numpy as np

from ..misc.errors import ContractError


def _rank(indices: np.ndarray, scores: np.ndarray) -> np.ndarray:
    """indices ordered by descending score, ties to the lower index"""
    return indices[np.lexsort((indices, -scores[indices]))]


def select_instances(
    mode: Literal['train', 'infer'],
    k: int,
    matched: Optional[Sequence[int]]=None,
    scores: Optional[np.ndarray]=None,
) -> np.ndarray:
    """
    Pick the queries that go into memory for this frame, ascending.
    train: the matched queries, cut down to the k most confident if more are matched.
    infer: the k queries with the highest confidence.
    """
    if mode == 'train':
        picked = np.unique(np.asarray(list(matched or []), dtype=np.int64))
        if len(picked) > k:
            confidence = np.zeros(int(picked.max()) + 1) if scores is None else np.asarray(scores, dtype=np.float64)
            picked = _rank(picked, confidence)[:k]
        return np.sort(picked)

    if mode == 'infer':
        if scores is None:
            raise ContractError('select_instances(mode="infer") needs per-query scores')
        confidence = np.asarray(scores, dtype=np.float64)
        picked = _rank(np.arange(len(confidence)), confidence)[:k]
        return np.sort(picked)

    raise ContractError(f'Unknown selection mode {mode!r}')
