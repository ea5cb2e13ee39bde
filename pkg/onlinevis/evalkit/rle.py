__package__ = 'onlinevis.evalkit'

from typing import Dict, List, Union

import numpy as np

from ..misc.errors import FormatError


RLE = Dict[str, List[int]]


def rle_encode(mask: np.ndarray) -> RLE:
    """Uncompressed row-major run lengths, the first run always counting zeros (possibly 0 of them)"""
    mask = np.asarray(mask, dtype=bool)
    flat = mask.reshape(-1).astype(np.int8)
    if flat.size == 0:
        return {'size': list(mask.shape), 'counts': []}
    changes = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate([[0], changes, [flat.size]])
    counts = np.diff(bounds).tolist()
    if flat[0] == 1:
        counts = [0] + counts
    return {'size': list(mask.shape), 'counts': [int(c) for c in counts]}


def rle_decode(rle: Union[RLE, dict]) -> np.ndarray:
    try:
        height, width = (int(v) for v in rle['size'])
        counts = [int(c) for c in rle['counts']]
    except (KeyError, TypeError, ValueError) as err:
        raise FormatError(f'Malformed RLE: {err}')
    if any(c < 0 for c in counts) or sum(counts) != height * width:
        raise FormatError(f'RLE counts sum to {sum(counts)}, expected {height * width}')
    values = np.arange(len(counts)) % 2
    return np.repeat(values, counts).astype(bool).reshape(height, width)
