__package__ = 'onlinevis.tensorcore'

import json

from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from ..config.constants import CONSTANTS
from ..misc.errors import FormatError
from ..misc.system import atomic_write


MAGIC = CONSTANTS.TENSOR_MAGIC
DTYPE_CODES: Dict[int, np.dtype] = {code: np.dtype(name) for code, name in CONSTANTS.TENSOR_DTYPES.items()}
CODE_FOR_DTYPE: Dict[np.dtype, int] = {dtype: code for code, dtype in DTYPE_CODES.items()}

HEADER_FIXED = len(MAGIC) + 2       # magic, u8 dtype code, u8 rank


def encode_tensor(array: np.ndarray) -> bytes:
    """magic | u8 dtype | u8 rank | rank × u64 LE dims | row-major LE payload"""
    array = np.asarray(array)
    code = CODE_FOR_DTYPE.get(array.dtype.newbyteorder('<'))
    if code is None:
        raise FormatError(f'Cannot encode tensors of dtype {array.dtype}, expected one of {[d.name for d in DTYPE_CODES.values()]}')
    if array.ndim > 255:
        raise FormatError(f'Cannot encode a tensor of rank {array.ndim}')
    payload = np.ascontiguousarray(array, dtype=DTYPE_CODES[code]).tobytes(order='C')
    header = MAGIC + bytes((code, array.ndim)) + np.asarray(array.shape, dtype='<u8').tobytes()
    return header + payload


def decode_tensor(buffer: bytes, offset: int=0, path: Union[Path, str, None]=None) -> Tuple[np.ndarray, int]:
    """Decode one record starting at offset, returning the array and the offset just past it"""
    if len(buffer) < offset + HEADER_FIXED:
        raise FormatError('Truncated tensor header', path=path, offset=offset)
    if buffer[offset:offset + len(MAGIC)] != MAGIC:
        raise FormatError(f'Bad magic {bytes(buffer[offset:offset + len(MAGIC)])!r}, expected {MAGIC!r}', path=path, offset=offset)

    code, rank = buffer[offset + len(MAGIC)], buffer[offset + len(MAGIC) + 1]
    if code not in DTYPE_CODES:
        raise FormatError(f'Unknown dtype code {code}', path=path, offset=offset + len(MAGIC))
    dtype = DTYPE_CODES[code]

    dims_at = offset + HEADER_FIXED
    payload_at = dims_at + 8 * rank
    if len(buffer) < payload_at:
        raise FormatError(f'Truncated dimension list for a rank-{rank} tensor', path=path, offset=dims_at)
    shape = tuple(int(d) for d in np.frombuffer(buffer, dtype='<u8', count=rank, offset=dims_at))

    nbytes = int(np.prod(shape, dtype=np.uint64)) * dtype.itemsize
    end = payload_at + nbytes
    if len(buffer) < end:
        raise FormatError(f'Truncated payload: shape {shape} needs {nbytes} bytes, found {len(buffer) - payload_at}', path=path, offset=payload_at)
    array = np.frombuffer(buffer, dtype=dtype, count=nbytes // dtype.itemsize, offset=payload_at).reshape(shape).copy()
    return array, end


def write_tensor(path: Union[Path, str], array: np.ndarray) -> int:
    data = encode_tensor(array)
    atomic_write(Path(path), data)
    return len(data)


def read_tensor(path: Union[Path, str], shape: Optional[Tuple[int, ...]]=None) -> np.ndarray:
    path = Path(path)
    try:
        buffer = path.read_bytes()
    except FileNotFoundError:
        raise FormatError('Tensor file is missing', path=path, offset=0)
    array, end = decode_tensor(buffer, 0, path=path)
    if end != len(buffer):
        raise FormatError(f'{len(buffer) - end} trailing bytes after the tensor record', path=path, offset=end)
    if shape is not None and tuple(array.shape) != tuple(shape):
        raise FormatError(f'Shape {array.shape} does not match the expected {tuple(shape)}', path=path, offset=len(MAGIC) + 2)
    return array


### Checkpoints: one file of concatenated records plus a JSON index

def save_checkpoint(out_dir: Union[Path, str], state: Dict[str, np.ndarray], metadata: Optional[Dict[str, Any]]=None) -> Path:
    out_dir = Path(out_dir)
    chunks = []
    index: Dict[str, Dict[str, Any]] = {}
    offset = 0
    for name in sorted(state):
        array = np.asarray(state[name])
        record = encode_tensor(array)
        index[name] = {'offset': offset, 'shape': list(array.shape), 'dtype': array.dtype.name}
        chunks.append(record)
        offset += len(record)

    atomic_write(out_dir / CONSTANTS.CHECKPOINT_FILENAME, b''.join(chunks))
    atomic_write(out_dir / CONSTANTS.CHECKPOINT_INDEX_FILENAME, {**(metadata or {}), 'tensors': index})
    return out_dir / CONSTANTS.CHECKPOINT_FILENAME


def load_checkpoint(checkpoint_dir: Union[Path, str]) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    checkpoint_dir = Path(checkpoint_dir)
    index_path = checkpoint_dir / CONSTANTS.CHECKPOINT_INDEX_FILENAME
    data_path = checkpoint_dir / CONSTANTS.CHECKPOINT_FILENAME
    if not index_path.is_file() or not data_path.is_file():
        raise FormatError('Checkpoint index or data file is missing', path=checkpoint_dir, offset=0)

    try:
        metadata = json.loads(index_path.read_text(encoding='utf-8'))
    except json.JSONDecodeError as err:
        raise FormatError(f'Checkpoint index is not valid JSON: {err.msg}', path=index_path, offset=err.pos)

    buffer = data_path.read_bytes()
    state: Dict[str, np.ndarray] = {}
    for name, entry in metadata.get('tensors', {}).items():
        array, _ = decode_tensor(buffer, int(entry['offset']), path=data_path)
        if list(array.shape) != list(entry['shape']):
            raise FormatError(f'Tensor {name} has shape {array.shape}, the index says {entry["shape"]}', path=data_path, offset=int(entry['offset']))
        state[name] = array
    return state, metadata
