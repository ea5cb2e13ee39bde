__package__ = 'onlinevis.reports'

from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

from ..misc.system import atomic_write
from ..misc.util import enforce_types, to_json


LOSS_COLUMNS = ['iter', 'cls', 'box', 'mask', 'tcl', 'total']
ABLATION_COLUMNS = [
    'variant', 'seed', 'query', 'ref', 'class', 'memory', 'tcl', 'memory_frames', 'memory_tokens',
    'iters', 'final_loss', 'AP', 'AP50', 'AP75', 'id_switches',
]


def embedding_columns(width: int) -> List[str]:
    return ['video', 'frame', 'query', *(f'e{i}' for i in range(width))]


def format_value(value: Any) -> str:
    if isinstance(value, str):
        return value
    return to_json(value, indent=None)


@enforce_types
def rows_to_csv(rows: Sequence[Dict[str, Any]],
                cols: Optional[List[str]]=None,
                header: bool=True,
                separator: str=',',
                ljust: int=0) -> str:

    cols = cols or (list(rows[0].keys()) if rows else [])

    header_str = ''
    if header:
        header_str = separator.join(col.ljust(ljust) for col in cols)

    row_strs = (
        to_csv(row, cols=cols, ljust=ljust, separator=separator)
        for row in rows
    )

    return '\n'.join((header_str, *row_strs)) + '\n'


def to_csv(row: Dict[str, Any], cols: List[str], separator: str=',', ljust: int=0) -> str:
    return separator.join(
        format_value(row[col]).ljust(ljust)
        for col in cols
    )


def write_csv(path: Union[Path, str], rows: Sequence[Dict[str, Any]], cols: List[str]) -> Path:
    atomic_write(path, rows_to_csv(list(rows), cols=cols))
    return Path(path)


def read_csv(path: Union[Path, str], separator: str=',') -> List[Dict[str, str]]:
    lines = [line for line in Path(path).read_text(encoding='utf-8').splitlines() if line.strip()]
    if not lines:
        return []
    cols = [col.strip() for col in lines[0].split(separator)]
    return [dict(zip(cols, (cell.strip() for cell in line.split(separator)))) for line in lines[1:]]
