__package__ = 'onlinevis.misc'

from pathlib import Path
from typing import Optional, Sequence, Union


class OnlineVISError(Exception):
    def __init__(self, message, hints: Optional[Sequence[str]]=None):
        super().__init__(message)
        self.hints = hints


class DimensionError(OnlineVISError, ValueError):
    """operand shapes are incompatible"""


class ContractError(OnlineVISError, ValueError):
    """a caller broke a documented precondition"""


class ConfigurationError(OnlineVISError, ValueError):
    """the requested configuration is infeasible or inconsistent"""


class NumericError(OnlineVISError, ArithmeticError):
    def __init__(self, message, part: Optional[str]=None, iteration: Optional[int]=None, hints: Optional[Sequence[str]]=None):
        super().__init__(message, hints=hints)
        self.part = part
        self.iteration = iteration


class FormatError(OnlineVISError, ValueError):
    def __init__(self, message, path: Union[Path, str, None]=None, offset: int=0, hints: Optional[Sequence[str]]=None):
        location = f'{path}@{offset}' if path is not None else f'offset {offset}'
        super().__init__(f'{message} ({location})', hints=hints)
        self.path = path
        self.offset = offset
