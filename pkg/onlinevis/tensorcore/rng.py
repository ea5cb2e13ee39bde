__package__ = 'onlinevis.tensorcore'

from typing import Optional, Sequence, Union

import numpy as np


class RngState:
    """
    Seeded random stream. Identical seed plus identical call sequence gives
    identical draws; counter tracks how many draws were taken.
    """

    def __init__(self, seed: int=0, key: Sequence[int]=()):
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        self.counter = 0
        self._generator = np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=self.key)))

    def __repr__(self) -> str:
        return f'RngState(seed={self.seed}, key={self.key}, counter={self.counter})'

    def spawn(self, *key: int) -> 'RngState':
        """Independent child stream, e.g. one per video or per worker thread"""
        return RngState(self.seed, self.key + tuple(key))

    @property
    def generator(self) -> np.random.Generator:
        return self._generator

    def normal(self, shape, scale: float=1.0) -> np.ndarray:
        self.counter += 1
        return self._generator.normal(0.0, scale, size=shape)

    def uniform(self, low: float=0.0, high: float=1.0, shape=None) -> Union[float, np.ndarray]:
        self.counter += 1
        return self._generator.uniform(low, high, size=shape)

    def integers(self, low: int, high: Optional[int]=None, shape=None) -> Union[int, np.ndarray]:
        """Draw from [low, high)"""
        self.counter += 1
        value = self._generator.integers(low, high, size=shape)
        return int(value) if shape is None else value

    def choice(self, n: int, size: int, replace: bool=False) -> np.ndarray:
        self.counter += 1
        return self._generator.choice(n, size=size, replace=replace)

    def permutation(self, n: int) -> np.ndarray:
        self.counter += 1
        return self._generator.permutation(n)
