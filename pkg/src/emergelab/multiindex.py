"""Multi-index sets and sign symbols used by the parablender families."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import comb

import numpy as np


@dataclass(frozen=True)
class MultiIndexSet:
    """All ``i in {0..d}^k`` with ``|i| <= d``, lexicographic, zero index first."""

    d: int
    k: int
    indices: tuple[tuple[int, ...], ...] = field(init=False, repr=False)

    def __post_init__(self):
        if self.d < 0 or self.k < 0:
            raise ValueError("jet order and parameter dimension must be nonnegative")
        idx = tuple(
            i for i in itertools.product(range(self.d + 1), repeat=self.k)
            if sum(i) <= self.d
        )
        object.__setattr__(self, "indices", idx)
        assert len(idx) == comb(self.d + self.k, self.k)

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def position(self, i) -> int:
        return self.indices.index(tuple(i))

    def as_array(self) -> np.ndarray:
        return np.array(self.indices, dtype=np.int64).reshape(len(self), self.k)

    def symbols(self) -> list[tuple[int, ...]]:
        """Every map ``E -> {-1, +1}``, lexicographic with -1 before +1."""
        return list(itertools.product((-1, 1), repeat=len(self)))


def monomials(a, E: MultiIndexSet) -> np.ndarray:
    """Values ``a^i`` for every ``i`` in E, with ``0**0 == 1``."""
    a = np.asarray(a, dtype=float).reshape(E.k)
    return np.array([np.prod(a ** np.array(i, dtype=float)) for i in E], dtype=float)
