"""
Cylinder Space Model - depth-k truncation of the full shift on {1..d}^N
Words are indexed little-endian: symbol 1 of the word is the lowest base-d digit
"""

from dataclasses import dataclass
from functools import cached_property
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from core.exceptions import ArgumentError


@dataclass(frozen=True)
class CylinderSpace:
    """
    Truncated symbolic state space

    d: alphabet size (symbols are 1..d)
    k: cylinder depth (words have k symbols)
    theta: metric parameter, d(x, y) = theta^N with N the common prefix length.
        Only used for reported Lipschitz bounds.
    """

    d: int
    k: int
    theta: float = 0.5

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ArgumentError(f"alphabet size d must be an integer >= 1, got {self.d}")
        if int(self.k) != self.k or self.k < 1:
            raise ArgumentError(f"depth k must be an integer >= 1, got {self.k}")
        if not (0.0 < self.theta < 1.0):
            raise ArgumentError(f"theta must lie in (0, 1), got {self.theta}")

    @property
    def size(self) -> int:
        """Number of depth-k words, d^k"""
        return self.d**self.k

    def encode(self, word: Sequence[int]) -> int:
        """Map a word of symbols in 1..d to its index"""
        if len(word) != self.k:
            raise ArgumentError(f"word {tuple(word)} does not have depth {self.k}")
        index = 0
        for position, symbol in enumerate(word):
            if not 1 <= symbol <= self.d:
                raise ArgumentError(f"symbol {symbol} outside 1..{self.d}")
            index += (symbol - 1) * self.d**position
        return index

    def decode(self, index: int) -> Tuple[int, ...]:
        """Map an index back to its word"""
        if not 0 <= index < self.size:
            raise ArgumentError(f"word index {index} outside 0..{self.size - 1}")
        return tuple(int(s) + 1 for s in self.digits[index])

    @cached_property
    def digits(self) -> np.ndarray:
        """Zero-based symbols of every word, shape (d^k, k)"""
        indices = np.arange(self.size)
        powers = self.d ** np.arange(self.k)
        table = (indices[:, None] // powers[None, :]) % self.d
        table.setflags(write=False)
        return table

    @cached_property
    def preimage_table(self) -> np.ndarray:
        """
        Index of the truncated preimage ax for every (x, a)

        Row x, column a-1 holds the index of (a, x_1, ..., x_{k-1}).
        """
        tail = np.arange(self.size) % self.d ** (self.k - 1)
        table = np.arange(self.d)[None, :] + self.d * tail[:, None]
        table.setflags(write=False)
        return table

    def preimages(self, index: int) -> List[int]:
        """The d preimage words of a word, ordered by prepended symbol"""
        return [int(i) for i in self.preimage_table[index]]

    @cached_property
    def shift_table(self) -> np.ndarray:
        """
        Words sharing the shifted prefix: row x lists every y with y_1..y_{k-1} = x_2..x_k

        These are the truncations of the possible images sigma(x).
        """
        head = np.arange(self.size) // self.d
        table = head[:, None] + self.d ** (self.k - 1) * np.arange(self.d)[None, :]
        table.setflags(write=False)
        return table

    def common_prefix(self, x: int, y: int) -> int:
        """Number of leading symbols two words share"""
        same = self.digits[x] == self.digits[y]
        mismatch = np.flatnonzero(~same)
        return int(mismatch[0]) if mismatch.size else self.k

    def distance(self, x: int, y: int) -> float:
        """Metric theta^N restricted to depth-k words (0 for equal words)"""
        if x == y:
            return 0.0
        return float(self.theta ** self.common_prefix(x, y))

    def label(self, index: int) -> str:
        """Readable word label, e.g. '12' (dot-separated when d >= 10)"""
        sep = "." if self.d >= 10 else ""
        return sep.join(str(s) for s in self.decode(index))

    def parse(self, label: str) -> int:
        """Inverse of label()"""
        parts = label.split(".") if self.d >= 10 else list(label)
        return self.encode([int(p) for p in parts])

    def with_depth(self, k: int) -> "CylinderSpace":
        return CylinderSpace(self.d, k, self.theta)

    def to_document(self) -> Dict[str, Any]:
        return {"d": self.d, "k": self.k, "theta": self.theta}

    @classmethod
    def from_document(cls, doc: Dict[str, Any]) -> "CylinderSpace":
        return cls(int(doc["d"]), int(doc["k"]), float(doc.get("theta", 0.5)))

    def __repr__(self):
        return f"<CylinderSpace(d={self.d}, k={self.k}, theta={self.theta})>"
