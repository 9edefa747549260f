"""
Field Models - potentials, jump kernels and measures on depth-k cylinders
All fields are immutable: their arrays are copied and frozen on construction
"""

from dataclasses import dataclass
from typing import Any, Dict, Mapping, Sequence, Union

import numpy as np

from core.exceptions import ArgumentError
from models.cylinder_space import CylinderSpace

NORMALIZATION_TOL = 1e-12
PROBABILITY_TOL = 1e-12
SHIFT_CONSISTENCY_TOL = 1e-10


def _frozen(values: Any, shape: tuple, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.shape != shape:
        raise ArgumentError(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ArgumentError(f"{name} must be finite everywhere")
    arr.setflags(write=False)
    return arr


def require_same_space(*items: Any) -> CylinderSpace:
    """Return the common space of the given fields or raise ArgumentError"""
    spaces = {item.space for item in items}
    if len(spaces) != 1:
        raise ArgumentError(f"space mismatch: {sorted(map(repr, spaces))}")
    return spaces.pop()


@dataclass(frozen=True, eq=False)
class PotentialField:
    """Real-valued function on depth-k words (potential or observable)"""

    space: CylinderSpace
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "values", _frozen(self.values, (self.space.size,), "potential values")
        )

    @classmethod
    def constant(cls, space: CylinderSpace, c: float) -> "PotentialField":
        return cls(space, np.full(space.size, float(c)))

    @classmethod
    def first_symbols(
        cls, space: CylinderSpace, table: Sequence[float]
    ) -> "PotentialField":
        """
        Potential depending on the first m symbols only

        The table has d^m entries in little-endian order of the first m symbols.
        """
        table = np.asarray(table, dtype=float)
        m = 0
        while space.d**m < table.size:
            m += 1
        if space.d**m != table.size or m > space.k:
            raise ArgumentError(
                f"first-symbols table of length {table.size} is not d^m with m <= k"
            )
        return cls(space, table[np.arange(space.size) % space.d**m])

    @classmethod
    def indicator(cls, space: CylinderSpace, index: int) -> "PotentialField":
        values = np.zeros(space.size)
        values[index] = 1.0
        return cls(space, values)

    @classmethod
    def from_words(
        cls, space: CylinderSpace, mapping: Mapping[str, float], default: float = 0.0
    ) -> "PotentialField":
        values = np.full(space.size, float(default))
        for label, value in mapping.items():
            values[space.parse(label)] = value
        return cls(space, values)

    def __call__(self, index: int) -> float:
        return float(self.values[index])

    def max(self) -> float:
        return float(self.values.max())

    def min(self) -> float:
        return float(self.values.min())

    def _operand(self, other: Union["PotentialField", float]) -> Any:
        if isinstance(other, PotentialField):
            require_same_space(self, other)
            return other.values
        return float(other)

    def __add__(self, other):
        return PotentialField(self.space, self.values + self._operand(other))

    __radd__ = __add__

    def __sub__(self, other):
        return PotentialField(self.space, self.values - self._operand(other))

    def __mul__(self, other):
        return PotentialField(self.space, self.values * self._operand(other))

    __rmul__ = __mul__

    def __neg__(self):
        return PotentialField(self.space, -self.values)

    def to_document(self) -> Dict[str, Any]:
        return {**self.space.to_document(), "values": self.values.tolist()}

    @classmethod
    def from_document(cls, doc: Dict[str, Any]) -> "PotentialField":
        return cls(CylinderSpace.from_document(doc), doc["values"])

    def __repr__(self):
        return f"<PotentialField({self.space!r}, min={self.min():.4g}, max={self.max():.4g})>"


@dataclass(frozen=True, eq=False)
class KernelField:
    """
    Positive jump weights e^{B(ax)} indexed by (parent word x, symbol a)

    weights[x, a-1] is the weight of the jump from x to its preimage ax.
    """

    space: CylinderSpace
    weights: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.weights, (self.space.size, self.space.d), "kernel weights")
        if np.any(arr <= 0.0):
            raise ArgumentError("kernel weights must be strictly positive")
        object.__setattr__(self, "weights", arr)

    @classmethod
    def from_potential(cls, raw: PotentialField) -> "KernelField":
        """Weights e^{raw(ax)} of an unnormalized potential"""
        return cls(raw.space, np.exp(raw.values[raw.space.preimage_table]))

    @classmethod
    def from_log_weights(cls, space: CylinderSpace, log_weights: Any) -> "KernelField":
        return cls(space, np.exp(np.asarray(log_weights, dtype=float)))

    @classmethod
    def from_matrix(
        cls, space: CylinderSpace, rows: Sequence[Sequence[float]]
    ) -> "KernelField":
        """Explicit weights, one row per word in index order, one column per symbol"""
        return cls(space, np.asarray(rows, dtype=float))

    @classmethod
    def uniform(cls, space: CylinderSpace) -> "KernelField":
        return cls(space, np.full((space.size, space.d), 1.0 / space.d))

    @property
    def log_weights(self) -> np.ndarray:
        return np.log(self.weights)

    @property
    def row_sums(self) -> np.ndarray:
        return self.weights.sum(axis=1)

    @property
    def is_normalized(self) -> bool:
        return bool(np.all(np.abs(self.row_sums - 1.0) <= NORMALIZATION_TOL))

    def weight(self, index: int, symbol: int) -> float:
        return float(self.weights[index, symbol - 1])

    def transition_matrix(self) -> np.ndarray:
        """Dense word-to-word matrix with entry (x, ax) = weight(x, a)"""
        n = self.space.size
        matrix = np.zeros((n, n))
        rows = np.repeat(np.arange(n), self.space.d)
        np.add.at(matrix, (rows, self.space.preimage_table.ravel()), self.weights.ravel())
        return matrix

    def to_potential(self) -> PotentialField:
        """Equivalent depth-(k+1) potential: value at (a, x_1..x_k) is log weight(x, a)"""
        deeper = self.space.with_depth(self.space.k + 1)
        values = np.empty(deeper.size)
        index = np.arange(self.space.d)[None, :] + self.space.d * np.arange(
            self.space.size
        )[:, None]
        values[index.ravel()] = self.log_weights.ravel()
        return PotentialField(deeper, values)

    def to_document(self) -> Dict[str, Any]:
        return {**self.space.to_document(), "weights": self.weights.tolist()}

    @classmethod
    def from_document(cls, doc: Dict[str, Any]) -> "KernelField":
        return cls(CylinderSpace.from_document(doc), doc["weights"])

    def __repr__(self):
        return f"<KernelField({self.space!r}, normalized={self.is_normalized})>"


@dataclass(frozen=True, eq=False)
class Measure:
    """Nonnegative mass on depth-k words"""

    space: CylinderSpace
    mass: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.mass, (self.space.size,), "measure mass")
        if np.any(arr < 0.0):
            raise ArgumentError("measure mass must be nonnegative")
        object.__setattr__(self, "mass", arr)

    @classmethod
    def from_weights(cls, space: CylinderSpace, weights: Any) -> "Measure":
        """Normalize nonnegative weights to a probability"""
        arr = np.clip(np.asarray(weights, dtype=float), 0.0, None)
        total = arr.sum()
        if not total > 0.0:
            raise ArgumentError("cannot normalize a measure with zero total mass")
        return cls(space, arr / total)

    @classmethod
    def uniform(cls, space: CylinderSpace) -> "Measure":
        return cls(space, np.full(space.size, 1.0 / space.size))

    @classmethod
    def dirac(cls, space: CylinderSpace, index: int) -> "Measure":
        mass = np.zeros(space.size)
        mass[index] = 1.0
        return cls(space, mass)

    def __call__(self, index: int) -> float:
        return float(self.mass[index])

    @property
    def total(self) -> float:
        return float(self.mass.sum())

    @property
    def is_probability(self) -> bool:
        return abs(self.total - 1.0) <= PROBABILITY_TOL

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.mass > 0.0)

    def integrate(self, f: PotentialField) -> float:
        require_same_space(self, f)
        return float(np.dot(self.mass, f.values))

    def total_variation(self, other: "Measure") -> float:
        require_same_space(self, other)
        return 0.5 * float(np.abs(self.mass - other.mass).sum())

    def mix(self, other: "Measure", alpha: float) -> "Measure":
        require_same_space(self, other)
        return Measure(self.space, alpha * self.mass + (1.0 - alpha) * other.mass)

    def drop_first_marginal(self) -> np.ndarray:
        """Depth-(k-1) marginal obtained by summing out the first symbol"""
        n_tail = self.space.d ** (self.space.k - 1)
        return self.mass.reshape(n_tail, self.space.d).sum(axis=1)

    def drop_last_marginal(self) -> np.ndarray:
        """Depth-(k-1) marginal obtained by summing out the last symbol"""
        n_head = self.space.d ** (self.space.k - 1)
        return self.mass.reshape(self.space.d, n_head).sum(axis=0)

    def shift_consistency_gap(self) -> float:
        return float(np.abs(self.drop_first_marginal() - self.drop_last_marginal()).max())

    def is_shift_consistent(self) -> bool:
        return self.shift_consistency_gap() <= SHIFT_CONSISTENCY_TOL

    def to_document(self) -> Dict[str, Any]:
        return {**self.space.to_document(), "mass": self.mass.tolist()}

    @classmethod
    def from_document(cls, doc: Dict[str, Any]) -> "Measure":
        return cls(CylinderSpace.from_document(doc), doc["mass"])

    def __repr__(self):
        return f"<Measure({self.space!r}, total={self.total:.12g})>"
