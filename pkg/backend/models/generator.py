"""
Generator Models - continuous-time generators and Perron solutions
GeneratorMatrix acts as gamma(x) * sum_a kernel(x, a) [f(ax) - f(x)]
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Dict, List

import numpy as np

from core.exceptions import ArgumentError
from models.cylinder_space import CylinderSpace
from models.fields import KernelField, Measure, PotentialField, require_same_space


@dataclass(frozen=True, eq=False)
class GeneratorMatrix:
    """Generator with positive rate function gamma and normalized kernel"""

    rate: PotentialField
    kernel: KernelField

    def __post_init__(self):
        require_same_space(self.rate, self.kernel)
        if self.rate.min() <= 0.0:
            raise ArgumentError("generator rates must be strictly positive")
        if not self.kernel.is_normalized:
            raise ArgumentError("generator kernel must be normalized")

    @classmethod
    def unit_rate(cls, kernel: KernelField) -> "GeneratorMatrix":
        """The a-priori generator L = L_A - I"""
        return cls(PotentialField.constant(kernel.space, 1.0), kernel)

    @property
    def space(self) -> CylinderSpace:
        return self.kernel.space

    @cached_property
    def matrix(self) -> np.ndarray:
        """Dense matrix Q with (Q f)(x) = rate(x) sum_a kernel(x, a) [f(ax) - f(x)]"""
        jumps = self.kernel.transition_matrix()
        matrix = self.rate.values[:, None] * (jumps - np.eye(self.space.size))
        matrix.setflags(write=False)
        return matrix

    @property
    def max_rate(self) -> float:
        return self.rate.max()

    def row_sum_defect(self) -> float:
        return float(np.abs(self.matrix.sum(axis=1)).max())

    def __repr__(self):
        return f"<GeneratorMatrix({self.space!r}, max_rate={self.max_rate:.4g})>"


@dataclass(frozen=True, eq=False)
class PerronSolution:
    """Dominant eigen-data of L + V"""

    eigenvalue: float  # lambda_V, units 1/time
    eigenfunction: PotentialField  # F > 0, max F = 1
    eigenprobability: Measure  # nu_V
    residual_right: float
    residual_left: float
    shift: float = 0.0  # uniformization constant c used by the solve
    iterations: int = 0
    history: List[float] = field(default_factory=list)

    @property
    def space(self) -> CylinderSpace:
        return self.eigenfunction.space

    @property
    def positivity_ratio(self) -> float:
        """min F / max F, bounded away from 0 for a healthy solve"""
        return self.eigenfunction.min() / self.eigenfunction.max()

    def to_document(self) -> Dict[str, Any]:
        return {
            **self.space.to_document(),
            "lambda": self.eigenvalue,
            "F": self.eigenfunction.values.tolist(),
            "nu": self.eigenprobability.mass.tolist(),
            "residuals": {"right": self.residual_right, "left": self.residual_left},
            "positivity_ratio": self.positivity_ratio,
            "shift": self.shift,
            "iterations": self.iterations,
        }

    @classmethod
    def from_document(cls, doc: Dict[str, Any]) -> "PerronSolution":
        space = CylinderSpace.from_document(doc)
        return cls(
            eigenvalue=float(doc["lambda"]),
            eigenfunction=PotentialField(space, doc["F"]),
            eigenprobability=Measure(space, doc["nu"]),
            residual_right=float(doc["residuals"]["right"]),
            residual_left=float(doc["residuals"]["left"]),
            shift=float(doc.get("shift", 0.0)),
            iterations=int(doc.get("iterations", 0)),
        )

    def __repr__(self):
        return (
            f"<PerronSolution(lambda={self.eigenvalue:.10g}, "
            f"residuals=({self.residual_right:.1e}, {self.residual_left:.1e}))>"
        )
