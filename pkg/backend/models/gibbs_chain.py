"""
Gibbs Chain Models - continuous-time Gibbs chain for a potential V and admissible chains
An admissible chain is generated by gamma (L_B - I) with gamma > 0 and B normalized
"""

from dataclasses import dataclass
from typing import Any, Dict

import numpy as np

from core.exceptions import ArgumentError
from models.cylinder_space import CylinderSpace
from models.fields import KernelField, Measure, PotentialField, require_same_space
from models.generator import GeneratorMatrix, PerronSolution

STATIONARITY_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class AdmissibleCandidate:
    """Admissible chain (gamma_tilde, kernel_tilde) with its stationary law"""

    gamma_tilde: PotentialField
    kernel_tilde: KernelField
    stationary_tilde: Measure

    def __post_init__(self):
        require_same_space(self.gamma_tilde, self.kernel_tilde, self.stationary_tilde)
        if self.gamma_tilde.min() <= 0.0:
            raise ArgumentError("candidate rates must be strictly positive")
        if not self.kernel_tilde.is_normalized:
            raise ArgumentError("candidate kernel must be normalized")
        defect = self.stationarity_defect()
        if defect > STATIONARITY_TOL:
            raise ArgumentError(f"candidate measure is not stationary (defect {defect:.2e})")

    @property
    def space(self) -> CylinderSpace:
        return self.kernel_tilde.space

    @property
    def generator(self) -> GeneratorMatrix:
        return GeneratorMatrix(self.gamma_tilde, self.kernel_tilde)

    def stationarity_defect(self) -> float:
        """max over basis functions of |int L f dmu|, i.e. the sup-norm of mu Q"""
        matrix = GeneratorMatrix(self.gamma_tilde, self.kernel_tilde).matrix
        return float(np.abs(self.stationary_tilde.mass @ matrix).max())

    def to_document(self) -> Dict[str, Any]:
        return {
            **self.space.to_document(),
            "gamma": self.gamma_tilde.values.tolist(),
            "kernel": self.kernel_tilde.weights.tolist(),
            "stationary": self.stationary_tilde.mass.tolist(),
        }

    @classmethod
    def from_document(cls, doc: Dict[str, Any]) -> "AdmissibleCandidate":
        space = CylinderSpace.from_document(doc)
        return cls(
            PotentialField(space, doc["gamma"]),
            KernelField(space, doc["kernel"]),
            Measure(space, doc["stationary"]),
        )


@dataclass(frozen=True, eq=False)
class GibbsChain:
    """
    Continuous-time Gibbs chain for V

    gamma = 1 - V + lambda_V, kernel_V(x, a) = weight_A(x, a) F(ax) / (gamma(x) F(x)),
    stationary law proportional to equilibrium_measure(kernel_V) / gamma.
    """

    base: KernelField
    V: PotentialField
    solution: PerronSolution
    gamma: PotentialField
    kernel_V: KernelField
    stationary: Measure

    @property
    def space(self) -> CylinderSpace:
        return self.base.space

    @property
    def eigenvalue(self) -> float:
        return self.solution.eigenvalue

    @property
    def generator(self) -> GeneratorMatrix:
        return GeneratorMatrix(self.gamma, self.kernel_V)

    def as_candidate(self) -> AdmissibleCandidate:
        return AdmissibleCandidate(self.gamma, self.kernel_V, self.stationary)

    def to_document(self) -> Dict[str, Any]:
        return {
            **self.space.to_document(),
            "base": self.base.weights.tolist(),
            "V": self.V.values.tolist(),
            "solution": self.solution.to_document(),
            "gamma": self.gamma.values.tolist(),
            "kernel_V": self.kernel_V.weights.tolist(),
            "stationary": self.stationary.mass.tolist(),
        }

    @classmethod
    def from_document(cls, doc: Dict[str, Any]) -> "GibbsChain":
        space = CylinderSpace.from_document(doc)
        return cls(
            base=KernelField(space, doc["base"]),
            V=PotentialField(space, doc["V"]),
            solution=PerronSolution.from_document(doc["solution"]),
            gamma=PotentialField(space, doc["gamma"]),
            kernel_V=KernelField(space, doc["kernel_V"]),
            stationary=Measure(space, doc["stationary"]),
        )

    def __repr__(self):
        return f"<GibbsChain({self.space!r}, lambda={self.eigenvalue:.10g})>"
