"""
Rate Function Models - results of the level-2 rate-function optimizers
"""

from dataclasses import dataclass
from typing import Any, Dict, Optional

from models.cylinder_space import CylinderSpace
from models.fields import Measure, PotentialField

PRIMAL = "primal"
DUAL = "dual"


@dataclass(frozen=True, eq=False)
class RateFunctionResult:
    """
    Value of I(nu) with the optimizer that produced it

    The primal route stores g = log u of the minimizing u, the dual route the maximizing
    potential V. attained is False when the optimum is only approached (measures with
    zero mass on some word), in which case value is the best bound reached.
    """

    value: float
    route: str  # "primal" or "dual"
    potential: PotentialField
    iterations: int
    gradient_norm: float
    attained: bool = True
    equilibrium: Optional[Measure] = None  # mu_{B_V, gamma_V} at the dual maximizer

    @property
    def space(self) -> CylinderSpace:
        return self.potential.space

    @property
    def minimizer_g(self) -> Optional[PotentialField]:
        return self.potential if self.route == PRIMAL else None

    @property
    def maximizer_V(self) -> Optional[PotentialField]:
        return self.potential if self.route == DUAL else None

    def to_document(self) -> Dict[str, Any]:
        doc = {
            **self.space.to_document(),
            "value": self.value,
            "route": self.route,
            "potential": self.potential.values.tolist(),
            "iterations": self.iterations,
            "gradient_norm": self.gradient_norm,
            "attained": self.attained,
        }
        if self.equilibrium is not None:
            doc["equilibrium"] = self.equilibrium.mass.tolist()
        return doc

    @classmethod
    def from_document(cls, doc: Dict[str, Any]) -> "RateFunctionResult":
        space = CylinderSpace.from_document(doc)
        equilibrium = doc.get("equilibrium")
        return cls(
            value=float(doc["value"]),
            route=doc["route"],
            potential=PotentialField(space, doc["potential"]),
            iterations=int(doc["iterations"]),
            gradient_norm=float(doc["gradient_norm"]),
            attained=bool(doc.get("attained", True)),
            equilibrium=None if equilibrium is None else Measure(space, equilibrium),
        )

    def __repr__(self):
        flag = "" if self.attained else ", unattained"
        return f"<RateFunctionResult({self.route}, I={self.value:.10g}{flag})>"
