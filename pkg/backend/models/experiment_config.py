"""
Experiment Config Models - schema of one experiment document (JSON)
One document describes the space, the a-priori kernel, the potential V and the
parameters of every command; the command itself is chosen on the command line
"""

import json
from pathlib import Path
from typing import Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from core.exceptions import ConfigValidationError


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SpaceSpec(StrictModel):
    """Depth-k cylinder space over d symbols"""

    d: int
    k: int
    theta: Optional[float] = None  # settings default when omitted


class PotentialSpec(StrictModel):
    """
    A depth-k function given by exactly one of:
    values (d^k entries in word-index order), first_symbols (d^m entries for the rule
    V(x) = table[x_1..x_m]), words (word label -> value, others take default) or constant
    """

    values: Optional[List[float]] = None
    first_symbols: Optional[List[float]] = None
    words: Optional[Dict[str, float]] = None
    constant: Optional[float] = None
    default: float = 0.0


class KernelSpec(StrictModel):
    """
    A-priori kernel, given either as a raw potential (normalized on load), as explicit
    weights per (word, symbol) or as the uniform kernel 1/d
    """

    raw: Optional[PotentialSpec] = None
    matrix: Optional[List[List[float]]] = None
    uniform: bool = False
    normalize: bool = True  # an explicit matrix whose rows do not sum to one is normalized


class CandidateSpec(StrictModel):
    """Admissible candidate (gamma, kernel) for the entropy command"""

    gamma: PotentialSpec
    kernel: Optional[KernelSpec] = None  # defaults to the a-priori kernel


class EntropyParams(StrictModel):
    candidate: Optional[CandidateSpec] = None  # defaults to the Gibbs chain of V


class PressureParams(StrictModel):
    audit_count: Optional[int] = None


class RateGrid(StrictModel):
    """Measures alpha * start + (1 - alpha) * end"""

    start: List[float]
    end: List[float]
    alphas: List[float]


class RateParams(StrictModel):
    measures: List[List[float]] = Field(default_factory=list)
    grid: Optional[RateGrid] = None
    tol: Optional[float] = None


class SimulateParams(StrictModel):
    T: float = 100.0
    x0: Optional[int] = None  # sampled from the stationary law when omitted
    chain: Literal["base", "gibbs"] = "base"


class McParams(StrictModel):
    T: float = 200.0
    n_traj: int = 10_000
    estimators: List[Literal["scgf", "entropy", "martingale"]] = Field(
        default_factory=lambda: ["scgf", "entropy", "martingale"]
    )
    observable: Optional[PotentialSpec] = None  # G of the martingale check, defaults to V


class AnnealParams(StrictModel):
    betas: List[float] = Field(default_factory=lambda: [0.0, 1.0, 2.0, 5.0, 10.0])
    T_per_stage: float = 50.0
    n_traj: int = 200


class Tolerances(StrictModel):
    """Optional overrides of the solver defaults"""

    eigen_tol: Optional[float] = None
    residual_tol: Optional[float] = None
    uniformization_tol: Optional[float] = None
    series_tol: Optional[float] = None
    gradient_tol: Optional[float] = None


class ExperimentConfig(StrictModel):
    """Complete experiment document"""

    space: SpaceSpec
    kernel: KernelSpec = Field(default_factory=lambda: KernelSpec(uniform=True))
    potential: PotentialSpec = Field(default_factory=lambda: PotentialSpec(constant=0.0))
    seed: int = 0
    entropy: EntropyParams = Field(default_factory=EntropyParams)
    pressure: PressureParams = Field(default_factory=PressureParams)
    rate: RateParams = Field(default_factory=RateParams)
    simulate: SimulateParams = Field(default_factory=SimulateParams)
    mc: McParams = Field(default_factory=McParams)
    anneal: AnnealParams = Field(default_factory=AnnealParams)
    tolerances: Tolerances = Field(default_factory=Tolerances)


def schema_diagnostics(error: ValidationError) -> List[str]:
    """One 'field.path: message' line per pydantic error"""
    lines = []
    for item in error.errors():
        path = ".".join(str(part) for part in item["loc"]) or "<document>"
        lines.append(f"{path}: {item['msg']}")
    return lines


def parse_experiment(document: Union[str, bytes, dict]) -> ExperimentConfig:
    """
    Parse an experiment document

    Raises:
        ConfigValidationError: malformed JSON or schema violations, with field paths
    """
    try:
        if isinstance(document, dict):
            return ExperimentConfig.model_validate(document)
        return ExperimentConfig.model_validate_json(document)
    except ValidationError as e:
        raise ConfigValidationError(schema_diagnostics(e)) from e


def load_experiment(path: Union[str, Path]) -> ExperimentConfig:
    """Read and parse an experiment document from disk"""
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigValidationError([f"<file>: cannot read {path}: {e}"]) from e
    try:
        json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigValidationError([f"<document>: invalid JSON ({e})"]) from e
    return parse_experiment(text)
