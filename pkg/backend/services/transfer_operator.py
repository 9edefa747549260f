"""
Transfer Operator Service - discrete-time Ruelle operator on depth-k cylinders
Normalization of potentials, discrete pressure, equilibrium measures and variation reports
"""

from dataclasses import dataclass
from typing import List, Tuple, Union
import logging

import numpy as np

from core.exceptions import ArgumentError, NumericError
from models.cylinder_space import CylinderSpace
from models.fields import (
    KernelField,
    Measure,
    PotentialField,
    require_same_space,
)
from services.power_iteration import dominant_eigenpair, dominant_left_eigenpair

logger = logging.getLogger(__name__)

RawPotential = Union[PotentialField, KernelField]


def as_kernel(raw: RawPotential) -> KernelField:
    """Jump weights of a raw potential (PotentialField) or an unnormalized kernel"""
    if isinstance(raw, KernelField):
        return raw
    if isinstance(raw, PotentialField):
        return KernelField.from_potential(raw)
    raise ArgumentError(f"expected PotentialField or KernelField, got {type(raw).__name__}")


def ruelle_apply(kernel: KernelField, f: PotentialField) -> PotentialField:
    """
    Ruelle operator: g(x) = sum_a weight(x, a) f(ax)

    Args:
        kernel: jump weights e^{A(ax)}
        f: depth-k function

    Returns:
        The depth-k function g
    """
    space = require_same_space(kernel, f)
    values = (kernel.weights * f.values[space.preimage_table]).sum(axis=1)
    return PotentialField(space, values)


@dataclass(frozen=True)
class DiscretePerron:
    """Dominant data of the transfer matrix of e^{raw}"""

    eigenvalue: float
    eigenfunction: PotentialField  # h > 0, max h = 1
    eigenmeasure: Measure  # nu, left eigenprobability
    residual: float


def discrete_perron(raw: RawPotential) -> DiscretePerron:
    """
    Spectral radius, right eigenfunction and left eigenprobability of the Ruelle operator

    Raises:
        NumericError: power iteration did not converge
    """
    kernel = as_kernel(raw)
    space = kernel.space
    matrix = kernel.transition_matrix()
    right = dominant_eigenpair(matrix)
    left = dominant_left_eigenpair(matrix)
    if abs(right.eigenvalue - left.eigenvalue) > 1e-11 * max(1.0, right.eigenvalue):
        raise NumericError(
            "left and right Perron eigenvalues disagree",
            residual=abs(right.eigenvalue - left.eigenvalue),
        )
    logger.debug(f"Discrete Perron on {space!r}: lambda={right.eigenvalue:.15g}")
    return DiscretePerron(
        eigenvalue=right.eigenvalue,
        eigenfunction=PotentialField(space, right.vector),
        eigenmeasure=Measure(space, left.vector),
        residual=max(right.residual, left.residual),
    )


def normalize(raw: RawPotential) -> KernelField:
    """
    Normalized kernel weight(x, a) = e^{raw(ax)} h(ax) / (lambda h(x))

    The result satisfies sum_a weight(x, a) = 1 and has discrete pressure 0.
    """
    kernel = as_kernel(raw)
    perron = discrete_perron(kernel)
    h = perron.eigenfunction.values
    table = kernel.space.preimage_table
    weights = kernel.weights * h[table] / (perron.eigenvalue * h[:, None])
    # Remove the last rounding error so the normalized flag holds exactly
    weights /= weights.sum(axis=1, keepdims=True)
    return KernelField(kernel.space, weights)


def discrete_pressure(raw: RawPotential) -> float:
    """Log of the dominant transfer eigenvalue"""
    kernel = as_kernel(raw)
    if kernel.is_normalized:
        # The all-ones vector is the Perron vector, so the pressure is log 1
        return float(np.log(kernel.row_sums.mean()))
    return float(np.log(discrete_perron(kernel).eigenvalue))


def equilibrium_measure(kernel: KernelField) -> Measure:
    """
    Stationary law of the word chain x -> ax with probability weight(x, a)

    This is the depth-k cylinder marginal of the shift-invariant equilibrium state.
    """
    if not kernel.is_normalized:
        raise ArgumentError("equilibrium_measure needs a normalized kernel")
    left = dominant_left_eigenpair(kernel.transition_matrix())
    measure = Measure(kernel.space, left.vector)
    gap = measure.shift_consistency_gap()
    if gap > 1e-10:
        raise NumericError("equilibrium measure is not shift consistent", residual=gap)
    return measure


def dual_step(kernel: KernelField, measure: Measure) -> Measure:
    """One step of the dual word chain: mass at x moves to ax with weight(x, a)"""
    space = require_same_space(kernel, measure)
    mass = np.zeros(space.size)
    np.add.at(
        mass,
        space.preimage_table.ravel(),
        (measure.mass[:, None] * kernel.weights).ravel(),
    )
    return Measure(space, mass)


def variation(f: PotentialField, j: int) -> float:
    """max |f(x) - f(y)| over word pairs agreeing on the first j symbols"""
    space = f.space
    if not 0 <= j <= space.k:
        raise ArgumentError(f"variation order j must lie in 0..{space.k}, got {j}")
    # Words sharing the first j symbols share index mod d^j
    groups = f.values.reshape(space.d ** (space.k - j), space.d**j)
    return float((groups.max(axis=0) - groups.min(axis=0)).max())


def variation_report(f: PotentialField) -> Tuple[List[float], float]:
    """
    Variation sequence var_0..var_k and the Lipschitz bound max_j var_j / theta^j

    Returns:
        Tuple of (variations, lipschitz_bound)
    """
    space = f.space
    variations = [variation(f, j) for j in range(space.k + 1)]
    bound = max(v / space.theta**j for j, v in enumerate(variations))
    return variations, float(bound)


def lipschitz_constant(f: PotentialField) -> float:
    return variation_report(f)[1]


def random_potential(
    space: CylinderSpace, rng: np.random.Generator, scale: float = 1.0
) -> PotentialField:
    """Potential with independent uniform[-scale, scale] values"""
    return PotentialField(space, rng.uniform(-scale, scale, size=space.size))


def random_normalized_kernel(
    space: CylinderSpace, rng: np.random.Generator, scale: float = 1.0
) -> KernelField:
    return normalize(random_potential(space, rng, scale))
