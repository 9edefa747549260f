"""
Pytest configuration and fixtures for the thermodynamic-formalism toolkit
Provides the worked two-state example, seeded random instances and settings isolation
"""

import os
import sys
from typing import Callable, Tuple

import numpy as np
import pytest

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.config import reset_settings
from models.cylinder_space import CylinderSpace
from models.fields import KernelField, Measure, PotentialField
from services.transfer_operator import random_normalized_kernel, random_potential

SQRT2 = float(np.sqrt(2.0))

# Two-state example with p1 = p2 = 1/2 and V = (0, 1)
EXAMPLE_LAMBDA = SQRT2 / 2.0
EXAMPLE_GAMMA = (1.0 + SQRT2 / 2.0, SQRT2 / 2.0)
EXAMPLE_STATIONARY = ((2.0 - SQRT2) / 4.0, (2.0 + SQRT2) / 4.0)


@pytest.fixture(autouse=True)
def fresh_settings():
    """Every test starts from the defaults file, whatever an earlier test overrode"""
    reset_settings()
    yield
    reset_settings()


@pytest.fixture
def binary_space() -> CylinderSpace:
    return CylinderSpace(2, 1)


@pytest.fixture
def example_kernel(binary_space) -> KernelField:
    """Stochastic matrix with p1 = p2 = 1/2"""
    return KernelField.from_matrix(binary_space, [[0.5, 0.5], [0.5, 0.5]])


@pytest.fixture
def example_potential(binary_space) -> PotentialField:
    return PotentialField(binary_space, [0.0, 1.0])


@pytest.fixture
def example_measure(binary_space) -> Measure:
    return Measure.uniform(binary_space)


def two_state_kernel(p1: float, p2: float) -> KernelField:
    """weight('1', 1) = 1 - p1, weight('1', 2) = p1, weight('2', 1) = p2, weight('2', 2) = 1 - p2"""
    return KernelField.from_matrix(CylinderSpace(2, 1), [[1.0 - p1, p1], [p2, 1.0 - p2]])


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


RandomInstance = Tuple[KernelField, PotentialField]


@pytest.fixture
def random_instance(rng) -> Callable[..., RandomInstance]:
    """Factory of (normalized kernel, potential) pairs on a given (d, k)"""

    def make(d: int = 2, k: int = 2, scale: float = 1.0) -> RandomInstance:
        space = CylinderSpace(d, k)
        return random_normalized_kernel(space, rng, scale), random_potential(space, rng, scale)

    return make
