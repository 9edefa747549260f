"""
Power Iteration Service - dominant eigenpair of nonnegative primitive matrices
Iterates with a repeatedly squared copy of the matrix, then measures the eigenvalue
and residual against the original matrix on every step
"""

from dataclasses import dataclass, field
from typing import List, Optional
import logging

import numpy as np

from core.config import PowerIterationConfig, get_settings
from core.exceptions import ArgumentError, NumericError

logger = logging.getLogger(__name__)

HISTORY_LENGTH = 64


@dataclass
class PowerIterationResult:
    """Dominant eigenpair of a nonnegative matrix"""

    eigenvalue: float
    vector: np.ndarray  # nonnegative, max entry 1
    iterations: int
    residual: float  # ||A v - rho v||_inf / (rho ||v||_inf)
    history: List[float] = field(default_factory=list)


class PowerIteration:
    """Power iteration with normalization each step"""

    def __init__(self, config: Optional[PowerIterationConfig] = None):
        self._config = config

    @property
    def config(self) -> PowerIterationConfig:
        return self._config or get_settings().power

    def _accelerator(self, matrix: np.ndarray) -> np.ndarray:
        power = matrix / matrix.max()
        for _ in range(self.config.squarings):
            power = power @ power
            power /= power.max()
        return power

    def dominant(
        self, matrix: np.ndarray, start: Optional[np.ndarray] = None
    ) -> PowerIterationResult:
        """
        Dominant (Perron) eigenpair of a nonnegative matrix acting on column vectors

        Args:
            matrix: square nonnegative matrix, assumed primitive
            start: optional positive starting vector

        Returns:
            PowerIterationResult with the right eigenvector scaled to max 1
        """
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ArgumentError(f"expected a square matrix, got shape {matrix.shape}")
        if np.any(matrix < 0.0) or not np.all(np.isfinite(matrix)):
            raise ArgumentError("power iteration needs a finite nonnegative matrix")
        if not matrix.max() > 0.0:
            raise ArgumentError("power iteration needs a nonzero matrix")

        n = matrix.shape[0]
        accelerator = self._accelerator(matrix)
        vector = np.ones(n) if start is None else np.asarray(start, dtype=float).copy()
        vector /= vector.max()

        history: List[float] = []
        previous = np.inf
        residual = np.inf
        for iteration in range(1, self.config.max_iterations + 1):
            vector = accelerator @ vector
            vector /= vector.max()
            image = matrix @ vector
            rho = float(np.dot(image, vector) / np.dot(vector, vector))
            residual = float(np.abs(image - rho * vector).max() / (rho * vector.max()))
            history.append(rho)
            if len(history) > HISTORY_LENGTH:
                history.pop(0)

            converged = (
                abs(rho - previous) <= self.config.eigen_tol * max(1.0, abs(rho))
                and residual <= self.config.residual_tol
            )
            if converged:
                logger.debug(
                    f"Power iteration converged after {iteration} steps: "
                    f"rho={rho:.15g}, residual={residual:.2e}"
                )
                return PowerIterationResult(rho, vector, iteration, residual, history)
            previous = rho
            vector = image / image.max()

        raise NumericError(
            f"power iteration did not converge in {self.config.max_iterations} steps",
            residual=residual,
            history=history,
        )


# Global solver instance; it reads the current settings on every call
_power_iteration: Optional[PowerIteration] = None


def get_power_iteration() -> PowerIteration:
    """Get global power iteration instance"""
    global _power_iteration
    if _power_iteration is None:
        _power_iteration = PowerIteration()
    return _power_iteration


def dominant_eigenpair(
    matrix: np.ndarray, start: Optional[np.ndarray] = None
) -> PowerIterationResult:
    """Right Perron eigenpair of a nonnegative matrix"""
    return get_power_iteration().dominant(matrix, start)


def dominant_left_eigenpair(
    matrix: np.ndarray, start: Optional[np.ndarray] = None
) -> PowerIterationResult:
    """Left Perron eigenpair; the returned vector is scaled to total mass 1"""
    result = get_power_iteration().dominant(np.asarray(matrix).T, start)
    result.vector = result.vector / result.vector.sum()
    return result
