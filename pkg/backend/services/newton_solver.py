"""
Newton Solver Service - damped Newton minimization with an Armijo line search
Falls back to steepest descent when the Newton direction is not a descent direction
"""

from dataclasses import dataclass, field
from typing import Callable, List, Optional
import logging

import numpy as np

from core.config import NewtonConfig, get_settings

logger = logging.getLogger(__name__)

Objective = Callable[[np.ndarray], float]
Gradient = Callable[[np.ndarray], np.ndarray]
Hessian = Callable[[np.ndarray], np.ndarray]

MIN_STEP = 1e-20


@dataclass
class NewtonResult:
    """Outcome of a minimization run"""

    x: np.ndarray
    value: float
    gradient_norm: float
    iterations: int
    converged: bool
    history: List[float] = field(default_factory=list)  # gradient norms


class NewtonSolver:
    """Damped Newton method for smooth convex objectives"""

    def __init__(self, config: Optional[NewtonConfig] = None):
        self._config = config

    @property
    def config(self) -> NewtonConfig:
        return self._config or get_settings().newton

    def finite_difference_hessian(self, gradient: Gradient, x: np.ndarray) -> np.ndarray:
        """Symmetrized central differences of the gradient"""
        h = self.config.hessian_step
        columns = []
        for j in range(x.size):
            step = np.zeros_like(x)
            step[j] = h
            columns.append((gradient(x + step) - gradient(x - step)) / (2.0 * h))
        hessian = np.column_stack(columns) if columns else np.zeros((0, 0))
        return 0.5 * (hessian + hessian.T)

    def _direction(self, grad: np.ndarray, hessian: np.ndarray) -> np.ndarray:
        try:
            direction = -np.linalg.solve(hessian, grad)
        except np.linalg.LinAlgError:
            return -grad
        if not np.all(np.isfinite(direction)) or np.dot(direction, grad) >= 0.0:
            return -grad
        return direction

    def _line_search(
        self, objective: Objective, x: np.ndarray, value: float, grad: np.ndarray, direction: np.ndarray
    ) -> Optional[np.ndarray]:
        slope = float(np.dot(grad, direction))
        t = 1.0
        while t >= MIN_STEP:
            candidate = x + t * direction
            trial = objective(candidate)
            if np.isfinite(trial) and trial <= value + self.config.armijo * t * slope:
                return candidate
            t *= self.config.backtrack
        return None

    def minimize(
        self,
        objective: Objective,
        gradient: Gradient,
        x0: np.ndarray,
        hessian: Optional[Hessian] = None,
        max_iterations: Optional[int] = None,
    ) -> NewtonResult:
        """
        Minimize a smooth convex objective

        Args:
            objective: function to minimize
            gradient: its exact gradient
            x0: start point
            hessian: exact Hessian; central differences of the gradient when None
            max_iterations: iteration cap, settings default when None

        Returns:
            NewtonResult; converged is True when the gradient sup-norm reached gradient_tol
        """
        cap = self.config.max_iterations if max_iterations is None else max_iterations
        x = np.array(x0, dtype=float)
        value = objective(x)
        grad = gradient(x)
        norm = float(np.abs(grad).max()) if grad.size else 0.0
        history = [norm]

        iteration = 0
        while norm > self.config.gradient_tol and iteration < cap:
            iteration += 1
            curvature = hessian(x) if hessian is not None else self.finite_difference_hessian(gradient, x)
            direction = self._direction(grad, curvature)
            candidate = self._line_search(objective, x, value, grad, direction)
            if candidate is None and not np.array_equal(direction, -grad):
                candidate = self._line_search(objective, x, value, grad, -grad)
            if candidate is None:
                # Objective decrease below rounding: accept the Newton step if it shrinks the gradient
                trial = x + direction
                if not np.isfinite(objective(trial)) or np.abs(gradient(trial)).max() >= norm:
                    logger.debug(f"Newton stalled at iteration {iteration}, gradient {norm:.2e}")
                    break
                candidate = trial
            x = candidate
            value = objective(x)
            grad = gradient(x)
            norm = float(np.abs(grad).max())
            history.append(norm)

        converged = norm <= self.config.gradient_tol
        logger.debug(f"Newton finished after {iteration} iterations, gradient {norm:.2e}")
        return NewtonResult(x, float(value), norm, iteration, converged, history)


# Global solver instance
_newton_solver: Optional[NewtonSolver] = None


def get_newton_solver() -> NewtonSolver:
    """Get global Newton solver instance"""
    global _newton_solver
    if _newton_solver is None:
        _newton_solver = NewtonSolver()
    return _newton_solver
