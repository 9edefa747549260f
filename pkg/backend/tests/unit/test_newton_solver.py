"""
Unit tests for the damped Newton solver
"""

import numpy as np
import pytest

from core.config import NewtonConfig, get_settings
from services.newton_solver import NewtonSolver, get_newton_solver


def quadratic(matrix: np.ndarray, target: np.ndarray):
    def objective(x):
        return 0.5 * float(x @ matrix @ x) - float(target @ x)

    def gradient(x):
        return matrix @ x - target

    return objective, gradient


class TestNewtonSolver:

    @pytest.mark.unit
    @pytest.mark.ldp
    def test_quadratic_in_one_step(self):
        matrix = np.array([[3.0, 1.0], [1.0, 2.0]])
        target = np.array([1.0, -1.0])
        objective, gradient = quadratic(matrix, target)
        result = NewtonSolver().minimize(objective, gradient, np.zeros(2), hessian=lambda x: matrix)
        assert result.converged
        assert result.iterations == 1
        assert np.allclose(result.x, np.linalg.solve(matrix, target))

    @pytest.mark.unit
    @pytest.mark.ldp
    def test_finite_difference_hessian(self):
        matrix = np.array([[3.0, 1.0], [1.0, 2.0]])
        _, gradient = quadratic(matrix, np.zeros(2))
        hessian = NewtonSolver().finite_difference_hessian(gradient, np.array([0.3, -0.2]))
        assert np.allclose(hessian, matrix, atol=1e-8)

    @pytest.mark.unit
    @pytest.mark.ldp
    def test_smooth_convex_objective(self):
        """log-sum-exp plus a linear term, minimized by a softmax match"""
        target = np.array([0.2, 0.5, 0.3])

        def objective(x):
            return float(np.log(np.exp(x).sum()) - target @ x)

        def gradient(x):
            p = np.exp(x - x.max())
            return p / p.sum() - target

        # gauge: fix the first coordinate at zero
        result = NewtonSolver().minimize(
            lambda z: objective(np.concatenate(([0.0], z))),
            lambda z: gradient(np.concatenate(([0.0], z)))[1:],
            np.zeros(2),
        )
        assert result.converged
        full = np.concatenate(([0.0], result.x))
        assert np.allclose(np.exp(full) / np.exp(full).sum(), target, atol=1e-9)
        assert result.history[-1] == result.gradient_norm

    @pytest.mark.unit
    @pytest.mark.ldp
    def test_iteration_cap(self):
        def objective(x):
            return float(np.exp(x[0]))

        def gradient(x):
            return np.exp(x)

        result = NewtonSolver().minimize(objective, gradient, np.zeros(1), max_iterations=5)
        assert not result.converged
        assert result.iterations == 5
        assert result.value < 1.0

    @pytest.mark.unit
    @pytest.mark.ldp
    def test_empty_problem(self):
        result = NewtonSolver().minimize(lambda x: 0.0, lambda x: np.zeros(0), np.zeros(0))
        assert result.converged
        assert result.iterations == 0

    @pytest.mark.unit
    @pytest.mark.ldp
    def test_config_sources(self):
        custom = NewtonSolver(NewtonConfig(gradient_tol=1e-3))
        assert custom.config.gradient_tol == 1e-3
        get_settings().newton.gradient_tol = 1e-6
        assert get_newton_solver().config.gradient_tol == 1e-6
