"""
Semigroup Service - continuous-time layer on depth-k cylinders
Generators, the perturbed semigroup e^{T(L+V)} by uniformization, the continuous-time
Perron-Frobenius solve and the Dirichlet form / adjoint constructions
"""

from dataclasses import dataclass
from typing import Optional, Tuple
import logging

import numpy as np
from scipy.stats import poisson

from core.config import get_settings
from core.exceptions import (
    ArgumentError,
    InternalConsistencyError,
    NumericError,
)
from models.fields import KernelField, Measure, PotentialField, require_same_space
from models.generator import GeneratorMatrix, PerronSolution
from services.power_iteration import dominant_eigenpair, dominant_left_eigenpair
from services.transfer_operator import dual_step, lipschitz_constant

logger = logging.getLogger(__name__)

EIGEN_EQUATION_TOL = 1e-9
INTEGRAL_IDENTITY_TOL = 1e-10
LEFT_RIGHT_TOL = 1e-11
STATIONARITY_TOL = 1e-10
DIRICHLET_TOL = 1e-12


def generator_apply(gen: GeneratorMatrix, f: PotentialField) -> PotentialField:
    """g(x) = rate(x) sum_a kernel(x, a) [f(ax) - f(x)]"""
    space = require_same_space(gen.kernel, f)
    jumps = (gen.kernel.weights * f.values[space.preimage_table]).sum(axis=1)
    return PotentialField(space, gen.rate.values * (jumps - f.values))


def uniformization_constant(gen: GeneratorMatrix, V: PotentialField) -> float:
    """c = max(rate) + max(0, -min V) + 1, making (L + V)/c + I nonnegative"""
    return gen.max_rate + max(0.0, -V.min()) + 1.0


def perturbed_matrix(gen: GeneratorMatrix, V: PotentialField) -> np.ndarray:
    """Dense matrix of L + V"""
    require_same_space(gen.kernel, V)
    return gen.matrix + np.diag(V.values)


def poisson_truncation(mean: float, growth: float, scale: float, tol: float) -> int:
    """
    Smallest N with scale * e^{growth} * P(Poisson(mean) > N) <= tol

    Args:
        mean: Poisson mean of the series weights
        growth: log of the worst-case growth factor of the iterated terms
        scale: sup-norm of the vector the series acts on
        tol: target truncation error
    """
    if scale == 0.0 or mean == 0.0:
        return 0
    log_target = np.log(tol) - np.log(scale) - growth
    n = int(mean)
    while poisson.logsf(n, mean) > log_target:
        n += 1
    return n


def _uniformized(
    gen: GeneratorMatrix, V: PotentialField, vector: np.ndarray, T: float, tol: float, left: bool
) -> np.ndarray:
    if T < 0:
        raise ArgumentError(f"time horizon must be nonnegative, got {T}")
    if tol <= 0:
        raise ArgumentError(f"tolerance must be positive, got {tol}")
    if T == 0:
        return vector.copy()

    c = uniformization_constant(gen, V)
    iteration = perturbed_matrix(gen, V) / c + np.eye(gen.space.size)
    if left:
        iteration = iteration.T
    growth = max(V.max(), 0.0)
    # ||M^n|| <= (1 + growth/c)^n, so the tail is a Poisson((c + growth) T) tail
    n_terms = poisson_truncation((c + growth) * T, growth * T, np.abs(vector).max(), tol)
    weights = poisson.pmf(np.arange(n_terms + 1), c * T)

    result = np.zeros_like(vector)
    term = vector.copy()
    for n in range(n_terms + 1):
        result += weights[n] * term
        term = iteration @ term
    logger.debug(f"Uniformization with c={c:.4g}, T={T}, {n_terms + 1} terms")
    return result


def uniformization_apply(
    gen: GeneratorMatrix,
    V: PotentialField,
    f: PotentialField,
    T: float,
    tol: Optional[float] = None,
) -> PotentialField:
    """
    e^{T(L+V)} f by the uniformized Poisson series

    The series e^{-cT} sum_n (cT)^n/n! M^n f with M = (L+V)/c + I is truncated where
    the Poisson tail bound drops below tol in sup-norm.

    Raises:
        ArgumentError: T < 0 or tol <= 0
    """
    require_same_space(gen.kernel, V, f)
    tol = get_settings().semigroup.uniformization_tol if tol is None else tol
    return PotentialField(f.space, _uniformized(gen, V, f.values, T, tol, left=False))


def uniformization_apply_left(
    gen: GeneratorMatrix,
    V: PotentialField,
    measure: Measure,
    T: float,
    tol: Optional[float] = None,
) -> np.ndarray:
    """Row-vector action nu e^{T(L+V)} (a nonnegative measure, not renormalized)"""
    require_same_space(gen.kernel, V, measure)
    tol = get_settings().semigroup.uniformization_tol if tol is None else tol
    return _uniformized(gen, V, measure.mass, T, tol, left=True)


def perron_solve(
    A_kernel: KernelField,
    rate: Optional[PotentialField],
    V: PotentialField,
) -> PerronSolution:
    """
    Dominant eigenpair of L + V, with L = rate (L_A - I)

    Power iteration runs on the nonnegative shift M = L + V + cI; lambda = rho(M) - c,
    F is scaled to max 1 and nu is the left eigenprobability.

    Raises:
        NumericError: non-convergence or a failed identity check
    """
    space = require_same_space(A_kernel, V)
    rate = PotentialField.constant(space, 1.0) if rate is None else rate
    gen = GeneratorMatrix(rate, A_kernel)
    c = uniformization_constant(gen, V)
    operator = perturbed_matrix(gen, V)
    shifted = operator + c * np.eye(space.size)

    right = dominant_eigenpair(shifted)
    left = dominant_left_eigenpair(shifted)
    history = right.history + left.history
    if abs(right.eigenvalue - left.eigenvalue) > LEFT_RIGHT_TOL:
        raise NumericError(
            "left and right eigenvalues disagree",
            residual=abs(right.eigenvalue - left.eigenvalue),
            history=history,
        )

    eigenvalue = right.eigenvalue - c
    F = right.vector / right.vector.max()
    nu = left.vector
    residual_right = float(np.abs(operator @ F - eigenvalue * F).max() / F.max())
    residual_left = float(np.abs(nu @ operator - eigenvalue * nu).max() / nu.max())

    solution = PerronSolution(
        eigenvalue=float(eigenvalue),
        eigenfunction=PotentialField(space, F),
        eigenprobability=Measure(space, nu),
        residual_right=residual_right,
        residual_left=residual_left,
        shift=c,
        iterations=right.iterations + left.iterations,
        history=history,
    )

    gap = abs(eigenvalue - solution.eigenprobability.integrate(V))
    if gap > INTEGRAL_IDENTITY_TOL:
        raise NumericError("lambda differs from the integral of V under nu", residual=gap, history=history)
    defect = eigen_equation_check(solution, A_kernel, V, rate)
    if defect > EIGEN_EQUATION_TOL:
        raise NumericError("eigen-equation check failed", residual=defect, history=history)

    logger.debug(
        f"Perron solve on {space!r}: lambda={eigenvalue:.12g}, "
        f"residuals=({residual_right:.1e}, {residual_left:.1e}), min F={F.min():.4g}"
    )
    return solution


def eigen_equation_check(
    sol: PerronSolution,
    A_kernel: KernelField,
    V: PotentialField,
    rate: Optional[PotentialField] = None,
) -> float:
    """
    max_x |(L_A F)(x)/F(x) - (1 + (lambda - V(x))/rate(x))|

    With unit rate the target is 1 - V(x) + lambda.
    """
    space = require_same_space(A_kernel, V, sol.eigenfunction)
    F = sol.eigenfunction.values
    rates = np.ones(space.size) if rate is None else rate.values
    ratio = (A_kernel.weights * F[space.preimage_table]).sum(axis=1) / F
    target = 1.0 + (sol.eigenvalue - V.values) / rates
    return float(np.abs(ratio - target).max())


def semigroup_eigen_check(
    gen: GeneratorMatrix,
    V: PotentialField,
    sol: PerronSolution,
    T: float,
    tol: Optional[float] = None,
) -> Tuple[float, float]:
    """
    Relative defects of P_T^V F = e^{lambda T} F and nu P_T^V = e^{lambda T} nu

    Returns:
        Tuple of (right_defect, left_defect), each scaled by e^{lambda T}
    """
    growth = np.exp(sol.eigenvalue * T)
    image = uniformization_apply(gen, V, sol.eigenfunction, T, tol).values
    left = uniformization_apply_left(gen, V, sol.eigenprobability, T, tol)
    right_defect = float(np.abs(image - growth * sol.eigenfunction.values).max() / growth)
    left_defect = float(np.abs(left - growth * sol.eigenprobability.mass).max() / growth)
    return right_defect, left_defect


@dataclass(frozen=True)
class DirichletForm:
    """Both evaluations of the Dirichlet form of f"""

    operator_form: float  # <(I - L_A) f, f>_mu
    jump_form: float  # (1/2) int sum_a kernel(x,a) [f(x) - f(ax)]^2 dmu

    @property
    def value(self) -> float:
        return self.jump_form

    def __float__(self):
        return self.value


def dirichlet_form(A_kernel: KernelField, mu_A: Measure, f: PotentialField) -> DirichletForm:
    """
    Dirichlet form of f for the a-priori chain

    Returns:
        DirichletForm holding both evaluations; the real value is .value (or float(form))

    Raises:
        ArgumentError: mu_A is not the equilibrium measure of A_kernel
        InternalConsistencyError: the two evaluations disagree
    """
    space = require_same_space(A_kernel, mu_A, f)
    stationary_defect = np.abs(dual_step(A_kernel, mu_A).mass - mu_A.mass).max()
    if stationary_defect > STATIONARITY_TOL:
        raise ArgumentError(
            f"measure is not the equilibrium measure of the kernel (defect {stationary_defect:.2e})"
        )

    values = f.values
    images = values[space.preimage_table]
    averaged = (A_kernel.weights * images).sum(axis=1)
    operator_form = float(np.dot(mu_A.mass, (values - averaged) * values))
    squared = (A_kernel.weights * (values[:, None] - images) ** 2).sum(axis=1)
    jump_form = 0.5 * float(np.dot(mu_A.mass, squared))

    if abs(operator_form - jump_form) > DIRICHLET_TOL * max(1.0, abs(jump_form)):
        raise InternalConsistencyError(
            f"Dirichlet form evaluations disagree: {operator_form!r} vs {jump_form!r}"
        )
    return DirichletForm(operator_form, jump_form)


def adjoint_and_symmetrize(gen: GeneratorMatrix, mu: Measure) -> Tuple[np.ndarray, np.ndarray]:
    """
    Adjoint of the generator in L^2(mu) and the symmetrized generator (L + L*)/2

    Raises:
        ArgumentError: mu is not stationary for the generator
    """
    require_same_space(gen.kernel, mu)
    matrix = gen.matrix
    defect = float(np.abs(mu.mass @ matrix).max())
    if defect > STATIONARITY_TOL or np.any(mu.mass <= 0.0):
        raise ArgumentError(f"measure is not a positive stationary law (defect {defect:.2e})")

    weights = mu.mass
    adjoint = (matrix * weights[:, None]).T / weights[:, None]
    symmetric = 0.5 * (matrix + adjoint)

    checks = {
        "adjoint row sums": np.abs(adjoint.sum(axis=1)).max(),
        "adjoint stationarity": np.abs(weights @ adjoint).max(),
        "symmetric stationarity": np.abs(weights @ symmetric).max(),
    }
    for name, value in checks.items():
        if value > STATIONARITY_TOL:
            raise InternalConsistencyError(f"{name} defect {value:.2e}")
    return adjoint, symmetric


def ratio_bound_check(
    A_kernel: KernelField, V: PotentialField, T: float, tol: Optional[float] = None
) -> float:
    """
    Slack of P_T^V(1)(x)/P_T^V(1)(y) <= exp{(C_A theta + T C_V)/(1 - theta) d(x, y)}

    C_A is the Lipschitz bound of A(ax) as a depth-(k+1) potential, C_V that of V.

    Returns:
        The smallest slack (bound exponent minus log ratio) over all word pairs; a
        nonnegative value means the bound holds
    """
    space = require_same_space(A_kernel, V)
    theta = space.theta
    C_A = lipschitz_constant(A_kernel.to_potential())
    C_V = lipschitz_constant(V)
    gen = GeneratorMatrix.unit_rate(A_kernel)
    ones = PotentialField.constant(space, 1.0)
    logs = np.log(uniformization_apply(gen, V, ones, T, tol).values)

    slack = np.inf
    for x in range(space.size):
        for y in range(space.size):
            if x == y:
                continue
            exponent = (C_A * theta + T * C_V) / (1.0 - theta) * space.distance(x, y)
            slack = min(slack, exponent - (logs[x] - logs[y]))
    return float(slack)
