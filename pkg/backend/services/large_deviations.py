"""
Large Deviations Service - level-2 rate function of the empirical measure
Q(V) = lambda_V and its conjugate I(nu), by the primal route
I(nu) = -inf_g sum_x nu(x) [sum_a w(x, a) e^{g(ax) - g(x)} - 1]
and by the dual route I(nu) = sup_V int V dnu - lambda_V
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple
import logging

import numpy as np
import pandas as pd
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from core.config import get_settings
from core.exceptions import (
    ArgumentError,
    InternalConsistencyError,
    NumericError,
    PropertyCheckError,
    ThermoError,
)
from models.fields import KernelField, Measure, PotentialField, require_same_space
from models.gibbs_chain import GibbsChain
from models.rate_function import DUAL, PRIMAL, RateFunctionResult
from services.gibbs_builder import build_gibbs
from services.newton_solver import get_newton_solver
from services.semigroup import perron_solve

logger = logging.getLogger(__name__)

RESULT_GRADIENT_TOL = 1e-8
GRADIENT_CHECK_TOL = 1e-6
CONVEXITY_TOL = 1e-10
LIPSCHITZ_TOL = 1e-12
IDENTITY_TOL = 1e-7
FENCHEL_TOL = 1e-8
UNATTAINED_ITERATIONS = 200
SCGF_STREAM = 0x5C6F
RESTART_STREAM = 0xD0A1


def _stream(seed: int, tag: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, tag, index])))


def scgf(A_kernel: KernelField, V: PotentialField) -> float:
    """Scaled cumulant generating functional Q(V), equal to lambda_V"""
    return perron_solve(A_kernel, None, V).eigenvalue


@dataclass
class ScgfPropertyReport:
    """Lipschitz and convexity audit of Q over random pairs"""

    trials: int
    lipschitz_violations: int = 0
    convexity_violations: int = 0
    max_lipschitz_ratio: float = 0.0  # |Q(V) - Q(U)| / ||V - U||
    max_convexity_excess: float = float("-inf")

    def to_document(self) -> Dict[str, Any]:
        return {
            "trials": self.trials,
            "lipschitz_violations": self.lipschitz_violations,
            "convexity_violations": self.convexity_violations,
            "max_lipschitz_ratio": self.max_lipschitz_ratio,
            "max_convexity_excess": self.max_convexity_excess,
        }


def scgf_properties_check(
    A_kernel: KernelField, trials: int, seed: int = 0, scale: float = 1.0
) -> ScgfPropertyReport:
    """
    Audit |Q(V) - Q(U)| <= ||V - U|| and convexity of Q on random pairs

    Raises:
        PropertyCheckError: any violation
    """
    if trials < 1:
        raise ArgumentError(f"trials must be at least 1, got {trials}")
    space = A_kernel.space
    report = ScgfPropertyReport(trials)
    for i in range(trials):
        rng = _stream(seed, SCGF_STREAM, i)
        V = PotentialField(space, rng.uniform(-scale, scale, size=space.size))
        U = PotentialField(space, rng.uniform(-scale, scale, size=space.size))
        alpha = float(rng.uniform(0.0, 1.0))
        qV, qU = scgf(A_kernel, V), scgf(A_kernel, U)
        mixed = scgf(A_kernel, V * alpha + U * (1.0 - alpha))

        distance = float(np.abs(V.values - U.values).max())
        if abs(qV - qU) > distance + LIPSCHITZ_TOL:
            report.lipschitz_violations += 1
        if distance > 0.0:
            report.max_lipschitz_ratio = max(report.max_lipschitz_ratio, abs(qV - qU) / distance)
        excess = mixed - (alpha * qV + (1.0 - alpha) * qU)
        if excess > CONVEXITY_TOL:
            report.convexity_violations += 1
        report.max_convexity_excess = max(report.max_convexity_excess, excess)

    if report.lipschitz_violations or report.convexity_violations:
        raise PropertyCheckError(
            f"Q audit failed: {report.lipschitz_violations} Lipschitz and "
            f"{report.convexity_violations} convexity violations in {trials} trials"
        )
    logger.info(f"Q audit passed on {trials} pairs, max ratio {report.max_lipschitz_ratio:.4f}")
    return report


def _require_probability(A_kernel: KernelField, nu: Measure) -> None:
    require_same_space(A_kernel, nu)
    if not A_kernel.is_normalized:
        raise ArgumentError("rate function is defined for a normalized kernel")
    if not nu.is_probability:
        raise ArgumentError(f"nu must be a probability, total mass {nu.total!r}")


class _PrimalProblem:
    """
    Objective sum over kept jumps of nu(x) w(x, a) e^{g(ax) - g(x)} minus nu(support)

    Jumps leaving the support of nu, and jumps between different strongly connected
    pieces of the support graph, can be driven to zero weight and are dropped. One word
    per piece is gauge-fixed to g = 0.
    """

    def __init__(self, A_kernel: KernelField, nu: Measure):
        space = A_kernel.space
        self.size = space.size
        self.nu = nu.mass
        support = nu.mass > 0.0
        parents = np.repeat(np.arange(space.size), space.d)
        children = space.preimage_table.ravel()
        weights = A_kernel.weights.ravel()
        inside = support[parents] & support[children]

        graph = coo_matrix(
            (np.ones(int(inside.sum())), (parents[inside], children[inside])),
            shape=(space.size, space.size),
        )
        _, labels = connected_components(graph, directed=True, connection="strong")
        kept = inside & (labels[parents] == labels[children])
        self.dropped = int(np.count_nonzero(support[parents])) - int(np.count_nonzero(kept))

        self.src = parents[kept]
        self.dst = children[kept]
        self.coef = self.nu[self.src] * weights[kept]
        self.offset = float(self.nu.sum())

        support_words = np.flatnonzero(support)
        gauges = {}
        for word in support_words:
            gauges.setdefault(labels[word], word)
        gauge_words = set(gauges.values())
        self.free = np.array([w for w in support_words if w not in gauge_words], dtype=int)

    def full(self, z: np.ndarray) -> np.ndarray:
        g = np.zeros(self.size)
        g[self.free] = z
        return g

    def _terms(self, g: np.ndarray) -> np.ndarray:
        return self.coef * np.exp(g[self.dst] - g[self.src])

    def objective(self, z: np.ndarray) -> float:
        return float(self._terms(self.full(z)).sum() - self.offset)

    def gradient(self, z: np.ndarray) -> np.ndarray:
        terms = self._terms(self.full(z))
        grad = np.bincount(self.dst, terms, self.size) - np.bincount(self.src, terms, self.size)
        return grad[self.free]

    def hessian(self, z: np.ndarray) -> np.ndarray:
        terms = self._terms(self.full(z))
        hess = np.zeros((self.size, self.size))
        np.add.at(hess, (self.dst, self.dst), terms)
        np.add.at(hess, (self.src, self.src), terms)
        np.add.at(hess, (self.dst, self.src), -terms)
        np.add.at(hess, (self.src, self.dst), -terms)
        return hess[np.ix_(self.free, self.free)]

    def check_gradient(self, z: np.ndarray, step: float = 1e-6) -> float:
        """Largest relative gap between the analytic gradient and central differences"""
        analytic = self.gradient(z)
        numeric = np.empty_like(analytic)
        for j in range(z.size):
            shift = np.zeros_like(z)
            shift[j] = step
            numeric[j] = (self.objective(z + shift) - self.objective(z - shift)) / (2.0 * step)
        scale = max(1.0, float(np.abs(analytic).max())) if analytic.size else 1.0
        return float(np.abs(analytic - numeric).max() / scale) if analytic.size else 0.0


def rate_primal(
    A_kernel: KernelField, nu: Measure, tol: Optional[float] = None
) -> RateFunctionResult:
    """
    I(nu) as minus the infimum over g of int L(e^g) / e^g dnu

    Args:
        A_kernel: normalized a-priori kernel
        nu: probability on depth-k words; zero masses are allowed
        tol: gradient tolerance, settings default when None

    Returns:
        RateFunctionResult with route "primal" and potential g (zero off the support)

    Raises:
        NumericError: the optimizer did not converge
        InternalConsistencyError: the analytic gradient fails the finite-difference check
    """
    _require_probability(A_kernel, nu)
    problem = _PrimalProblem(A_kernel, nu)
    start = np.zeros(problem.free.size)
    gap = problem.check_gradient(start)
    if gap > GRADIENT_CHECK_TOL:
        raise InternalConsistencyError(f"primal gradient disagrees with central differences ({gap:.2e})")

    solver = get_newton_solver()
    if tol is not None:
        solver = type(solver)(solver.config.model_copy(update={"gradient_tol": tol}))
    result = solver.minimize(problem.objective, problem.gradient, start, hessian=problem.hessian)
    if result.gradient_norm > max(RESULT_GRADIENT_TOL, solver.config.gradient_tol):
        raise NumericError(
            "primal rate-function search did not converge",
            residual=result.gradient_norm,
            history=result.history,
        )

    value = max(0.0, -result.value)
    attained = problem.dropped == 0
    if not attained:
        logger.debug(f"Primal infimum approached by dropping {problem.dropped} jumps")
    return RateFunctionResult(
        value=value,
        route=PRIMAL,
        potential=PotentialField(nu.space, problem.full(result.x)),
        iterations=result.iterations,
        gradient_norm=result.gradient_norm,
        attained=attained,
    )


class _DualProblem:
    """
    Minimize lambda_{V} - int V dnu over V with V(word 0) = 0

    Potentials whose Gibbs chain cannot be built to tolerance (far out along an
    unattained supremum) count as infeasible: objective inf, gradient NaN.
    """

    def __init__(self, A_kernel: KernelField, nu: Measure):
        self.kernel = A_kernel
        self.nu = nu

    def potential(self, z: np.ndarray) -> PotentialField:
        return PotentialField(self.nu.space, np.concatenate(([0.0], z)))

    def chain(self, z: np.ndarray) -> Optional[GibbsChain]:
        try:
            return build_gibbs(self.kernel, self.potential(z))
        except ThermoError as e:
            logger.debug(f"Dual point rejected: {e}")
            return None

    def objective(self, z: np.ndarray) -> float:
        chain = self.chain(z)
        if chain is None:
            return float("inf")
        return chain.eigenvalue - self.nu.integrate(chain.V)

    def equilibrium(self, z: np.ndarray) -> Measure:
        return build_gibbs(self.kernel, self.potential(z)).stationary

    def gradient(self, z: np.ndarray) -> np.ndarray:
        chain = self.chain(z)
        if chain is None:
            return np.full(z.size, np.nan)
        return (chain.stationary.mass - self.nu.mass)[1:]


def rate_dual(
    A_kernel: KernelField,
    nu: Measure,
    tol: Optional[float] = None,
    start: Optional[PotentialField] = None,
) -> RateFunctionResult:
    """
    I(nu) as sup_V int V dnu - lambda_V over depth-k potentials

    The gradient of the objective is nu - mu_{B_V, gamma_V}. For nu with zero mass on
    some word the supremum is not attained; the search is capped and the best value is
    returned with attained=False.

    Raises:
        NumericError: the search stalled for a strictly positive nu
    """
    _require_probability(A_kernel, nu)
    problem = _DualProblem(A_kernel, nu)
    z0 = np.zeros(nu.space.size - 1) if start is None else start.values[1:] - start.values[0]
    attained = bool(np.all(nu.mass > 0.0))

    solver = get_newton_solver()
    if tol is not None:
        solver = type(solver)(solver.config.model_copy(update={"gradient_tol": tol}))
    cap = None if attained else UNATTAINED_ITERATIONS
    result = solver.minimize(problem.objective, problem.gradient, z0, max_iterations=cap)

    if attained and result.gradient_norm > max(RESULT_GRADIENT_TOL, solver.config.gradient_tol):
        raise NumericError(
            "dual rate-function search did not converge",
            residual=result.gradient_norm,
            history=result.history,
        )
    if not attained:
        logger.warning(
            f"nu has zero mass on {int(np.sum(nu.mass == 0.0))} words; dual supremum "
            f"not attained, best value {-result.value:.10g}"
        )

    return RateFunctionResult(
        value=max(0.0, -result.value),
        route=DUAL,
        potential=problem.potential(result.x),
        iterations=result.iterations,
        gradient_norm=result.gradient_norm,
        attained=attained,
        equilibrium=problem.equilibrium(result.x),
    )


def lambda_gradient(A_kernel: KernelField, V: PotentialField) -> Measure:
    """Gradient of V -> lambda_V, the stationary law mu_{B_V, gamma_V}"""
    return build_gibbs(A_kernel, V).stationary


def lambda_directional_derivative(
    A_kernel: KernelField, V: PotentialField, direction: PotentialField, step: float = 1e-5
) -> Tuple[float, float]:
    """
    Central-difference derivative of lambda along direction against int direction dmu_V

    Returns:
        Tuple of (finite_difference, exact)
    """
    up = scgf(A_kernel, V + direction * step)
    down = scgf(A_kernel, V - direction * step)
    return (up - down) / (2.0 * step), lambda_gradient(A_kernel, V).integrate(direction)


@dataclass
class EquilibriumIdentityReport:
    """lambda_V = int V dmu_V - I(mu_V) and uniqueness of the maximizing measure"""

    eigenvalue: float
    energy: float  # int V dmu_V
    rate: float  # I(mu_V), primal route
    restart_distances: List[float] = field(default_factory=list)  # TV to mu_V per restart

    @property
    def gap(self) -> float:
        return abs(self.eigenvalue - (self.energy - self.rate))

    def to_document(self) -> Dict[str, Any]:
        return {
            "lambda": self.eigenvalue,
            "energy": self.energy,
            "rate": self.rate,
            "gap": self.gap,
            "restart_distances": list(self.restart_distances),
        }


def equilibrium_identity_check(
    A_kernel: KernelField,
    V: PotentialField,
    restarts: Optional[int] = None,
    seed: int = 0,
) -> EquilibriumIdentityReport:
    """
    Check lambda_V = int V dmu_V - I(mu_V) and that every dual restart finds mu_V

    Raises:
        PropertyCheckError: the identity or the uniqueness check fails
    """
    restarts = get_settings().dual_restarts if restarts is None else restarts
    chain = build_gibbs(A_kernel, V)
    mu = chain.stationary
    rate = rate_primal(A_kernel, mu).value
    report = EquilibriumIdentityReport(chain.eigenvalue, mu.integrate(V), rate)
    if report.gap > IDENTITY_TOL:
        raise PropertyCheckError(f"equilibrium identity fails by {report.gap:.3e}")

    def restart(j: int) -> float:
        rng = _stream(seed, RESTART_STREAM, j)
        start = PotentialField(mu.space, rng.uniform(-1.0, 1.0, size=mu.space.size))
        found = rate_dual(A_kernel, mu, start=start)
        return found.equilibrium.total_variation(mu)

    workers = max(1, get_settings().montecarlo.workers)
    with ThreadPoolExecutor(max_workers=workers) as executor:
        report.restart_distances = list(executor.map(restart, range(restarts)))

    worst = max(report.restart_distances, default=0.0)
    if worst > IDENTITY_TOL:
        raise PropertyCheckError(f"dual restarts disagree on the maximizing measure (TV {worst:.3e})")
    logger.info(f"Equilibrium identity holds to {report.gap:.2e} over {restarts} restarts")
    return report


def fenchel_check(A_kernel: KernelField, V: PotentialField, nu: Measure) -> float:
    """
    Slack Q(V) - (int V dnu - I(nu)), nonnegative by convex duality

    Raises:
        PropertyCheckError: the slack is below -1e-8
    """
    slack = scgf(A_kernel, V) - (nu.integrate(V) - rate_primal(A_kernel, nu).value)
    if slack < -FENCHEL_TOL:
        raise PropertyCheckError(f"Fenchel inequality violated by {-slack:.3e}")
    return slack


def rate_scan(
    A_kernel: KernelField,
    measures: Sequence[Measure],
    tol: Optional[float] = None,
    results: Optional[Sequence[Tuple[RateFunctionResult, RateFunctionResult]]] = None,
) -> pd.DataFrame:
    """
    Primal and dual rate function over a list of measures

    Args:
        A_kernel: normalized a-priori kernel
        measures: probabilities on depth-k words
        tol: solver tolerance for both routes
        results: already computed (primal, dual) pairs, one per measure; solved here when None

    Returns:
        DataFrame with one nu_<word> column per word, then I_primal, I_dual, gap and
        dual_attained
    """
    space = A_kernel.space
    if results is None:
        results = [(rate_primal(A_kernel, nu, tol), rate_dual(A_kernel, nu, tol)) for nu in measures]
    elif len(results) != len(measures):
        raise ArgumentError(f"{len(results)} rate results for {len(measures)} measures")
    labels = [f"nu_{space.label(x)}" for x in range(space.size)]
    rows = []
    for nu, (primal, dual) in zip(measures, results):
        row = dict(zip(labels, nu.mass.tolist()))
        row.update(
            I_primal=primal.value,
            I_dual=dual.value,
            gap=abs(primal.value - dual.value),
            dual_attained=dual.attained,
        )
        rows.append(row)
    logger.info(f"Rate scan over {len(rows)} measures")
    return pd.DataFrame(rows, columns=labels + ["I_primal", "I_dual", "gap", "dual_attained"])
