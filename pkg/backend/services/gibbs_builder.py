"""
Gibbs Builder Service - continuous-time Gibbs chains and the entropy/pressure principle
Builds (gamma_V, kernel_V, mu_V) from a Perron solve, evaluates the relative entropy of
admissible chains in closed form and audits the variational formula for the pressure
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence
import logging

import numpy as np
from scipy.linalg import eigh

from core.config import get_settings
from core.exceptions import (
    ArgumentError,
    InternalConsistencyError,
    NumericError,
    VariationalPrincipleError,
)
from models.cylinder_space import CylinderSpace
from models.fields import KernelField, Measure, PotentialField, require_same_space
from models.generator import GeneratorMatrix
from models.gibbs_chain import STATIONARITY_TOL, AdmissibleCandidate, GibbsChain
from services.semigroup import (
    adjoint_and_symmetrize,
    generator_apply,
    perron_solve,
    perturbed_matrix,
    uniformization_apply,
)
from services.transfer_operator import equilibrium_measure, normalize

logger = logging.getLogger(__name__)

GIBBS_IDENTITY_TOL = 1e-9
AUDIT_TOL = 1e-9
VIOLATION_TOL = 1e-6
EIGENPROBABILITY_TOL = 1e-9
AUDIT_STREAM = 0xA0D1


def continuous_stationary(gamma: PotentialField, kernel: KernelField) -> Measure:
    """
    Stationary law of gamma (L_B - I): proportional to equilibrium_measure(B) / gamma

    Raises:
        NumericError: the result is not a null left vector of the generator
    """
    require_same_space(gamma, kernel)
    base = equilibrium_measure(kernel)
    measure = Measure.from_weights(kernel.space, base.mass / gamma.values)
    matrix = GeneratorMatrix(gamma, kernel).matrix
    defect = float(np.abs(measure.mass @ matrix).max())
    if defect > STATIONARITY_TOL:
        raise NumericError("stationary measure fails the generator check", residual=defect)
    return measure


def build_gibbs(A_kernel: KernelField, V: PotentialField) -> GibbsChain:
    """
    Gibbs chain for the potential V over the a-priori kernel

    Args:
        A_kernel: normalized a-priori kernel
        V: depth-k potential

    Returns:
        GibbsChain with gamma_V, kernel_V and the stationary law mu_V

    Raises:
        InternalConsistencyError: gamma_V is not positive or kernel_V is not normalized
    """
    space = require_same_space(A_kernel, V)
    solution = perron_solve(A_kernel, None, V)
    F = solution.eigenfunction.values
    gamma_values = 1.0 - V.values + solution.eigenvalue
    if np.any(gamma_values <= 0.0):
        raise InternalConsistencyError(
            f"gamma_V is not positive (min {gamma_values.min():.3e}); the Perron solve is suspect"
        )

    weights = A_kernel.weights * F[space.preimage_table] / (gamma_values * F)[:, None]
    defect = float(np.abs(weights.sum(axis=1) - 1.0).max())
    if defect > 1e-10:
        raise InternalConsistencyError(f"kernel_V rows do not sum to one (defect {defect:.2e})")
    weights /= weights.sum(axis=1, keepdims=True)

    gamma = PotentialField(space, gamma_values)
    kernel_V = KernelField(space, weights)
    stationary = continuous_stationary(gamma, kernel_V)

    logger.debug(
        f"Gibbs chain on {space!r}: lambda={solution.eigenvalue:.12g}, "
        f"gamma in [{gamma.min():.4g}, {gamma.max():.4g}]"
    )
    return GibbsChain(A_kernel, V, solution, gamma, kernel_V, stationary)


def stationary_measure(chain: GibbsChain) -> Measure:
    """mu_{B_V, gamma_V} recomputed from the chain's rates and kernel"""
    return continuous_stationary(chain.gamma, chain.kernel_V)


def eigenprobability_relation(chain: GibbsChain) -> float:
    """
    Residual of (L + V)* nu = lambda nu for nu proportional to mu_V / F

    Raises:
        InternalConsistencyError: nu differs from the Perron eigenprobability
    """
    F = chain.solution.eigenfunction.values
    nu = Measure.from_weights(chain.space, chain.stationary.mass / F)
    operator = perturbed_matrix(GeneratorMatrix.unit_rate(chain.base), chain.V)
    residual = float(np.abs(nu.mass @ operator - chain.eigenvalue * nu.mass).max())

    mismatch = float(np.abs(nu.mass - chain.solution.eigenprobability.mass).max())
    if mismatch > EIGENPROBABILITY_TOL:
        raise InternalConsistencyError(
            f"eigenprobability from mu_V differs from the Perron solve by {mismatch:.2e}"
        )
    return residual


def admissible_candidate(gamma: PotentialField, kernel: KernelField) -> AdmissibleCandidate:
    """Admissible chain gamma (L_kernel - I) together with its stationary law"""
    if gamma.min() <= 0.0:
        raise ArgumentError("candidate rates must be strictly positive")
    if not kernel.is_normalized:
        raise ArgumentError("candidate kernel must be normalized")
    return AdmissibleCandidate(gamma, kernel, continuous_stationary(gamma, kernel))


def relative_entropy(cand: AdmissibleCandidate, A_kernel: KernelField) -> float:
    """
    Long-run relative entropy H of an admissible chain against the a-priori chain

    H = int (g - 1) dmu + int g sum_a w(x, a) [log A(x, a) - log w(x, a) - log g(x)] dmu
    where g, w are the candidate rates and kernel and mu its stationary law. H <= 0
    with equality only at the a-priori chain itself.
    """
    require_same_space(cand.kernel_tilde, A_kernel)
    if not A_kernel.is_normalized:
        raise ArgumentError("relative entropy is taken against a normalized kernel")
    mu = cand.stationary_tilde.mass
    g = cand.gamma_tilde.values
    w = cand.kernel_tilde.weights
    bracket = (w * (A_kernel.log_weights - np.log(w))).sum(axis=1) - np.log(g)
    return float(np.dot(mu, g - 1.0) + np.dot(mu, g * bracket))


def random_candidate(space: CylinderSpace, rng: np.random.Generator) -> AdmissibleCandidate:
    """gamma = exp(uniform[-1, 1]) per word; kernel normalized from a uniform[-1, 1] raw potential"""
    gamma = PotentialField(space, np.exp(rng.uniform(-1.0, 1.0, size=space.size)))
    raw = PotentialField(space, rng.uniform(-1.0, 1.0, size=space.size))
    return admissible_candidate(gamma, normalize(raw))


def audit_stream(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream for audit candidate number index"""
    sequence = np.random.SeedSequence([seed, AUDIT_STREAM, index])
    return np.random.Generator(np.random.Philox(sequence))


@dataclass
class AuditEntry:
    """One audited candidate"""

    index: int
    entropy: float
    energy: float  # int V dmu_tilde
    gap: float  # lambda_V - (entropy + energy), nonnegative for a valid audit

    @property
    def value(self) -> float:
        return self.entropy + self.energy


@dataclass
class PressureReport:
    """Pressure of V with the Gibbs value and the audit table"""

    eigenvalue: float
    gibbs_value: float
    gibbs_entropy: float
    audit_max: float
    audits: List[AuditEntry] = field(default_factory=list)

    def to_document(self) -> Dict[str, Any]:
        return {
            "lambda": self.eigenvalue,
            "gibbs_value": self.gibbs_value,
            "gibbs_entropy": self.gibbs_entropy,
            "audit_max": self.audit_max,
            "audit_count": len(self.audits),
        }

    def audit_records(self) -> List[Dict[str, float]]:
        return [
            {
                "index": entry.index,
                "entropy": entry.entropy,
                "energy": entry.energy,
                "value": entry.value,
                "gap": entry.gap,
            }
            for entry in self.audits
        ]


def _audit_one(A_kernel: KernelField, V: PotentialField, eigenvalue: float, seed: int, index: int) -> AuditEntry:
    cand = random_candidate(A_kernel.space, audit_stream(seed, index))
    entropy = relative_entropy(cand, A_kernel)
    energy = cand.stationary_tilde.integrate(V)
    return AuditEntry(index, entropy, energy, eigenvalue - (entropy + energy))


def pressure(
    A_kernel: KernelField,
    V: PotentialField,
    audit_count: Optional[int] = None,
    seed: int = 0,
) -> PressureReport:
    """
    Pressure of V: lambda_V, the Gibbs value H + int V dmu_V and a random audit

    Args:
        A_kernel: normalized a-priori kernel
        V: potential
        audit_count: number of random admissible candidates (settings default if None)
        seed: root seed; candidate i draws from audit_stream(seed, i)

    Returns:
        PressureReport

    Raises:
        InternalConsistencyError: the Gibbs value differs from lambda_V
        VariationalPrincipleError: an audit candidate beats lambda_V by more than 1e-6
    """
    audit_count = get_settings().audit_count if audit_count is None else audit_count
    if audit_count < 0:
        raise ArgumentError(f"audit_count must be nonnegative, got {audit_count}")

    chain = build_gibbs(A_kernel, V)
    eigenvalue = chain.eigenvalue
    gibbs_entropy = relative_entropy(chain.as_candidate(), A_kernel)
    gibbs_value = gibbs_entropy + chain.stationary.integrate(V)
    if abs(gibbs_value - eigenvalue) > GIBBS_IDENTITY_TOL:
        raise InternalConsistencyError(
            f"Gibbs value {gibbs_value!r} differs from lambda_V {eigenvalue!r}"
        )

    workers = max(1, get_settings().montecarlo.workers)
    with ThreadPoolExecutor(max_workers=workers) as executor:
        audits = list(
            executor.map(
                lambda i: _audit_one(A_kernel, V, eigenvalue, seed, i), range(audit_count)
            )
        )

    for entry in audits:
        if entry.entropy > AUDIT_TOL:
            raise VariationalPrincipleError(
                f"candidate {entry.index} has positive relative entropy {entry.entropy:.3e}"
            )
        if entry.value > eigenvalue + VIOLATION_TOL:
            raise VariationalPrincipleError(
                f"candidate {entry.index} reaches {entry.value!r} above lambda_V {eigenvalue!r}"
            )
        if entry.value > eigenvalue + AUDIT_TOL:
            logger.warning(f"Audit candidate {entry.index} exceeds lambda_V by {-entry.gap:.2e}")

    audit_max = max((entry.value for entry in audits), default=float("-inf"))
    logger.info(
        f"Pressure: lambda={eigenvalue:.12g}, gibbs_value={gibbs_value:.12g}, "
        f"{audit_count} audits, max {audit_max:.6g}"
    )
    return PressureReport(eigenvalue, gibbs_value, gibbs_entropy, audit_max, audits)


def small_time_generator_check(chain: GibbsChain, f: PotentialField, t: float = 1e-3) -> float:
    """
    Max error of the Richardson small-time estimate of L^V(f)/f

    With the normalized semigroup S_t f = P_t^V(F f) / (e^{lambda t} F) and
    g(t) = log(S_t f / f) / t, the combination 2 g(t/2) - g(t) approximates L^V(f)/f
    to second order in t.
    """
    require_same_space(chain.V, f)
    if f.min() <= 0.0:
        raise ArgumentError("small-time check needs a strictly positive function")
    if t <= 0.0:
        raise ArgumentError(f"time step must be positive, got {t}")
    gen = GeneratorMatrix.unit_rate(chain.base)
    F = chain.solution.eigenfunction

    def log_rate(s: float) -> np.ndarray:
        image = uniformization_apply(gen, chain.V, F * f, s, tol=1e-15).values
        return np.log(image / (np.exp(chain.eigenvalue * s) * F.values * f.values)) / s

    estimate = 2.0 * log_rate(t / 2.0) - log_rate(t)
    exact = generator_apply(chain.generator, f).values / f.values
    return float(np.abs(estimate - exact).max())


@dataclass
class SymmetricSpectrum:
    """Principal eigen-data of L_sym + V in L^2(mu_V)"""

    eigenvalue: float
    eigenfunction: PotentialField  # phi > 0 with int phi^2 dmu = 1
    rayleigh: float  # <(L_sym + V) phi, phi>_mu

    def concentration(self, stationary: Measure, words: Sequence[int]) -> float:
        """Share of phi^2 dmu carried by the given words"""
        weights = self.eigenfunction.values**2 * stationary.mass
        return float(weights[list(words)].sum() / weights.sum())


def symmetric_eigenvalue(chain: GibbsChain) -> SymmetricSpectrum:
    """
    Principal eigenvalue of (L^V + L^V*)/2 + V, self-adjoint in L^2(mu_V)

    The operator is conjugated by diag(sqrt(mu_V)) into a symmetric matrix and handed to
    a dense symmetric eigen-solve.
    """
    _, symmetric = adjoint_and_symmetrize(chain.generator, chain.stationary)
    operator = symmetric + np.diag(chain.V.values)
    root = np.sqrt(chain.stationary.mass)
    conjugated = root[:, None] * operator / root[None, :]
    conjugated = 0.5 * (conjugated + conjugated.T)
    values, vectors = eigh(conjugated)
    top = vectors[:, -1]
    top = top if top.sum() >= 0 else -top
    phi = top / root
    rayleigh = float(np.dot(chain.stationary.mass * phi, operator @ phi))
    return SymmetricSpectrum(float(values[-1]), PotentialField(chain.space, phi), rayleigh)
