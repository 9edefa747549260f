"""
Monte Carlo Service - trajectory estimators cross-checking the analytic layer
SCGF and relative-entropy estimators, the jump-count martingale identity, importance
sampling and the inverse-temperature annealing experiment
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence
import logging

import numpy as np
import pandas as pd
from scipy.special import logsumexp

from core.config import get_settings
from core.exceptions import ArgumentError, PropertyCheckError
from models.fields import KernelField, Measure, PotentialField, require_same_space
from models.gibbs_chain import AdmissibleCandidate
from services.gibbs_builder import build_gibbs, symmetric_eigenvalue
from services.trajectory_sampler import (
    empirical_measure,
    jump_sum,
    log_rn,
    sample_path,
    sample_word,
    time_integral,
    trajectory_stream,
)
from services.transfer_operator import equilibrium_measure

logger = logging.getLogger(__name__)

MARTINGALE_FAIL_SE = 5.0
AGREEMENT_SE = 3.0
MONOTONE_TOL = 1e-12
ARGMAX_TOL = 1e-12
ANNEAL_STREAM = 0xA11E
IMPORTANCE_STREAM = 0x15A5


@dataclass
class McEstimate:
    """Monte Carlo estimate with its standard error"""

    estimate: float
    stderr: float
    n_traj: int
    horizon: float

    def to_document(self) -> Dict[str, Any]:
        return {
            "estimate": self.estimate,
            "stderr": self.stderr,
            "n_traj": self.n_traj,
            "horizon": self.horizon,
        }

    @classmethod
    def from_document(cls, doc: Dict[str, Any]) -> "McEstimate":
        return cls(float(doc["estimate"]), float(doc["stderr"]), int(doc["n_traj"]), float(doc["horizon"]))


@dataclass
class ScgfEstimate(McEstimate):
    """
    SCGF estimate with its importance-weight diagnostic

    ess is (sum w)^2 / sum w^2 over the trajectory weights exp(int V). When a handful of
    paths carry the mean, the log of the sample mean sits below the true value by more
    than stderr reports, and biased is set.
    """

    ess: float = 0.0
    biased: bool = False

    @property
    def ess_fraction(self) -> float:
        return self.ess / self.n_traj

    def to_document(self) -> Dict[str, Any]:
        return {**super().to_document(), "ess": self.ess, "ess_fraction": self.ess_fraction, "biased": self.biased}

    @classmethod
    def from_document(cls, doc: Dict[str, Any]) -> "ScgfEstimate":
        base = McEstimate.from_document(doc)
        return cls(base.estimate, base.stderr, base.n_traj, base.horizon, float(doc["ess"]), bool(doc["biased"]))


def map_trajectories(work: Callable[[int], Any], n_traj: int) -> List[Any]:
    """Run work(i) for i < n_traj, on a thread pool when configured, results in index order"""
    workers = get_settings().montecarlo.workers
    if workers <= 1:
        return [work(i) for i in range(n_traj)]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(work, range(n_traj)))


def _start_word(initial: Measure, x0: Optional[int], rng: np.random.Generator) -> int:
    return sample_word(initial, rng) if x0 is None else x0


def _standard_error(samples: np.ndarray) -> float:
    return float(samples.std(ddof=1) / np.sqrt(samples.size))


def mc_scgf(
    A_kernel: KernelField,
    V: PotentialField,
    T: float,
    n_traj: int,
    seed: int,
    x0: Optional[int] = None,
) -> ScgfEstimate:
    """
    (1/T) log E[exp int_0^T V(X_s) ds] over a-priori paths started from mu_A

    The mean is accumulated by log-sum-exp; the standard error is the delta-method error
    of the log of the sample mean, divided by T. The effective sample size of the weights
    is reported alongside; below Settings.montecarlo.min_ess_fraction of n_traj the estimate
    is flagged biased, since the exponent variance grows linearly in T and the sample mean
    is then dominated by a few paths.
    """
    space = require_same_space(A_kernel, V)
    if T <= 0 or n_traj < 2:
        raise ArgumentError("mc_scgf needs T > 0 and at least two trajectories")
    ones = PotentialField.constant(space, 1.0)
    initial = equilibrium_measure(A_kernel)

    def work(i: int) -> float:
        rng = trajectory_stream(seed, i)
        path = sample_path(ones, A_kernel, _start_word(initial, x0, rng), T, rng)
        return time_integral(path, V)

    exponents = np.array(map_trajectories(work, n_traj))
    log_mean = logsumexp(exponents) - np.log(n_traj)
    scaled = np.exp(exponents - exponents.max())
    relative_error = scaled.std(ddof=1) / (np.sqrt(n_traj) * scaled.mean())
    ess = float(scaled.sum() ** 2 / np.square(scaled).sum())
    biased = ess < get_settings().montecarlo.min_ess_fraction * n_traj
    result = ScgfEstimate(float(log_mean / T), float(relative_error / T), n_traj, T, ess, biased)
    logger.info(f"MC scgf at T={T}: {result.estimate:.6f} +/- {result.stderr:.2e}, ess {ess:.1f}/{n_traj}")
    if biased:
        logger.warning(
            f"MC scgf at T={T} rests on {ess:.1f} effective trajectories of {n_traj}; the estimate is biased low"
        )
    return result


def mc_entropy(
    A_kernel: KernelField,
    cand: AdmissibleCandidate,
    T: float,
    n_traj: int,
    seed: int,
) -> McEstimate:
    """(1/T) H_T = -(1/T) E_cand[log dP_cand/dP] over candidate paths from its stationary law"""
    require_same_space(A_kernel, cand.kernel_tilde)
    if T <= 0 or n_traj < 2:
        raise ArgumentError("mc_entropy needs T > 0 and at least two trajectories")

    def work(i: int) -> float:
        rng = trajectory_stream(seed, i)
        start = sample_word(cand.stationary_tilde, rng)
        path = sample_path(cand.gamma_tilde, cand.kernel_tilde, start, T, rng)
        return log_rn(path, A_kernel, cand.gamma_tilde, cand.kernel_tilde)

    logs = np.array(map_trajectories(work, n_traj))
    result = McEstimate(float(-logs.mean() / T), _standard_error(logs) / T, n_traj, T)
    logger.info(f"MC entropy at T={T}: {result.estimate:.6f} +/- {result.stderr:.2e}")
    return result


@dataclass
class AgreementReport:
    """Two Monte Carlo means that should agree"""

    left: McEstimate
    right: McEstimate
    difference_stderr: float  # standard error of the paired difference

    @property
    def combined_stderr(self) -> float:
        return float(np.hypot(self.left.stderr, self.right.stderr))

    @property
    def z_score(self) -> float:
        gap = abs(self.left.estimate - self.right.estimate)
        if gap == 0.0:
            return 0.0
        return gap / self.combined_stderr if self.combined_stderr > 0 else float("inf")

    @property
    def agrees(self) -> bool:
        return self.z_score <= AGREEMENT_SE

    def to_document(self) -> Dict[str, Any]:
        return {
            "left": self.left.to_document(),
            "right": self.right.to_document(),
            "combined_stderr": self.combined_stderr,
            "difference_stderr": self.difference_stderr,
            "z_score": self.z_score,
            "agrees": self.agrees,
        }


def martingale_check(
    cand: AdmissibleCandidate,
    G: PotentialField,
    T: float,
    n_traj: int,
    seed: int,
) -> AgreementReport:
    """
    E[sum over rings of G(parent word)] against E[int_0^T gamma G(X_s) ds]

    Paths of the candidate chain start from its stationary law.

    Raises:
        PropertyCheckError: the means differ by more than 5 combined standard errors
    """
    require_same_space(cand.gamma_tilde, G)
    if T <= 0 or n_traj < 2:
        raise ArgumentError("martingale_check needs T > 0 and at least two trajectories")
    compensator = cand.gamma_tilde * G

    def work(i: int):
        rng = trajectory_stream(seed, i)
        start = sample_word(cand.stationary_tilde, rng)
        path = sample_path(cand.gamma_tilde, cand.kernel_tilde, start, T, rng)
        return jump_sum(path, G), time_integral(path, compensator)

    pairs = np.array(map_trajectories(work, n_traj))
    jumps, integrals = pairs[:, 0], pairs[:, 1]
    report = AgreementReport(
        McEstimate(float(jumps.mean()), _standard_error(jumps), n_traj, T),
        McEstimate(float(integrals.mean()), _standard_error(integrals), n_traj, T),
        _standard_error(jumps - integrals),
    )
    if report.z_score > MARTINGALE_FAIL_SE:
        raise PropertyCheckError(
            f"martingale identity fails: {report.left.estimate:.6g} vs "
            f"{report.right.estimate:.6g} ({report.z_score:.1f} SE)"
        )
    if not report.agrees:
        logger.warning(f"Martingale means differ by {report.z_score:.2f} SE")
    return report


def importance_sampling_check(
    A_kernel: KernelField,
    cand: AdmissibleCandidate,
    word: int,
    T: float,
    n_traj: int,
    seed: int,
) -> AgreementReport:
    """
    E_base[Phi exp(log_rn)] against E_cand[Phi] for Phi the occupation fraction of one word

    Both chains start from mu_A so the path density carries no initial factor.
    """
    space = require_same_space(A_kernel, cand.kernel_tilde)
    if T <= 0 or n_traj < 2:
        raise ArgumentError("importance_sampling_check needs T > 0 and at least two trajectories")
    ones = PotentialField.constant(space, 1.0)
    initial = equilibrium_measure(A_kernel)

    def weighted(i: int) -> float:
        rng = trajectory_stream(seed, IMPORTANCE_STREAM, 0, i)
        path = sample_path(ones, A_kernel, sample_word(initial, rng), T, rng)
        density = np.exp(log_rn(path, A_kernel, cand.gamma_tilde, cand.kernel_tilde))
        return empirical_measure(path)(word) * density

    def direct(i: int) -> float:
        rng = trajectory_stream(seed, IMPORTANCE_STREAM, 1, i)
        path = sample_path(cand.gamma_tilde, cand.kernel_tilde, sample_word(initial, rng), T, rng)
        return empirical_measure(path)(word)

    base = np.array(map_trajectories(weighted, n_traj))
    tilted = np.array(map_trajectories(direct, n_traj))
    return AgreementReport(
        McEstimate(float(base.mean()), _standard_error(base), n_traj, T),
        McEstimate(float(tilted.mean()), _standard_error(tilted), n_traj, T),
        float(np.hypot(_standard_error(base), _standard_error(tilted))),
    )


@dataclass
class AnnealStage:
    """One inverse temperature of the annealing ladder"""

    beta: float
    eigenvalue: float  # lambda_beta
    gap: float  # lambda_beta - beta max V
    analytic_mass: float  # mu_beta of the argmax words
    empirical_mass: float  # mean occupation fraction of the argmax words
    empirical_stderr: float
    symmetric_eigenvalue: float
    symmetric_concentration: float  # share of phi^2 dmu_beta on the argmax words

    def to_document(self) -> Dict[str, Any]:
        return dict(self.__dict__)


@dataclass
class AnnealReport:
    """Concentration of the Gibbs stationary law as beta grows"""

    argmax: List[int]
    degenerate: bool
    stages: List[AnnealStage] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([stage.to_document() for stage in self.stages])

    def to_document(self) -> Dict[str, Any]:
        return {
            "argmax": list(self.argmax),
            "degenerate": self.degenerate,
            "stages": [stage.to_document() for stage in self.stages],
        }


def anneal(
    A_kernel: KernelField,
    V: PotentialField,
    betas: Sequence[float],
    T_per_stage: float,
    n_traj: int,
    seed: int,
) -> AnnealReport:
    """
    Gibbs chains for beta V along an increasing ladder of betas

    Each stage reports the analytic and simulated mass of the argmax words of V, lambda_beta
    with its gap to beta max V, and the principal eigenvalue of the symmetrized generator.
    A V with several maximizing words is flagged degenerate and the whole argmax set is
    tracked.

    Raises:
        ArgumentError: betas not strictly increasing, T_per_stage <= 0 or n_traj < 2
        PropertyCheckError: the analytic argmax mass decreases along the ladder
    """
    space = require_same_space(A_kernel, V)
    betas = [float(b) for b in betas]
    if not betas or any(b1 <= b0 for b0, b1 in zip(betas, betas[1:])):
        raise ArgumentError("betas must be a non-empty strictly increasing list")
    if T_per_stage <= 0 or n_traj < 2:
        raise ArgumentError("anneal needs T_per_stage > 0 and at least two trajectories")

    argmax = np.flatnonzero(V.values >= V.max() - ARGMAX_TOL)
    report = AnnealReport([int(x) for x in argmax], argmax.size > 1)
    if report.degenerate:
        logger.warning(f"V has {argmax.size} maximizing words; tracking the whole set")
    target = np.zeros(space.size)
    target[argmax] = 1.0
    indicator = PotentialField(space, target)

    for j, beta in enumerate(betas):
        chain = build_gibbs(A_kernel, V * beta)

        def work(i: int) -> float:
            rng = trajectory_stream(seed, ANNEAL_STREAM, j, i)
            start = sample_word(chain.stationary, rng)
            path = sample_path(chain.gamma, chain.kernel_V, start, T_per_stage, rng)
            return empirical_measure(path).integrate(indicator)

        fractions = np.array(map_trajectories(work, n_traj))
        spectrum = symmetric_eigenvalue(chain)
        stage = AnnealStage(
            beta=beta,
            eigenvalue=chain.eigenvalue,
            gap=chain.eigenvalue - beta * V.max(),
            analytic_mass=chain.stationary.integrate(indicator),
            empirical_mass=float(fractions.mean()),
            empirical_stderr=_standard_error(fractions),
            symmetric_eigenvalue=spectrum.eigenvalue,
            symmetric_concentration=spectrum.concentration(chain.stationary, argmax),
        )
        report.stages.append(stage)
        logger.info(
            f"Anneal beta={beta:g}: lambda={stage.eigenvalue:.6g}, "
            f"mass {stage.analytic_mass:.6f} (empirical {stage.empirical_mass:.6f})"
        )

    masses = [stage.analytic_mass for stage in report.stages]
    for b0, m0, m1 in zip(betas, masses, masses[1:]):
        if m1 < m0 - MONOTONE_TOL:
            raise PropertyCheckError(f"argmax mass decreases after beta={b0:g}: {m0:.8f} -> {m1:.8f}")
    return report
