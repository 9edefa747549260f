"""
Experiment Runner Service - validates experiment documents and runs one command on them
Each command reads one config, writes its artifacts into one output directory and returns
a short summary; identical config and seed give identical files
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union
import logging

import numpy as np
import pandas as pd
from pydantic import ValidationError

from core.config import get_settings
from core.exceptions import ArgumentError, ConfigValidationError
from models.cylinder_space import CylinderSpace
from models.experiment_config import (
    CandidateSpec,
    ExperimentConfig,
    KernelSpec,
    PotentialSpec,
    schema_diagnostics,
)
from models.fields import KernelField, Measure, PotentialField
from models.gibbs_chain import AdmissibleCandidate
from services.gibbs_builder import (
    admissible_candidate,
    build_gibbs,
    eigenprobability_relation,
    pressure,
    relative_entropy,
)
from services.large_deviations import rate_dual, rate_primal, rate_scan
from services.monte_carlo import anneal, martingale_check, mc_entropy, mc_scgf
from services.report_writer import ReportWriter
from services.semigroup import eigen_equation_check, perron_solve
from services.trajectory_sampler import (
    empirical_measure,
    sample_path,
    sample_word,
    trajectory_frame,
    trajectory_stream,
)
from services.transfer_operator import equilibrium_measure, normalize

logger = logging.getLogger(__name__)

COMMANDS = ("solve", "gibbs", "entropy", "pressure-audit", "rate", "simulate", "mc", "anneal")
PROBABILITY_TOL = 1e-9


@dataclass(frozen=True)
class Diagnostic:
    """One validation finding; only errors block a run"""

    level: str  # "error" or "warning"
    path: str
    message: str

    def __str__(self):
        return f"{self.level}: {self.path}: {self.message}"


class ExperimentValidator:
    """Schema and semantic checks of experiment documents; never mutates the config"""

    def validate_document(self, document: Union[str, bytes, dict]) -> List[Diagnostic]:
        try:
            if isinstance(document, dict):
                config = ExperimentConfig.model_validate(document)
            else:
                config = ExperimentConfig.model_validate_json(document)
        except ValidationError as e:
            return [Diagnostic("error", *line.split(": ", 1)) for line in schema_diagnostics(e)]
        return self.validate(config)

    def validate(self, config: ExperimentConfig) -> List[Diagnostic]:
        issues = self.validate_space(config)
        if any(issue.level == "error" for issue in issues):
            return issues
        space = CylinderSpace(config.space.d, config.space.k, self._theta(config))
        issues += self.validate_kernel(config.kernel, space, "kernel")
        issues += self.validate_potential(config.potential, space, "potential")
        if config.entropy.candidate is not None:
            issues += self.validate_candidate(config.entropy.candidate, space, "entropy.candidate")
        issues += self.validate_parameters(config, space)
        return issues

    def _theta(self, config: ExperimentConfig) -> float:
        return get_settings().default_theta if config.space.theta is None else config.space.theta

    def validate_space(self, config: ExperimentConfig) -> List[Diagnostic]:
        issues = []
        if config.space.d < 1:
            issues.append(Diagnostic("error", "space.d", f"must be at least 1, got {config.space.d}"))
        if config.space.k < 1:
            issues.append(Diagnostic("error", "space.k", f"must be at least 1, got {config.space.k}"))
        theta = self._theta(config)
        if not 0.0 < theta < 1.0:
            issues.append(Diagnostic("error", "space.theta", f"must lie in (0, 1), got {theta}"))
        elif theta > 0.5:
            issues.append(
                Diagnostic("warning", "space.theta", f"{theta} exceeds 1/2; the Lipschitz estimates assume theta <= 1/2")
            )
        return issues

    def validate_potential(self, spec: PotentialSpec, space: CylinderSpace, path: str) -> List[Diagnostic]:
        given = [name for name in ("values", "first_symbols", "words", "constant") if getattr(spec, name) is not None]
        if len(given) != 1:
            return [Diagnostic("error", path, f"give exactly one of values, first_symbols, words, constant (got {given})")]
        issues = []
        if spec.values is not None and len(spec.values) != space.size:
            issues.append(Diagnostic("error", f"{path}.values", f"length {len(spec.values)} != d^k = {space.size}"))
        if spec.first_symbols is not None:
            n = len(spec.first_symbols)
            if not any(space.d**m == n for m in range(space.k + 1)):
                issues.append(Diagnostic("error", f"{path}.first_symbols", f"length {n} is not d^m with m <= k"))
        if spec.words is not None:
            for label in spec.words:
                try:
                    space.parse(label)
                except ValueError as e:
                    issues.append(Diagnostic("error", f"{path}.words.{label}", str(e)))
        return issues

    def validate_kernel(self, spec: KernelSpec, space: CylinderSpace, path: str) -> List[Diagnostic]:
        given = [name for name in ("raw", "matrix") if getattr(spec, name) is not None]
        if spec.uniform:
            given.append("uniform")
        if len(given) != 1:
            return [Diagnostic("error", path, f"give exactly one of raw, matrix, uniform (got {given})")]
        if spec.raw is not None:
            return self.validate_potential(spec.raw, space, f"{path}.raw")
        if spec.matrix is None:
            return []
        weights = np.asarray(spec.matrix, dtype=float)
        if weights.shape != (space.size, space.d):
            return [Diagnostic("error", f"{path}.matrix", f"shape {weights.shape} != (d^k, d) = {(space.size, space.d)}")]
        issues = []
        if np.any(weights <= 0.0):
            issues.append(Diagnostic("error", f"{path}.matrix", "weights must be strictly positive"))
        if not spec.normalize and np.abs(weights.sum(axis=1) - 1.0).max() > 1e-12:
            issues.append(Diagnostic("error", f"{path}.matrix", "rows must sum to one when normalize is false"))
        return issues

    def validate_candidate(self, spec: CandidateSpec, space: CylinderSpace, path: str) -> List[Diagnostic]:
        issues = self.validate_potential(spec.gamma, space, f"{path}.gamma")
        if not issues and build_potential(spec.gamma, space).min() <= 0.0:
            issues.append(Diagnostic("error", f"{path}.gamma", "rates must be strictly positive"))
        if spec.kernel is not None:
            issues += self.validate_kernel(spec.kernel, space, f"{path}.kernel")
        return issues

    def _validate_measure(self, mass: List[float], space: CylinderSpace, path: str) -> List[Diagnostic]:
        arr = np.asarray(mass, dtype=float)
        if arr.shape != (space.size,):
            return [Diagnostic("error", path, f"length {arr.size} != d^k = {space.size}")]
        if np.any(arr < 0.0) or abs(arr.sum() - 1.0) > PROBABILITY_TOL:
            return [Diagnostic("error", path, "must be a probability vector")]
        return []

    def validate_parameters(self, config: ExperimentConfig, space: CylinderSpace) -> List[Diagnostic]:
        issues = []
        if config.pressure.audit_count is not None and config.pressure.audit_count < 0:
            issues.append(Diagnostic("error", "pressure.audit_count", "must be nonnegative"))
        for i, mass in enumerate(config.rate.measures):
            issues += self._validate_measure(mass, space, f"rate.measures.{i}")
        grid = config.rate.grid
        if grid is not None:
            issues += self._validate_measure(grid.start, space, "rate.grid.start")
            issues += self._validate_measure(grid.end, space, "rate.grid.end")
            if any(not 0.0 <= a <= 1.0 for a in grid.alphas):
                issues.append(Diagnostic("error", "rate.grid.alphas", "every alpha must lie in [0, 1]"))
        if config.simulate.T < 0:
            issues.append(Diagnostic("error", "simulate.T", "must be nonnegative"))
        if config.simulate.x0 is not None and not 0 <= config.simulate.x0 < space.size:
            issues.append(Diagnostic("error", "simulate.x0", f"must lie in 0..{space.size - 1}"))
        for block in ("mc", "anneal"):
            params = getattr(config, block)
            horizon = params.T if block == "mc" else params.T_per_stage
            if horizon <= 0:
                issues.append(Diagnostic("error", f"{block}.{'T' if block == 'mc' else 'T_per_stage'}", "must be positive"))
            if params.n_traj < 2:
                issues.append(Diagnostic("error", f"{block}.n_traj", "must be at least 2"))
        if config.mc.observable is not None:
            issues += self.validate_potential(config.mc.observable, space, "mc.observable")
        betas = config.anneal.betas
        if not betas or any(b1 <= b0 for b0, b1 in zip(betas, betas[1:])):
            issues.append(Diagnostic("error", "anneal.betas", "must be a non-empty strictly increasing list"))
        for name, value in config.tolerances.model_dump().items():
            if value is not None and value <= 0:
                issues.append(Diagnostic("error", f"tolerances.{name}", "must be positive"))
        if config.rate.tol is not None and config.rate.tol <= 0:
            issues.append(Diagnostic("error", "rate.tol", "must be positive"))
        return issues


def build_potential(spec: PotentialSpec, space: CylinderSpace) -> PotentialField:
    if spec.values is not None:
        return PotentialField(space, spec.values)
    if spec.first_symbols is not None:
        return PotentialField.first_symbols(space, spec.first_symbols)
    if spec.words is not None:
        return PotentialField.from_words(space, spec.words, spec.default)
    return PotentialField.constant(space, spec.constant if spec.constant is not None else spec.default)


def build_kernel(spec: KernelSpec, space: CylinderSpace) -> KernelField:
    """Normalized kernel from its spec"""
    if spec.uniform:
        return KernelField.uniform(space)
    if spec.raw is not None:
        return normalize(build_potential(spec.raw, space))
    kernel = KernelField.from_matrix(space, spec.matrix)
    return kernel if kernel.is_normalized else normalize(kernel)


@dataclass
class RunResult:
    """Outcome of one command"""

    command: str
    summary: Dict[str, Any]
    artifacts: List[Path] = field(default_factory=list)


class ExperimentRunner:
    """Runs one command of an experiment document"""

    def __init__(
        self,
        config: ExperimentConfig,
        out_dir: Union[str, Path],
        seed: Optional[int] = None,
    ):
        issues = ExperimentValidator().validate(config)
        errors = [str(issue) for issue in issues if issue.level == "error"]
        if errors:
            raise ConfigValidationError(errors)
        for issue in issues:
            logger.warning(str(issue))

        self.config = config
        self.seed = config.seed if seed is None else seed
        self.writer = ReportWriter(out_dir)
        theta = get_settings().default_theta if config.space.theta is None else config.space.theta
        self.space = CylinderSpace(config.space.d, config.space.k, theta)
        self._apply_tolerances()
        self.kernel = build_kernel(config.kernel, self.space)
        self.V = build_potential(config.potential, self.space)

    def _apply_tolerances(self) -> None:
        settings = get_settings()
        overrides = self.config.tolerances
        targets = {
            "eigen_tol": settings.power,
            "residual_tol": settings.power,
            "uniformization_tol": settings.semigroup,
            "series_tol": settings.semigroup,
            "gradient_tol": settings.newton,
        }
        for name, section in targets.items():
            value = getattr(overrides, name)
            if value is not None:
                setattr(section, name, value)
                logger.info(f"Tolerance override {name}={value}")

    def run(self, command: str) -> RunResult:
        handlers: Dict[str, Callable[[], Dict[str, Any]]] = {
            "solve": self._solve,
            "gibbs": self._gibbs,
            "entropy": self._entropy,
            "pressure-audit": self._pressure_audit,
            "rate": self._rate,
            "simulate": self._simulate,
            "mc": self._mc,
            "anneal": self._anneal,
        }
        if command not in handlers:
            raise ArgumentError(f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}")
        logger.info(f"Running {command} on {self.space!r} with seed {self.seed}")
        summary = handlers[command]()
        return RunResult(command, summary, list(self.writer.written))

    def _solve(self) -> Dict[str, Any]:
        solution = perron_solve(self.kernel, None, self.V)
        document = solution.to_document()
        document["eigen_equation_defect"] = eigen_equation_check(solution, self.kernel, self.V)
        self.writer.write_json("solution.json", document)
        return {"lambda": solution.eigenvalue}

    def _gibbs(self) -> Dict[str, Any]:
        chain = build_gibbs(self.kernel, self.V)
        document = chain.to_document()
        document["eigenprobability_residual"] = eigenprobability_relation(chain)
        document["relative_entropy"] = relative_entropy(chain.as_candidate(), self.kernel)
        self.writer.write_json("gibbs.json", document)
        return {"lambda": chain.eigenvalue}

    def _candidate(self) -> AdmissibleCandidate:
        spec = self.config.entropy.candidate
        if spec is None:
            return build_gibbs(self.kernel, self.V).as_candidate()
        kernel = self.kernel if spec.kernel is None else build_kernel(spec.kernel, self.space)
        return admissible_candidate(build_potential(spec.gamma, self.space), kernel)

    def _entropy(self) -> Dict[str, Any]:
        cand = self._candidate()
        entropy = relative_entropy(cand, self.kernel)
        energy = cand.stationary_tilde.integrate(self.V)
        self.writer.write_json(
            "entropy.json",
            {"candidate": cand.to_document(), "entropy": entropy, "energy": energy, "value": entropy + energy},
        )
        return {"entropy": entropy}

    def _pressure_audit(self) -> Dict[str, Any]:
        report = pressure(self.kernel, self.V, self.config.pressure.audit_count, self.seed)
        self.writer.write_json("pressure.json", report.to_document())
        frame = pd.DataFrame(report.audit_records(), columns=["index", "entropy", "energy", "value", "gap"])
        self.writer.write_frame("audit.csv", frame)
        return {"lambda": report.eigenvalue, "gibbs_value": report.gibbs_value, "audit_max": report.audit_max}

    def _rate_measures(self) -> List[Measure]:
        params = self.config.rate
        measures = [Measure.from_weights(self.space, mass) for mass in params.measures]
        if params.grid is not None:
            start = np.asarray(params.grid.start, dtype=float)
            end = np.asarray(params.grid.end, dtype=float)
            measures += [Measure.from_weights(self.space, a * start + (1.0 - a) * end) for a in params.grid.alphas]
        if not measures:
            measures.append(equilibrium_measure(self.kernel))
        return measures

    def _rate(self) -> Dict[str, Any]:
        measures = self._rate_measures()
        tol = self.config.rate.tol
        pairs = [(rate_primal(self.kernel, nu, tol), rate_dual(self.kernel, nu, tol)) for nu in measures]
        results = [
            {"nu": nu.mass.tolist(), "primal": primal.to_document(), "dual": dual.to_document()}
            for nu, (primal, dual) in zip(measures, pairs)
        ]
        frame = rate_scan(self.kernel, measures, tol, results=pairs)
        self.writer.write_json("rate.json", {"results": results})
        self.writer.write_frame("rate_scan.csv", frame)
        return {"measures": len(measures), "max_gap": float(frame["gap"].max())}

    def _chain_rates(self, which: str) -> Tuple[PotentialField, KernelField, Measure]:
        if which == "gibbs":
            chain = build_gibbs(self.kernel, self.V)
            return chain.gamma, chain.kernel_V, chain.stationary
        return PotentialField.constant(self.space, 1.0), self.kernel, equilibrium_measure(self.kernel)

    def _simulate(self) -> Dict[str, Any]:
        params = self.config.simulate
        gamma, kernel, stationary = self._chain_rates(params.chain)
        rng = trajectory_stream(self.seed, 0)
        x0 = sample_word(stationary, rng) if params.x0 is None else params.x0
        traj = sample_path(gamma, kernel, x0, params.T, rng)
        self.writer.write_frame("trajectory.csv", trajectory_frame(traj))
        document: Dict[str, Any] = {"x0": x0, "horizon": params.T, "jumps": traj.n_jumps, "chain": params.chain}
        if params.T > 0:
            document["empirical"] = empirical_measure(traj).to_document()
            document["stationary"] = stationary.mass.tolist()
        self.writer.write_json("empirical.json", document)
        return {"jumps": traj.n_jumps}

    def _mc(self) -> Dict[str, Any]:
        params = self.config.mc
        document: Dict[str, Any] = {"seed": self.seed}
        if "scgf" in params.estimators:
            estimate = mc_scgf(self.kernel, self.V, params.T, params.n_traj, self.seed)
            eigenvalue = perron_solve(self.kernel, None, self.V).eigenvalue
            document["scgf"] = {**estimate.to_document(), "lambda": eigenvalue, "error": estimate.estimate - eigenvalue}
        cand = self._candidate()
        if "entropy" in params.estimators:
            estimate = mc_entropy(self.kernel, cand, params.T, params.n_traj, self.seed)
            document["entropy"] = {**estimate.to_document(), "closed_form": relative_entropy(cand, self.kernel)}
        if "martingale" in params.estimators:
            G = self.V if params.observable is None else build_potential(params.observable, self.space)
            document["martingale"] = martingale_check(cand, G, params.T, params.n_traj, self.seed).to_document()
        self.writer.write_json("mc.json", document)
        return {name: document[name] for name in ("scgf", "entropy", "martingale") if name in document}

    def _anneal(self) -> Dict[str, Any]:
        params = self.config.anneal
        report = anneal(self.kernel, self.V, params.betas, params.T_per_stage, params.n_traj, self.seed)
        self.writer.write_json("anneal.json", report.to_document())
        self.writer.write_frame("anneal.csv", report.to_frame())
        return {"final_mass": report.stages[-1].analytic_mass}


def validate(config: Union[ExperimentConfig, str, bytes, dict]) -> List[Diagnostic]:
    """All diagnostics of a config or raw document; never raises on bad input"""
    validator = ExperimentValidator()
    if isinstance(config, ExperimentConfig):
        return validator.validate(config)
    return validator.validate_document(config)


def run(
    command: str,
    config: ExperimentConfig,
    out_dir: Union[str, Path],
    seed: Optional[int] = None,
) -> RunResult:
    """Run one command; see ExperimentRunner"""
    return ExperimentRunner(config, out_dir, seed).run(command)
