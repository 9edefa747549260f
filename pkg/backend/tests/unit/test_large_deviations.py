"""
Unit tests for the level-2 rate function and the scaled cumulant generating functional
"""

import numpy as np
import pytest

from core.exceptions import ArgumentError
from models.cylinder_space import CylinderSpace
from models.fields import Measure, PotentialField
from models.rate_function import DUAL, PRIMAL, RateFunctionResult
from services.gibbs_builder import build_gibbs
from services.large_deviations import (
    equilibrium_identity_check,
    fenchel_check,
    lambda_directional_derivative,
    lambda_gradient,
    rate_dual,
    rate_primal,
    rate_scan,
    scgf,
    scgf_properties_check,
)
from services.transfer_operator import equilibrium_measure
from tests.conftest import EXAMPLE_LAMBDA, EXAMPLE_STATIONARY


def two_state_rate(p: float) -> float:
    """I(p, 1 - p) for the uniform two-state kernel"""
    return 0.5 - np.sqrt(p * (1.0 - p))


class TestScgf:

    @pytest.mark.unit
    @pytest.mark.ldp
    def test_equals_lambda(self, example_kernel, example_potential):
        assert scgf(example_kernel, example_potential) == pytest.approx(EXAMPLE_LAMBDA, abs=1e-12)

    @pytest.mark.unit
    @pytest.mark.ldp
    def test_lipschitz_and_convex(self, random_instance):
        kernel, _ = random_instance(d=2, k=2)
        report = scgf_properties_check(kernel, trials=20, seed=5, scale=2.0)
        assert report.lipschitz_violations == 0
        assert report.convexity_violations == 0
        assert report.max_lipschitz_ratio <= 1.0 + 1e-12
        assert report.to_document()["trials"] == 20

    @pytest.mark.unit
    @pytest.mark.ldp
    def test_trials_must_be_positive(self, example_kernel):
        with pytest.raises(ArgumentError):
            scgf_properties_check(example_kernel, trials=0)

    @pytest.mark.unit
    @pytest.mark.ldp
    def test_gradient_is_gibbs_measure(self, random_instance, rng):
        kernel, V = random_instance(d=2, k=2)
        assert np.allclose(lambda_gradient(kernel, V).mass, build_gibbs(kernel, V).stationary.mass)
        for _ in range(3):
            direction = PotentialField(kernel.space, rng.normal(size=kernel.space.size))
            fd, exact = lambda_directional_derivative(kernel, V, direction)
            assert fd == pytest.approx(exact, abs=1e-7)


class TestRatePrimal:
    """I(nu) = -inf_g int e^{-g} L(e^g) dnu"""

    @pytest.mark.unit
    @pytest.mark.ldp
    @pytest.mark.parametrize("p", [0.1, 0.3, 0.5, 0.9])
    def test_two_state_closed_form(self, example_kernel, binary_space, p):
        result = rate_primal(example_kernel, Measure(binary_space, [p, 1.0 - p]))
        assert result.value == pytest.approx(two_state_rate(p), abs=1e-10)
        assert result.route == PRIMAL
        assert result.attained
        assert result.minimizer_g is not None
        assert result.maximizer_V is None

    @pytest.mark.unit
    @pytest.mark.ldp
    def test_reference_values(self, example_kernel, binary_space):
        assert rate_primal(example_kernel, Measure(binary_space, [0.9, 0.1])).value == pytest.approx(0.2, abs=1e-10)
        dirac = rate_primal(example_kernel, Measure.dirac(binary_space, 0))
        assert dirac.value == pytest.approx(0.5, abs=1e-12)
        assert not dirac.attained

    @pytest.mark.unit
    @pytest.mark.ldp
    def test_zero_at_base_equilibrium(self, random_instance):
        kernel, _ = random_instance(d=2, k=3)
        result = rate_primal(kernel, equilibrium_measure(kernel))
        assert result.value == pytest.approx(0.0, abs=1e-10)

    @pytest.mark.unit
    @pytest.mark.ldp
    def test_nonnegative_on_random_measures(self, random_instance, rng):
        kernel, _ = random_instance(d=3, k=1)
        for _ in range(10):
            nu = Measure.from_weights(kernel.space, rng.random(kernel.space.size))
            assert rate_primal(kernel, nu).value >= 0.0

    @pytest.mark.unit
    @pytest.mark.ldp
    def test_convex_along_segments(self, random_instance, rng):
        kernel, _ = random_instance(d=2, k=2)
        size = kernel.space.size
        for _ in range(5):
            start = rng.random(size) + 0.1
            end = rng.random(size) + 0.1
            start, end = start / start.sum(), end / end.sum()
            I_start = rate_primal(kernel, Measure(kernel.space, start)).value
            I_end = rate_primal(kernel, Measure(kernel.space, end)).value
            for a in np.linspace(0.1, 0.9, 5):
                mid = rate_primal(kernel, Measure(kernel.space, a * start + (1.0 - a) * end)).value
                assert mid <= a * I_start + (1.0 - a) * I_end + 1e-7

    @pytest.mark.unit
    @pytest.mark.ldp
    def test_partial_support(self, random_instance):
        kernel, _ = random_instance(d=2, k=2)
        space = kernel.space
        nu = Measure.from_weights(space, [0.4, 0.3, 0.0, 0.3])
        result = rate_primal(kernel, nu)
        assert np.isfinite(result.value)
        assert result.value > 0.0
        assert result.potential(2) == 0.0

    @pytest.mark.unit
    @pytest.mark.ldp
    def test_rejects_non_probability(self, example_kernel, binary_space):
        with pytest.raises(ArgumentError):
            rate_primal(example_kernel, Measure(binary_space, [0.5, 0.6]))


class TestRateDual:
    """I(nu) = sup_V int V dnu - lambda_V"""

    @pytest.mark.unit
    @pytest.mark.ldp
    @pytest.mark.parametrize("p", [0.2, 0.5, 0.9])
    def test_agrees_with_primal(self, example_kernel, binary_space, p):
        nu = Measure(binary_space, [p, 1.0 - p])
        dual = rate_dual(example_kernel, nu)
        assert dual.route == DUAL
        assert dual.attained
        assert dual.value == pytest.approx(two_state_rate(p), abs=1e-8)
        assert np.abs(dual.equilibrium.mass - nu.mass).max() <= 1e-7

    @pytest.mark.unit
    @pytest.mark.ldp
    def test_random_instances(self, random_instance, rng):
        for d, k in [(2, 2), (3, 1)]:
            kernel, _ = random_instance(d=d, k=k)
            nu = Measure.from_weights(kernel.space, rng.uniform(0.2, 1.0, kernel.space.size))
            primal = rate_primal(kernel, nu)
            dual = rate_dual(kernel, nu)
            assert abs(primal.value - dual.value) <= 1e-7

    @pytest.mark.unit
    @pytest.mark.ldp
    def test_unattained_supremum(self, example_kernel, binary_space):
        dual = rate_dual(example_kernel, Measure.dirac(binary_space, 1))
        assert not dual.attained
        assert dual.value <= 0.5 + 1e-9
        assert dual.value == pytest.approx(0.5, abs=1e-2)

    @pytest.mark.unit
    @pytest.mark.ldp
    def test_result_document(self, example_kernel, binary_space):
        dual = rate_dual(example_kernel, Measure(binary_space, [0.3, 0.7]))
        restored = RateFunctionResult.from_document(dual.to_document())
        assert restored.value == dual.value
        assert restored.route == DUAL
        assert np.array_equal(restored.equilibrium.mass, dual.equilibrium.mass)


class TestDualityChecks:

    @pytest.mark.unit
    @pytest.mark.ldp
    def test_equilibrium_identity(self, example_kernel, example_potential):
        report = equilibrium_identity_check(example_kernel, example_potential, restarts=3, seed=1)
        assert report.rate == pytest.approx(EXAMPLE_STATIONARY[1] - EXAMPLE_LAMBDA, abs=1e-9)
        assert report.gap <= 1e-7
        assert len(report.restart_distances) == 3
        assert max(report.restart_distances) <= 1e-7

    @pytest.mark.unit
    @pytest.mark.ldp
    def test_fenchel_inequality(self, random_instance, rng):
        kernel, V = random_instance(d=2, k=2)
        for _ in range(5):
            nu = Measure.from_weights(kernel.space, rng.random(kernel.space.size))
            assert fenchel_check(kernel, V, nu) >= -1e-8

    @pytest.mark.unit
    @pytest.mark.ldp
    def test_rate_scan_table(self, example_kernel, binary_space):
        measures = [Measure(binary_space, [p, 1.0 - p]) for p in (0.1, 0.5, 1.0)]
        frame = rate_scan(example_kernel, measures)
        assert list(frame.columns) == ["nu_1", "nu_2", "I_primal", "I_dual", "gap", "dual_attained"]
        assert frame["I_primal"].tolist() == pytest.approx([0.2, 0.0, 0.5], abs=1e-9)
        assert frame["dual_attained"].tolist() == [True, True, False]

    @pytest.mark.unit
    @pytest.mark.ldp
    def test_rate_scan_reuses_results(self, example_kernel, binary_space):
        measures = [Measure(binary_space, [p, 1.0 - p]) for p in (0.1, 0.5)]
        pairs = [(rate_primal(example_kernel, nu), rate_dual(example_kernel, nu)) for nu in measures]
        frame = rate_scan(example_kernel, measures, results=pairs)
        assert frame["I_primal"].tolist() == [primal.value for primal, _ in pairs]
        with pytest.raises(ArgumentError):
            rate_scan(example_kernel, measures, results=pairs[:1])

    @pytest.mark.unit
    @pytest.mark.ldp
    def test_gibbs_measure_rate(self, random_instance):
        """I(mu_V) = int V dmu_V - lambda_V"""
        kernel, V = random_instance(d=2, k=2)
        chain = build_gibbs(kernel, V)
        rate = rate_primal(kernel, chain.stationary).value
        assert rate == pytest.approx(chain.stationary.integrate(V) - chain.eigenvalue, abs=1e-8)
        assert rate_primal(kernel, chain.stationary).value >= 0.0


class TestSpaceChecks:

    @pytest.mark.unit
    @pytest.mark.ldp
    def test_space_mismatch(self, example_kernel):
        with pytest.raises(ArgumentError):
            rate_primal(example_kernel, Measure.uniform(CylinderSpace(2, 2)))
