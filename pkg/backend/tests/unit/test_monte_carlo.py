"""
Unit tests for the Monte Carlo estimators
Seeds are fixed; tolerances are several standard errors wide
"""

import numpy as np
import pytest

from core.config import get_settings
from core.exceptions import ArgumentError
from models.fields import PotentialField
from services.gibbs_builder import admissible_candidate, build_gibbs, random_candidate, relative_entropy
from services.monte_carlo import (
    AgreementReport,
    McEstimate,
    ScgfEstimate,
    anneal,
    importance_sampling_check,
    martingale_check,
    mc_entropy,
    mc_scgf,
)
from tests.conftest import EXAMPLE_LAMBDA


@pytest.fixture
def doubled_clock(example_kernel):
    """Same kernel as the a-priori chain, rates 2"""
    return admissible_candidate(PotentialField.constant(example_kernel.space, 2.0), example_kernel)


class TestMcScgf:

    @pytest.mark.unit
    @pytest.mark.montecarlo
    @pytest.mark.parametrize("c", [0.0, 0.7, -1.3])
    def test_constant_potential_is_exact(self, example_kernel, c):
        estimate = mc_scgf(example_kernel, PotentialField.constant(example_kernel.space, c), 5.0, 20, seed=1)
        assert estimate.estimate == pytest.approx(c, abs=1e-12)
        assert estimate.stderr == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.unit
    @pytest.mark.montecarlo
    def test_worked_example(self, example_kernel, example_potential):
        """Plain sampling underestimates lambda slightly at finite T"""
        estimate = mc_scgf(example_kernel, example_potential, 20.0, 4000, seed=7)
        assert isinstance(estimate, ScgfEstimate)
        assert estimate.estimate == pytest.approx(EXAMPLE_LAMBDA, abs=0.05)
        assert 0.0 < estimate.stderr < 0.05

    @pytest.mark.unit
    @pytest.mark.montecarlo
    def test_constant_potential_keeps_every_sample(self, example_kernel):
        estimate = mc_scgf(example_kernel, PotentialField.constant(example_kernel.space, 0.0), 5.0, 40, seed=1)
        assert estimate.ess == pytest.approx(40.0)
        assert estimate.ess_fraction == pytest.approx(1.0)
        assert not estimate.biased

    @pytest.mark.unit
    @pytest.mark.montecarlo
    def test_short_horizon_is_not_flagged(self, example_kernel, example_potential):
        """At T = 1 the exponent variance is small and most trajectories carry weight"""
        estimate = mc_scgf(example_kernel, example_potential, 1.0, 2000, seed=12)
        assert estimate.ess_fraction > 0.3
        assert not estimate.biased
        assert estimate.to_document()["biased"] is False

    @pytest.mark.unit
    @pytest.mark.montecarlo
    def test_threshold_comes_from_settings(self, example_kernel, example_potential):
        get_settings().montecarlo.min_ess_fraction = 1.0
        estimate = mc_scgf(example_kernel, example_potential, 1.0, 200, seed=12)
        assert estimate.ess < 200
        assert estimate.biased

    @pytest.mark.unit
    @pytest.mark.montecarlo
    @pytest.mark.slow
    def test_long_horizon_weight_collapse(self, example_kernel, example_potential):
        """
        T = 200 with 10^4 paths, seed 2024: the 0.05 tolerance around lambda is not met.

        The exponent variance grows like T / 2, so a few trajectories carry the sample mean
        and the log-mean sits below lambda by far more than stderr. The estimate is flagged.
        """
        estimate = mc_scgf(example_kernel, example_potential, 200.0, 10_000, seed=2024)
        assert estimate.biased
        assert estimate.ess_fraction < 0.01
        assert estimate.estimate < EXAMPLE_LAMBDA - 0.05
        assert EXAMPLE_LAMBDA - estimate.estimate > 3.0 * estimate.stderr

    @pytest.mark.unit
    @pytest.mark.montecarlo
    def test_fixed_start(self, example_kernel, example_potential):
        from_top = mc_scgf(example_kernel, example_potential, 20.0, 2000, seed=3, x0=1)
        assert from_top.estimate == pytest.approx(EXAMPLE_LAMBDA, abs=0.08)

    @pytest.mark.unit
    @pytest.mark.montecarlo
    def test_preconditions(self, example_kernel, example_potential):
        with pytest.raises(ArgumentError):
            mc_scgf(example_kernel, example_potential, 0.0, 10, seed=0)
        with pytest.raises(ArgumentError):
            mc_scgf(example_kernel, example_potential, 1.0, 1, seed=0)

    @pytest.mark.unit
    @pytest.mark.montecarlo
    def test_thread_pool_matches_serial(self, random_instance):
        kernel, V = random_instance(d=2, k=2)
        serial = mc_scgf(kernel, V, 3.0, 200, seed=11)
        get_settings().montecarlo.workers = 2
        pooled = mc_scgf(kernel, V, 3.0, 200, seed=11)
        assert pooled.estimate == serial.estimate
        assert pooled.stderr == serial.stderr

    @pytest.mark.unit
    @pytest.mark.montecarlo
    def test_document(self):
        estimate = McEstimate(0.5, 0.01, 100, 10.0)
        assert McEstimate.from_document(estimate.to_document()) == estimate
        flagged = ScgfEstimate(0.6, 0.002, 100, 200.0, ess=2.5, biased=True)
        doc = flagged.to_document()
        assert doc["ess_fraction"] == pytest.approx(0.025)
        assert ScgfEstimate.from_document(doc) == flagged


class TestMcEntropy:

    @pytest.mark.unit
    @pytest.mark.montecarlo
    def test_doubled_clock(self, example_kernel, doubled_clock):
        estimate = mc_entropy(example_kernel, doubled_clock, 50.0, 2000, seed=5)
        assert relative_entropy(doubled_clock, example_kernel) == pytest.approx(1.0 - 2.0 * np.log(2.0))
        assert estimate.estimate == pytest.approx(1.0 - 2.0 * np.log(2.0), abs=0.02)

    @pytest.mark.unit
    @pytest.mark.montecarlo
    def test_gibbs_candidate(self, example_kernel, example_potential):
        chain = build_gibbs(example_kernel, example_potential)
        exact = relative_entropy(chain.as_candidate(), example_kernel)
        estimate = mc_entropy(example_kernel, chain.as_candidate(), 50.0, 2000, seed=6)
        assert exact == pytest.approx(-(2.0 - np.sqrt(2.0)) / 4.0, abs=1e-9)
        assert estimate.estimate == pytest.approx(exact, abs=0.02)

    @pytest.mark.unit
    @pytest.mark.montecarlo
    @pytest.mark.slow
    def test_doubled_clock_long_horizon(self, example_kernel, doubled_clock):
        estimate = mc_entropy(example_kernel, doubled_clock, 200.0, 10_000, seed=2024)
        assert estimate.estimate == pytest.approx(1.0 - 2.0 * np.log(2.0), abs=0.02)

    @pytest.mark.unit
    @pytest.mark.montecarlo
    def test_base_chain_has_zero_entropy(self, example_kernel):
        base = admissible_candidate(PotentialField.constant(example_kernel.space, 1.0), example_kernel)
        estimate = mc_entropy(example_kernel, base, 10.0, 50, seed=2)
        assert estimate.estimate == pytest.approx(0.0, abs=1e-12)


class TestMartingale:

    @pytest.mark.unit
    @pytest.mark.montecarlo
    def test_zero_weight(self, doubled_clock, binary_space):
        report = martingale_check(doubled_clock, PotentialField.constant(binary_space, 0.0), 5.0, 20, seed=1)
        assert report.left.estimate == 0.0
        assert report.right.estimate == 0.0
        assert report.z_score == 0.0
        assert report.agrees

    @pytest.mark.unit
    @pytest.mark.montecarlo
    def test_counting_process(self, example_kernel, binary_space):
        """With unit rates the compensator of the ring count is T itself"""
        unit = admissible_candidate(PotentialField.constant(binary_space, 1.0), example_kernel)
        report = martingale_check(unit, PotentialField.constant(binary_space, 1.0), 10.0, 2000, seed=4)
        assert isinstance(report, AgreementReport)
        assert report.right.estimate == pytest.approx(10.0)
        assert report.z_score <= 4.0

    @pytest.mark.unit
    @pytest.mark.montecarlo
    def test_gibbs_chain(self, example_kernel, example_potential, binary_space):
        chain = build_gibbs(example_kernel, example_potential)
        G = PotentialField(binary_space, [1.0, -0.5])
        report = martingale_check(chain.as_candidate(), G, 10.0, 2000, seed=8)
        assert report.z_score <= 4.0
        assert set(report.to_document()) >= {"left", "right", "z_score", "agrees"}


    @pytest.mark.unit
    @pytest.mark.montecarlo
    @pytest.mark.slow
    def test_identity_at_scale(self, example_kernel, example_potential, doubled_clock, random_instance, rng):
        """Three chains, two observables each, 10^4 paths"""
        kernel, _ = random_instance(d=2, k=2)
        cases = [
            (build_gibbs(example_kernel, example_potential).as_candidate(), [[1.0, -0.5], [0.3, 2.0]]),
            (doubled_clock, [[1.0, -0.5], [0.3, 2.0]]),
            (random_candidate(kernel.space, rng), rng.uniform(-1.0, 1.0, (2, kernel.space.size))),
        ]
        for j, (cand, observables) in enumerate(cases):
            space = cand.kernel_tilde.space
            for m, values in enumerate(observables):
                report = martingale_check(cand, PotentialField(space, values), 10.0, 10_000, seed=300 + 2 * j + m)
                assert report.agrees



class TestImportanceSampling:

    @pytest.mark.unit
    @pytest.mark.montecarlo
    def test_gibbs_candidate(self, example_kernel, example_potential):
        chain = build_gibbs(example_kernel, example_potential)
        report = importance_sampling_check(example_kernel, chain.as_candidate(), 1, 2.0, 4000, seed=9)
        assert report.z_score <= 4.0
        assert report.right.estimate > 0.5

    @pytest.mark.unit
    @pytest.mark.montecarlo
    def test_random_candidate(self, random_instance, rng):
        """A candidate unrelated to any potential reweights just as well"""
        kernel, _ = random_instance(d=2, k=2)
        cand = random_candidate(kernel.space, rng)
        report = importance_sampling_check(kernel, cand, 0, 2.0, 4000, seed=13)
        assert report.z_score <= 4.0
        assert 0.0 < report.right.estimate < 1.0

    @pytest.mark.unit
    @pytest.mark.montecarlo
    def test_base_candidate_is_identical(self, example_kernel, binary_space):
        """Unit-rate candidate equal to the base gives density 1"""
        base = admissible_candidate(PotentialField.constant(binary_space, 1.0), example_kernel)
        report = importance_sampling_check(example_kernel, base, 0, 2.0, 500, seed=2)
        assert report.z_score <= 4.0
        assert report.left.estimate == pytest.approx(0.5, abs=0.1)


class TestAnneal:

    @pytest.mark.unit
    @pytest.mark.montecarlo
    def test_worked_example_ladder(self, example_kernel, example_potential):
        report = anneal(example_kernel, example_potential, [0.0, 1.0, 10.0], 5.0, 50, seed=3)
        assert report.argmax == [1]
        assert not report.degenerate
        masses = [stage.analytic_mass for stage in report.stages]
        assert masses == pytest.approx([0.5, (2.0 + np.sqrt(2.0)) / 4.0, 0.997519], abs=1e-6)
        eigenvalues = [stage.eigenvalue for stage in report.stages]
        assert eigenvalues == pytest.approx([0.0, EXAMPLE_LAMBDA, (9.0 + np.sqrt(101.0)) / 2.0], abs=1e-9)
        gaps = [stage.gap for stage in report.stages]
        assert gaps[1] == pytest.approx(EXAMPLE_LAMBDA - 1.0, abs=1e-9)
        for stage in report.stages[:2]:
            assert abs(stage.empirical_mass - stage.analytic_mass) <= 5.0 * stage.empirical_stderr + 1e-12
        frame = report.to_frame()
        assert len(frame) == 3
        assert "symmetric_concentration" in frame.columns

    @pytest.mark.unit
    @pytest.mark.montecarlo
    @pytest.mark.slow
    def test_full_ladder(self, example_kernel, example_potential):
        report = anneal(example_kernel, example_potential, [0.0, 1.0, 2.0, 5.0, 10.0], 50.0, 200, seed=2024)
        masses = [stage.analytic_mass for stage in report.stages]
        assert masses[1] == pytest.approx(0.853553, abs=1e-6)
        assert masses[-1] == pytest.approx(0.997519, abs=1e-6)
        assert all(m1 >= m0 for m0, m1 in zip(masses, masses[1:]))
        for stage in report.stages:
            assert abs(stage.empirical_mass - stage.analytic_mass) <= 3.0 * stage.empirical_stderr + 1e-12

    @pytest.mark.unit
    @pytest.mark.montecarlo
    def test_degenerate_maximum(self, example_kernel, binary_space):
        report = anneal(example_kernel, PotentialField.constant(binary_space, 1.0), [0.0, 2.0], 2.0, 10, seed=1)
        assert report.degenerate
        assert report.argmax == [0, 1]
        assert [stage.analytic_mass for stage in report.stages] == pytest.approx([1.0, 1.0])

    @pytest.mark.unit
    @pytest.mark.montecarlo
    @pytest.mark.parametrize("betas", [[], [1.0, 1.0], [2.0, 1.0]])
    def test_betas_must_increase(self, example_kernel, example_potential, betas):
        with pytest.raises(ArgumentError):
            anneal(example_kernel, example_potential, betas, 1.0, 10, seed=0)

    @pytest.mark.unit
    @pytest.mark.montecarlo
    @pytest.mark.slow
    def test_concentration_on_random_instance(self, random_instance):
        kernel, V = random_instance(d=2, k=2)
        report = anneal(kernel, V, [0.0, 1.0, 4.0, 16.0], 5.0, 100, seed=21)
        masses = [stage.analytic_mass for stage in report.stages]
        assert all(m1 >= m0 - 1e-12 for m0, m1 in zip(masses, masses[1:]))
        assert masses[-1] > masses[0]
        assert report.stages[-1].empirical_mass > report.stages[0].empirical_mass
