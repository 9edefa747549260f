"""
Unit tests for the path-series route to the perturbed semigroup
"""

import math

import numpy as np
import pytest

from core.exceptions import ArgumentError
from models.cylinder_space import CylinderSpace
from models.fields import KernelField, PotentialField
from models.generator import GeneratorMatrix
from services.feynman_kac import (
    enumerate_paths,
    exp_divided_difference,
    feynman_kac_series,
    merge_confluent,
    path_integral,
)
from services.semigroup import uniformization_apply


class TestDividedDifference:

    @pytest.mark.unit
    @pytest.mark.semigroup
    def test_distinct_nodes(self):
        a, b, T = -0.3, 1.2, 0.7
        expected = (np.exp(a * T) - np.exp(b * T)) / (a - b)
        assert exp_divided_difference([a, b], T) == pytest.approx(expected, rel=1e-13)

    @pytest.mark.unit
    @pytest.mark.semigroup
    def test_confluent_nodes(self):
        r, T = 0.4, 2.0
        assert exp_divided_difference([r, r], T) == pytest.approx(T * np.exp(r * T), rel=1e-13)
        # nodes closer than the confluence tolerance collapse to the same limit
        assert exp_divided_difference([r, r + 1e-10], T) == pytest.approx(T * np.exp(r * T), rel=1e-9)

    @pytest.mark.unit
    @pytest.mark.semigroup
    def test_recursive_merge_on_distinct_nodes(self):
        nodes = [-1.1, -0.4, 0.3, 0.9]
        T = 1.3

        def merge(lo: int, hi: int) -> float:
            if lo == hi:
                return math.exp(nodes[lo] * T)
            return (merge(lo + 1, hi) - merge(lo, hi - 1)) / (nodes[hi] - nodes[lo])

        assert exp_divided_difference(nodes, T) == pytest.approx(merge(0, 3), rel=1e-10)

    @pytest.mark.unit
    @pytest.mark.semigroup
    def test_merge_confluent(self):
        merged = merge_confluent([1.0, 0.0, 1.0 + 1e-12], 1e-8)
        assert merged[0] == 0.0
        assert merged[1] == merged[2]

    @pytest.mark.unit
    @pytest.mark.semigroup
    def test_rejects_empty_and_negative_time(self):
        with pytest.raises(ArgumentError):
            exp_divided_difference([], 1.0)
        with pytest.raises(ArgumentError):
            exp_divided_difference([0.0], -1.0)

    @pytest.mark.unit
    @pytest.mark.semigroup
    @pytest.mark.parametrize("n", [0, 1, 4])
    def test_zero_potential_path_integral(self, n):
        space = CylinderSpace(1, 1)
        zero = PotentialField.constant(space, 0.0)
        T = 1.3
        expected = np.exp(-T) * T**n / math.factorial(n)
        assert path_integral(zero, [0] * (n + 1), T) == pytest.approx(expected, rel=1e-12)


class TestEnumeratePaths:

    @pytest.mark.unit
    @pytest.mark.semigroup
    def test_path_count_and_weights(self, random_instance):
        kernel, _ = random_instance(d=2, k=2)
        paths = enumerate_paths(kernel, 1, 3, prune_ratio=0.0)
        assert len(paths) == 8
        assert sum(w for _, w in paths) == pytest.approx(1.0, abs=1e-12)
        for path, _ in paths:
            for parent, child in zip(path, path[1:]):
                assert child in kernel.space.preimages(parent)

    @pytest.mark.unit
    @pytest.mark.semigroup
    def test_negative_length(self, example_kernel):
        with pytest.raises(ArgumentError):
            enumerate_paths(example_kernel, 0, -1)


class TestFeynmanKacSeries:

    @pytest.mark.unit
    @pytest.mark.semigroup
    def test_zero_potential_sums_to_one(self, example_kernel):
        space = example_kernel.space
        zero = PotentialField.constant(space, 0.0)
        ones = PotentialField.constant(space, 1.0)
        series = feynman_kac_series(example_kernel, zero, ones, 1.0, 0, n_max=10)
        assert abs(series.value - 1.0) <= 1e-7
        assert series.tail_bound >= 1.0 - series.value - 1e-15
        assert len(series.terms) == 11

    @pytest.mark.unit
    @pytest.mark.semigroup
    def test_agrees_with_uniformization(self, example_kernel, example_potential):
        ones = PotentialField.constant(example_kernel.space, 1.0)
        gen = GeneratorMatrix.unit_rate(example_kernel)
        exact = uniformization_apply(gen, example_potential, ones, 1.0, tol=1e-13).values
        for x in range(2):
            series = feynman_kac_series(example_kernel, example_potential, ones, 1.0, x, n_max=40)
            assert series.value == pytest.approx(exact[x], abs=1e-8)

    @pytest.mark.unit
    @pytest.mark.semigroup
    def test_single_word(self):
        space = CylinderSpace(1, 1)
        kernel = KernelField.uniform(space)
        v, T = 0.6, 1.5
        series = feynman_kac_series(kernel, PotentialField(space, [v]), PotentialField(space, [1.0]), T, 0)
        assert series.value == pytest.approx(np.exp(v * T), rel=1e-9)

    @pytest.mark.unit
    @pytest.mark.semigroup
    def test_path_enumeration_matches_aggregate(self, random_instance):
        kernel, V = random_instance(d=2, k=2)
        f = PotentialField(kernel.space, np.linspace(0.5, 2.0, kernel.space.size))
        for x in range(kernel.space.size):
            dyson = feynman_kac_series(kernel, V, f, 0.8, x, n_max=6)
            paths = feynman_kac_series(kernel, V, f, 0.8, x, n_max=6, method="paths")
            assert np.allclose(dyson.terms, paths.terms, rtol=1e-10, atol=1e-14)

    @pytest.mark.unit
    @pytest.mark.semigroup
    def test_route_equivalence_on_random_instances(self, random_instance, rng):
        for d, k in [(2, 1), (2, 2), (2, 3), (3, 1)]:
            kernel, V = random_instance(d=d, k=k)
            gen = GeneratorMatrix.unit_rate(kernel)
            f = PotentialField(kernel.space, rng.uniform(0.0, 1.0, kernel.space.size))
            T = float(rng.uniform(0.1, 2.0))
            exact = uniformization_apply(gen, V, f, T, tol=1e-12).values
            for x in range(kernel.space.size):
                series = feynman_kac_series(kernel, V, f, T, x)
                assert abs(series.value - exact[x]) <= series.tail_bound + 1e-9

    @pytest.mark.unit
    @pytest.mark.semigroup
    @pytest.mark.slow
    def test_route_equivalence_at_scale(self, random_instance, rng):
        """Twenty random instances at three horizons, every starting word"""
        sizes = [(2, 1), (2, 2), (2, 3), (3, 2)]
        for i in range(20):
            d, k = sizes[i % len(sizes)]
            kernel, V = random_instance(d=d, k=k)
            gen = GeneratorMatrix.unit_rate(kernel)
            f = PotentialField(kernel.space, rng.uniform(0.0, 1.0, kernel.space.size))
            for T in (0.5, 1.0, 2.0):
                exact = uniformization_apply(gen, V, f, T, tol=1e-12).values
                for x in range(kernel.space.size):
                    assert feynman_kac_series(kernel, V, f, T, x).value == pytest.approx(exact[x], abs=1e-7)

    @pytest.mark.unit
    @pytest.mark.semigroup
    def test_preconditions(self, example_kernel, example_potential, binary_space):
        with pytest.raises(ArgumentError):
            feynman_kac_series(example_kernel, example_potential, example_potential, 1.0, 0, n_max=-1)
        with pytest.raises(ArgumentError):
            feynman_kac_series(example_kernel, example_potential, example_potential, -1.0, 0)
        raw = KernelField.from_matrix(binary_space, [[1.0, 1.0], [1.0, 1.0]])
        with pytest.raises(ArgumentError):
            feynman_kac_series(raw, example_potential, example_potential, 1.0, 0)
