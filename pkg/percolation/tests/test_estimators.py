import math
from fractions import Fraction

import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose

from percolation.core import LevelSet, full_level_set, sample_conditioned, sample_level_set
from percolation.estimators import (
    DensityHistogram,
    average_histograms,
    branching_mean_study,
    closed_form_bin_masses,
    dimension_conservation_check,
    dimension_study,
    extinction_study,
    galton_watson_variance,
    histogram_study,
    intersection_moment_test,
    martingale_study,
    projected_density_histogram,
    replicate_seeds,
    visibility_study,
)
from percolation.exceptions import DegenerateSample, InvalidParameters, PreconditionError
from percolation.geometry import Direction
from percolation.presets import cantor_carpet, homogeneous
from percolation.randomness import derive_seed

HALF = Direction(Fraction(1, 2))


def trapezoid_cdf(t):
    """Distribution function of the projected unit square at beta = 1/2."""
    t = np.asarray(t, dtype=np.float64)
    return np.where(t < 0, (t + 0.5) ** 2, np.where(t < 0.5, 0.25 + t, 1 - (1 - t) ** 2))


class ReplicateSeedTests(SimpleTestCase):

    def test_seeds(self):
        self.assertEqual(replicate_seeds(7, 3), [derive_seed(7, k) for k in range(3)])
        with self.assertRaises(InvalidParameters):
            replicate_seeds(7, 0)

    def test_galton_watson_variance(self):
        self.assertEqual(galton_watson_variance(1, 2, 5), 10)
        self.assertEqual(galton_watson_variance(2, 1, 3), 28)


class HistogramTests(SimpleTestCase):

    def test_single_cell(self):
        level_set = LevelSet(1, 3, 2, np.array([[1, 1]], dtype=np.int64))
        histogram = projected_density_histogram(level_set, HALF, 12)
        # the centre cell projects onto [0, 1/2]
        expected = np.zeros(12)
        expected[4:8] = 0.25
        assert_allclose(histogram.masses, expected, atol=1e-12)
        self.assertEqual(histogram.cells, 1)

    def test_unit_square_is_uniform(self):
        histogram = projected_density_histogram(full_level_set(3, 2, 0), HALF, 12)
        assert_allclose(histogram.masses, np.full(12, 1 / 12), atol=1e-12)
        assert_allclose(histogram.density, np.full(12, 1 / 1.5), atol=1e-12)

    def test_full_grid_approaches_trapezoid(self):
        histogram = projected_density_histogram(full_level_set(3, 2, 3), HALF, 12)
        assert_allclose(histogram.edges, np.linspace(-0.5, 1.0, 13))
        assert_allclose(histogram.masses, np.diff(trapezoid_cdf(histogram.edges)), atol=5e-3)
        self.assertAlmostEqual(float(histogram.masses.sum()), 1.0, places=12)

    def test_arguments(self):
        with self.assertRaises(DegenerateSample):
            projected_density_histogram(LevelSet(1, 3, 2, np.zeros((0, 2), dtype=np.int64)), HALF, 4)
        with self.assertRaises(InvalidParameters):
            projected_density_histogram(full_level_set(3, 2, 1), HALF, 0)
        with self.assertRaises(PreconditionError):
            projected_density_histogram(full_level_set(2, 3, 1), HALF, 4)

    def test_merging_bins_preserves_mass(self):
        level_set = sample_conditioned(cantor_carpet(0.75, seed=3), 4).level_set
        coarse = projected_density_histogram(level_set, HALF, 12)
        fine = projected_density_histogram(level_set, HALF, 24)
        assert_allclose(fine.edges[::2], coarse.edges, atol=1e-15)
        assert_allclose(fine.masses.reshape(-1, 2).sum(axis=1), coarse.masses, atol=1e-12)

    def test_average(self):
        first = projected_density_histogram(full_level_set(3, 2, 0), HALF, 12)
        second = projected_density_histogram(full_level_set(3, 2, 2), HALF, 12)
        average = average_histograms([first, second])
        assert_allclose(average.masses, (first.masses + second.masses) / 2, atol=1e-12)
        self.assertEqual(average.cells, 82)
        with self.assertRaises(InvalidParameters):
            average_histograms([first, projected_density_histogram(full_level_set(3, 2, 0), HALF, 6)])
        with self.assertRaises(DegenerateSample):
            average_histograms([])

    def test_closed_form_bin_masses(self):
        edges = np.linspace(-0.5, 1.0, 13)
        masses = closed_form_bin_masses(HALF, edges)
        self.assertAlmostEqual(float(masses.sum()), 1.0, places=12)
        # bins [0, 0.125) .. [0.375, 0.5) lie on the plateau of height 1
        assert_allclose(masses[4:8], 0.125, atol=1e-3)
        assert_allclose(masses[:6], masses[:5:-1], atol=1e-3)

    def test_study(self):
        histogram = histogram_study(cantor_carpet(0.75), HALF, 4, 12, 3, seed=2, jobs=1)
        self.assertIsInstance(histogram, DensityHistogram)
        self.assertEqual(len(histogram.seeds), 3)
        self.assertEqual(len(histogram.masses), 12)
        self.assertAlmostEqual(float(histogram.masses.sum()), 1.0, places=12)
        again = histogram_study(cantor_carpet(0.75), HALF, 4, 12, 3, seed=2, jobs=1)
        assert_allclose(histogram.masses, again.masses)


class SimulationStudyTests(SimpleTestCase):

    def test_dimension(self):
        params = homogeneous(3, 0.8)
        report = dimension_study(params, 2, 5, 20, seed=1, jobs=1)
        self.assertEqual(len(report.seeds), 20)
        self.assertAlmostEqual(report.expected, math.log(7.2) / math.log(3))
        self.assertAlmostEqual(report.mean, report.expected, delta=0.08)

    def test_dimension_window(self):
        with self.assertRaises(InvalidParameters):
            dimension_study(homogeneous(3, 0.8), 2, 3, 5, jobs=1)

    def test_extinction(self):
        report = extinction_study(homogeneous(2, 0.3), 25, 200, seed=3, jobs=1)
        self.assertAlmostEqual(report.expected, 0.5997, places=4)
        self.assertLess(abs(report.z), 4)
        self.assertTrue(set(report.values) <= {0.0, 1.0})

    def test_branching_mean(self):
        report = branching_mean_study(homogeneous(3, 0.5), 3, 200, seed=4, jobs=1)
        self.assertEqual(report.expected, 4.5 ** 3)
        self.assertLess(abs(report.z), 4)

    def test_worker_count_does_not_change_results(self):
        single = branching_mean_study(homogeneous(3, 0.5), 3, 8, seed=5, jobs=1)
        pooled = branching_mean_study(homogeneous(3, 0.5), 3, 8, seed=5, jobs=2)
        self.assertEqual(single, pooled)

    def test_martingale(self):
        report = martingale_study(homogeneous(3, 0.6), 3, 200, seed=6, jobs=1)
        self.assertEqual(report.expected, 1.0)
        self.assertLess(abs(report.z), 4)
        with self.assertRaises(PreconditionError):
            martingale_study(homogeneous(3, 0.1), 3, 10, jobs=1)

    def test_visibility(self):
        report = visibility_study(homogeneous(3, 0.8), 2, 5, 12, seed=7, jobs=1)
        self.assertEqual(report.expected, 1.0)
        self.assertGreaterEqual(report.mean, 0.9)
        self.assertLessEqual(report.mean, 1.1)
        left = visibility_study(homogeneous(3, 0.8), 2, 5, 2, seed=7, side='left', jobs=1)
        self.assertEqual(left.extra['side'], 'left')

    def test_visibility_is_planar(self):
        with self.assertRaises(PreconditionError):
            visibility_study(homogeneous(2, 0.8, d=3), 1, 3, 2, jobs=1)


class IntersectionTests(SimpleTestCase):

    def test_moments(self):
        report = intersection_moment_test(0.7, 0.8, 3, 3, 100, seed=8, jobs=1)
        self.assertAlmostEqual(report.extra['implied_dimension'], 1.4723, places=3)
        self.assertAlmostEqual(report.expected, 5.04 ** 3)
        self.assertLess(abs(report.z), 4)

    def test_full_second_set(self):
        report = intersection_moment_test(0.7, 1.0, 3, 3, 5, seed=9, jobs=1)
        for seed, count in zip(report.seeds, report.values):
            first = sample_level_set(homogeneous(3, 0.7, seed=derive_seed(seed, 0)), 3)
            self.assertEqual(count, len(first))

    def test_both_sets_full(self):
        report = intersection_moment_test(1.0, 1.0, 3, 2, 3, seed=1, jobs=1)
        self.assertEqual(report.values, (81, 81, 81))
        self.assertEqual((report.mean, report.expected, report.stderr), (81.0, 81.0, 0.0))
        self.assertIsNone(report.z)
        self.assertEqual(report.extra['expected_variance'], 0.0)
        self.assertIsNone(report.extra['z_variance'])

    def test_subcritical(self):
        with self.assertRaises(PreconditionError):
            intersection_moment_test(0.3, 0.3, 3, 3, 5, jobs=1)
        with self.assertRaises(InvalidParameters):
            intersection_moment_test(1.2, 0.5, 3, 3, 5, jobs=1)


class ConservationTests(SimpleTestCase):

    def test_full_grid(self):
        report = dimension_conservation_check(homogeneous(3, 1.0), HALF, 4, 5, replicates=2, seed=10, jobs=1)
        self.assertEqual(report.expected_dimension, 2.0)
        self.assertEqual(len(report.slopes), 10)
        self.assertEqual(report.window, (2, 3, 4))
        self.assertGreaterEqual(report.fractions[0.2], 0.8)
        self.assertAlmostEqual(float(np.median(report.slopes)), 1.0, delta=0.1)

    def test_needs_dimension_above_one(self):
        with self.assertRaises(PreconditionError):
            dimension_conservation_check(homogeneous(3, 0.3), HALF, 4, 5, jobs=1)
