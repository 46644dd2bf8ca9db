import math
from unittest import mock

import numpy as np
from django.test import SimpleTestCase, override_settings
from numpy.testing import assert_array_equal
from scipy.optimize import brentq
from scipy.stats import kstest

from percolation.core import (
    CellWord,
    LevelSet,
    branching_stats,
    expected_dimension,
    extinction_probability,
    full_level_set,
    intersect_level_sets,
    iter_levels,
    martingale_Z,
    offspring_generating_function,
    raster,
    retention_draw,
    sample_conditioned,
    sample_level_set,
    validate_params,
)
from percolation.exceptions import (
    ExtinctionDominated,
    InvalidParameters,
    LevelTooDeep,
    PreconditionError,
)
from percolation.presets import cantor_carpet, homogeneous, sierpinski_carpet
from percolation.randomness import descend_all, derive_seed, root_key, unit_draws


def empty_level_set(n, M=3, d=2):
    return LevelSet(n, M, d, np.zeros((0, d), dtype=np.int64))


class ValidateParamsTests(SimpleTestCase):

    def test_full_table(self):
        params = validate_params({'d': 2, 'M': 3, 'probs': [1.0] * 9})
        self.assertEqual(params.total, 9)
        self.assertTrue(params.supercritical)
        self.assertTrue(params.dim_gt_1)

    def test_critical_table_is_not_supercritical(self):
        params = validate_params({'d': 2, 'M': 3, 'probs': [1 / 9] * 9})
        self.assertAlmostEqual(params.total, 1.0)
        self.assertFalse(params.supercritical)
        self.assertFalse(params.dim_gt_1)

    def test_probability_out_of_range(self):
        probs = [0.5] * 9
        probs[4] = 1.2
        with self.assertRaisesMessage(InvalidParameters, 'probability out of range'):
            validate_params({'d': 2, 'M': 3, 'probs': probs})

    def test_matrix_is_bottom_row_first(self):
        rows = [[0.1, 0.2, 0.3], [0.4, 0.5, 0.6], [0.7, 0.8, 0.9]]
        params = validate_params({'d': 2, 'M': 3, 'probs': rows})
        self.assertEqual(params.prob((2, 0)), 0.3)
        self.assertEqual(params.prob((0, 2)), 0.7)
        self.assertEqual(params.matrix(), rows)

    def test_letter_mapping(self):
        params = validate_params({'d': 2, 'M': 2, 'probs': {'1,0': 0.5, '1,1': 1}})
        self.assertEqual(params.probs, (0.0, 0.5, 0.0, 1.0))

    def test_wrong_table_size(self):
        with self.assertRaises(InvalidParameters):
            validate_params({'d': 2, 'M': 3, 'probs': [0.5] * 8})

    def test_seed_must_fit_64_bits(self):
        with self.assertRaises(InvalidParameters):
            validate_params({'d': 2, 'M': 2, 'probs': [0.5] * 4, 'seed': 1 << 64})

    def test_digest_depends_on_seed(self):
        params = homogeneous(3, 0.5)
        self.assertNotEqual(params.digest, params.with_seed(1).digest)
        self.assertEqual(params.digest, homogeneous(3, 0.5).digest)


class CellWordTests(SimpleTestCase):

    def test_corner_round_trip(self):
        word = CellWord(((2, 0), (1, 2), (0, 1)))
        corner = word.corner(3)
        self.assertEqual(corner, (21, 7))
        self.assertEqual(CellWord.from_corner(corner, 3, 3), word)

    def test_corner_outside_grid(self):
        with self.assertRaises(InvalidParameters):
            CellWord.from_corner((9, 0), 2, 3)


class RetentionDrawTests(SimpleTestCase):

    def test_deterministic(self):
        word = CellWord(((1, 2), (0, 0)))
        self.assertEqual(retention_draw(42, word), retention_draw(42, word))
        self.assertNotEqual(retention_draw(42, word), retention_draw(43, word))

    def test_matches_vectorised_draws(self):
        letters = np.array([[0, 0], [1, 0], [2, 2]])
        draws = unit_draws(descend_all(root_key(7), letters))[0]
        for letter, draw in zip(letters.tolist(), draws):
            self.assertEqual(retention_draw(7, CellWord((tuple(letter),))), draw)

    def test_uniform(self):
        M = 317
        letters = np.stack(np.divmod(np.arange(M * M), M), axis=1)
        draws = unit_draws(descend_all(root_key(2024), letters)).ravel()
        self.assertEqual(len(draws), M * M)
        self.assertAlmostEqual(float(draws.mean()), 0.5, delta=0.01)
        self.assertGreater(kstest(draws, 'uniform').pvalue, 0.01)

    def test_sibling_draws_uncorrelated(self):
        w, w_prime = CellWord(((0, 0), (1, 1))), CellWord(((0, 0), (1, 2)))
        pairs = np.array([(retention_draw(s, w), retention_draw(s, w_prime)) for s in range(10_000)])
        self.assertLess(abs(np.corrcoef(pairs.T)[0, 1]), 0.05)

    def test_derived_seeds_differ(self):
        seeds = {derive_seed(5, k) for k in range(100)}
        self.assertEqual(len(seeds), 100)


class SampleLevelSetTests(SimpleTestCase):

    def test_full_grid(self):
        level_set = sample_level_set(homogeneous(3, 1.0), 2)
        self.assertEqual(len(level_set), 81)
        self.assertEqual(level_set, full_level_set(3, 2, 2))

    def test_all_zero(self):
        self.assertTrue(sample_level_set(homogeneous(3, 0.0), 1).is_empty)

    def test_deterministic(self):
        params = homogeneous(3, 0.6, seed=11)
        self.assertEqual(sample_level_set(params, 4), sample_level_set(params, 4))

    def test_levels_are_nested(self):
        levels = list(iter_levels(homogeneous(3, 0.7, seed=3), 5))
        for coarse, fine in zip(levels, levels[1:]):
            if fine.is_empty:
                continue
            parents = {tuple(c) for c in fine.parents().tolist()}
            self.assertLessEqual(parents, coarse.cells)

    def test_monotone_coupling(self):
        low = sample_level_set(homogeneous(3, 0.5, seed=9), 4)
        high = sample_level_set(homogeneous(3, 0.8, seed=9), 4)
        self.assertEqual(intersect_level_sets(low, high), low)
        self.assertLessEqual(len(low), len(high))

    def test_pattern_zeros_are_never_retained(self):
        level_set = sample_level_set(cantor_carpet(0.9, seed=4), 3)
        self.assertFalse(np.any(level_set.coords[:, 1] % 3 == 1))

    def test_three_dimensional(self):
        level_set = sample_level_set(homogeneous(2, 1.0, d=3), 2)
        self.assertEqual(len(level_set), 64)
        self.assertEqual(level_set.coords.shape, (64, 3))

    def test_mean_count(self):
        params = homogeneous(3, 0.7)
        n, runs = 3, 400
        counts = [len(sample_level_set(params.with_seed(derive_seed(1, k)), n)) for k in range(runs)]
        stats = branching_stats(params)
        m, sigma2 = stats.mean_offspring, stats.offspring_variance
        variance = sigma2 * m ** (n - 1) * (m ** n - 1) / (m - 1)
        self.assertLess(abs(np.mean(counts) - m ** n), 3 * math.sqrt(variance / runs))

    @override_settings(PERCOLAB_CELL_CAP=10)
    def test_cell_cap(self):
        with self.assertRaises(LevelTooDeep) as caught:
            sample_level_set(homogeneous(3, 1.0), 2)
        self.assertEqual(caught.exception.level, 2)

    def test_negative_level(self):
        with self.assertRaises(InvalidParameters):
            sample_level_set(homogeneous(3, 0.5), -1)


class SampleConditionedTests(SimpleTestCase):

    def test_certain_survival(self):
        sample = sample_conditioned(homogeneous(3, 1.0), 2)
        self.assertEqual(sample.attempts, 1)
        self.assertEqual(sample.rejected, 0)

    def test_subcritical(self):
        with self.assertRaises(PreconditionError):
            sample_conditioned(homogeneous(3, 1 / 9), 2)

    def test_acceptance_frequency(self):
        params = homogeneous(2, 0.3)
        attempts = [sample_conditioned(params.with_seed(derive_seed(3, k)), 25).attempts for k in range(400)]
        acceptance = 400 / sum(attempts)
        self.assertAlmostEqual(acceptance, 1 - extinction_probability(params), delta=0.05)

    def test_extinction_dominated(self):
        params = homogeneous(2, 0.3, seed=5)
        with mock.patch('percolation.core.sample_level_set', return_value=empty_level_set(4, M=2)):
            with self.assertRaises(ExtinctionDominated) as caught:
                sample_conditioned(params, 4, max_attempts=3)
        self.assertEqual(caught.exception.attempts, 3)
        self.assertEqual(caught.exception.exit_code, 3)

    def test_seed_is_reported(self):
        params = homogeneous(2, 0.3, seed=12)
        sample = sample_conditioned(params, 10)
        self.assertEqual(sample_level_set(params.with_seed(sample.seed), 10), sample.level_set)


class BranchingTests(SimpleTestCase):

    def test_extinction_probability(self):
        params = homogeneous(2, 0.3)
        oracle = brentq(lambda s: offspring_generating_function(params, s) - s, 0.0, 0.9, xtol=1e-14)
        q = extinction_probability(params)
        self.assertAlmostEqual(q, oracle, places=9)
        self.assertAlmostEqual(q, 0.5997, places=4)

    def test_extinction_probability_near_criticality(self):
        params = homogeneous(2, 0.2501)
        oracle = brentq(lambda s: offspring_generating_function(params, s) - s, 0.5, 0.9995, xtol=1e-15)
        q = extinction_probability(params)
        self.assertAlmostEqual(q, oracle, delta=1e-12)
        self.assertAlmostEqual(q, 0.9989339966982721, delta=1e-12)
        self.assertLessEqual(abs(offspring_generating_function(params, q) - q), 1e-14)

    def test_extinction_edge_cases(self):
        self.assertEqual(extinction_probability(homogeneous(3, 1 / 9)), 1.0)
        self.assertEqual(extinction_probability(homogeneous(3, 1.0)), 0.0)

    def test_expected_dimension(self):
        self.assertAlmostEqual(expected_dimension(homogeneous(3, 0.7)), math.log(6.3) / math.log(3))
        self.assertAlmostEqual(expected_dimension(homogeneous(3, 1.0)), 2.0)
        self.assertAlmostEqual(expected_dimension(sierpinski_carpet(0.5)), math.log(4) / math.log(3))
        self.assertIsNone(expected_dimension(homogeneous(3, 0.1)))

    def test_martingale(self):
        params = homogeneous(3, 1.0)
        for n in range(3):
            self.assertEqual(martingale_Z(full_level_set(3, 2, n), params), 1.0)
        self.assertEqual(martingale_Z(empty_level_set(3), params), 0.0)

    def test_branching_stats(self):
        params = homogeneous(3, 0.5)
        level_set = sample_level_set(params, 2)
        stats = branching_stats(params, level_set)
        self.assertEqual(stats.mean_offspring, 4.5)
        self.assertAlmostEqual(stats.offspring_variance, 9 * 0.25)
        self.assertEqual(stats.martingale_Z, len(level_set) / 4.5 ** 2)


class IntersectionAndRasterTests(SimpleTestCase):

    def test_intersection_with_full_grid(self):
        level_set = sample_level_set(homogeneous(3, 0.6, seed=2), 3)
        self.assertEqual(intersect_level_sets(full_level_set(3, 2, 3), level_set), level_set)

    def test_intersection_needs_matching_levels(self):
        with self.assertRaises(InvalidParameters):
            intersect_level_sets(full_level_set(3, 2, 2), full_level_set(3, 2, 3))

    def test_raster_full_and_empty(self):
        self.assertTrue(raster(full_level_set(3, 2, 2)).all())
        self.assertFalse(raster(empty_level_set(2)).any())

    def test_raster_single_cell(self):
        grid = raster(LevelSet(1, 3, 2, np.array([[0, 0]], dtype=np.int64)))
        expected = np.zeros((3, 3), dtype=np.uint8)
        expected[0, 0] = 1
        assert_array_equal(grid, expected)

    def test_raster_is_row_column(self):
        grid = raster(LevelSet(1, 3, 2, np.array([[2, 0]], dtype=np.int64)))
        self.assertEqual(grid[0, 2], 1)
        self.assertEqual(int(grid.sum()), 1)
