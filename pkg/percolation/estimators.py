"""
Monte Carlo estimators tying sampled level sets to their limit-set predictions.

Every study draws replicate k from the seed derive_seed(seed, k) and records
the seeds it used; replicates are independent and may run in worker
processes, and the per-replicate results are reduced in input order.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .core import (
    expected_dimension,
    extinction_probability,
    intersect_level_sets,
    iter_levels,
    sample_conditioned,
    sample_level_set,
)
from .exceptions import DegenerateSample, InvalidParameters, PreconditionError
from .fitting import box_counting_dimension, fit_log_counts
from .geometry import SliceQuery, first_hit_cells, project_level_set, projected_endpoints, slice_mask
from .parallel import map_tasks
from .presets import homogeneous
from .randomness import derive_seed
from .transfer import closed_form_density_cantor_carpet

logger = logging.getLogger(__name__)

CONSERVATION_EPSILONS = (0.1, 0.2)

__all__ = [
    'DensityHistogram', 'box_counting_dimension', 'projected_density_histogram', 'average_histograms',
    'closed_form_bin_masses', 'dimension_conservation_check', 'intersection_moment_test',
    'dimension_study', 'extinction_study', 'branching_mean_study', 'martingale_study',
    'visibility_study',
]


def replicate_seeds(seed, replicates):
    if replicates < 1:
        raise InvalidParameters(f'replicates must be positive, got {replicates}')
    return [derive_seed(seed, k) for k in range(int(replicates))]


def _mean_and_stderr(values):
    values = np.asarray(values, dtype=np.float64)
    if len(values) < 2:
        return float(values.mean()), 0.0
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(len(values)))


def galton_watson_variance(m, sigma2, n):
    """Var Z_n for mean offspring m and offspring variance sigma2."""
    if m == 1:
        return n * sigma2
    return sigma2 * m ** (n - 1) * (m ** n - 1) / (m - 1)


# HISTOGRAMS

@dataclass(frozen=True, eq=False)
class DensityHistogram:
    direction: object
    edges: np.ndarray
    masses: np.ndarray
    cells: int
    seeds: tuple = ()

    @property
    def widths(self):
        return np.diff(self.edges)

    @property
    def density(self):
        return self.masses / self.widths


def projected_density_histogram(level_set, direction, bins):
    """
    Bin masses of the uniform measure on the retained cells pushed through the projection.

    Every projected interval has the same length l, so the cumulative mass at t
    is (#{lo <= t - l} + sum over t - l < lo <= t of (t - lo) / l) / #cells.
    """
    if level_set.d != 2:
        raise PreconditionError('projected histograms are planar (d = 2)')
    if level_set.is_empty:
        raise DegenerateSample('cannot histogram an empty level set')
    if bins < 1:
        raise InvalidParameters(f'bins must be positive, got {bins}')
    lo, hi = projected_endpoints(level_set, direction.as_float())
    length = float(hi[0] - lo[0])
    lo = np.sort(lo)
    prefix = np.concatenate([[0.0], np.cumsum(lo)])
    edges = np.linspace(-direction.beta_float, 1.0, int(bins) + 1)
    full = np.searchsorted(lo, edges - length, side='right')
    partial = np.searchsorted(lo, edges, side='right')
    cumulative = full + ((partial - full) * edges - (prefix[partial] - prefix[full])) / length
    masses = np.clip(np.diff(cumulative), 0.0, None)
    masses /= masses.sum()
    return DensityHistogram(direction, edges, masses, len(level_set))


def average_histograms(histograms):
    histograms = list(histograms)
    if not histograms:
        raise DegenerateSample('no histograms to average')
    edges = histograms[0].edges
    if any(not np.array_equal(h.edges, edges) for h in histograms):
        raise InvalidParameters('histograms use different bins')
    masses = np.mean([h.masses for h in histograms], axis=0)
    return DensityHistogram(
        histograms[0].direction, edges, masses / masses.sum(),
        sum(h.cells for h in histograms), tuple(s for h in histograms for s in h.seeds),
    )


def closed_form_bin_masses(direction, edges, N=8193):
    """Masses of the Cantor-carpet closed-form density over the given bins."""
    f = closed_form_density_cantor_carpet(direction, N)
    cumulative = cumulative_trapezoid(f.values, f.xs, initial=0.0)
    return np.diff(np.interp(edges, f.xs, cumulative / cumulative[-1]))


def _histogram_replicate(task):
    params, direction, n, bins, seed = task
    sample = sample_conditioned(params.with_seed(seed), n)
    histogram = projected_density_histogram(sample.level_set, direction, bins)
    return DensityHistogram(direction, histogram.edges, histogram.masses, histogram.cells, (sample.seed,))


def histogram_study(params, direction, n, bins, replicates, seed=0, jobs=None):
    """Average projected histogram over conditioned replicates."""
    tasks = [(params, direction, n, bins, s) for s in replicate_seeds(seed, replicates)]
    histogram = average_histograms(map_tasks(_histogram_replicate, tasks, jobs))
    logger.info('histogram: %d bins over %d replicates at level %d', bins, len(histogram.seeds), n)
    return histogram


# SIMULATION STUDIES

@dataclass(frozen=True)
class StudyReport:
    """Monte Carlo mean against its prediction."""
    name: str
    seeds: tuple
    values: tuple
    mean: float
    stderr: float
    expected: float = None
    z: float = None
    extra: dict = field(default_factory=dict)


def _z(mean, expected, stderr):
    if expected is None or stderr == 0:
        return None
    return (mean - expected) / stderr


def _logged(report):
    logger.info('%s: mean %.6g against %s (z=%s) over %d replicates',
                report.name, report.mean, report.expected, report.z, len(report.seeds))
    return report


def _conditioned_levels(params, n):
    sample = sample_conditioned(params, n)
    return sample.seed, list(iter_levels(params.with_seed(sample.seed), n))


def _dimension_replicate(task):
    params, n_lo, n_hi, seed = task
    used, levels = _conditioned_levels(params.with_seed(seed), n_hi)
    window = range(n_lo, n_hi + 1)
    fit = box_counting_dimension([len(levels[k]) for k in window], params.M, levels=window)
    return used, fit.slope


def dimension_study(params, n_lo, n_hi, replicates, seed=0, jobs=None):
    """Mean box-counting slope of conditioned samples against log(sum p) / log M."""
    if n_hi - n_lo < 2:
        raise InvalidParameters(f'a box-counting fit needs three levels, got {n_lo}..{n_hi}')
    tasks = [(params, n_lo, n_hi, s) for s in replicate_seeds(seed, replicates)]
    results = map_tasks(_dimension_replicate, tasks, jobs)
    slopes = [slope for _, slope in results]
    mean, stderr = _mean_and_stderr(slopes)
    expected = expected_dimension(params)
    return _logged(StudyReport(
        'dimension', tuple(s for s, _ in results), tuple(slopes), mean, stderr, expected,
        _z(mean, expected, stderr), {'n_lo': n_lo, 'n_hi': n_hi},
    ))


def _extinct_replicate(task):
    params, level, seed = task
    for level_set in iter_levels(params.with_seed(seed), level):
        if level_set.is_empty:
            return 1.0
    return 0.0


def extinction_study(params, level, replicates, seed=0, jobs=None):
    """Share of realisations extinct by `level` against the generating-function fixed point."""
    seeds = replicate_seeds(seed, replicates)
    outcomes = map_tasks(_extinct_replicate, [(params, level, s) for s in seeds], jobs)
    q = extinction_probability(params)
    mean = float(np.mean(outcomes))
    stderr = math.sqrt(q * (1 - q) / len(outcomes))
    return _logged(StudyReport('extinction', tuple(seeds), tuple(outcomes), mean, stderr, q,
                               _z(mean, q, stderr), {'level': level}))


def _count_replicate(task):
    params, n, seed = task
    return len(sample_level_set(params.with_seed(seed), n))


def branching_mean_study(params, n, replicates, seed=0, jobs=None):
    """Mean cell count at level n against (sum p)^n, z-score from the Galton-Watson variance."""
    seeds = replicate_seeds(seed, replicates)
    counts = map_tasks(_count_replicate, [(params, n, s) for s in seeds], jobs)
    m = params.total
    sigma2 = math.fsum(p * (1 - p) for p in params.probs)
    expected = m ** n
    stderr = math.sqrt(galton_watson_variance(m, sigma2, n) / len(counts))
    mean = float(np.mean(counts))
    return _logged(StudyReport('branching_mean', tuple(seeds), tuple(counts), mean, stderr, expected,
                               _z(mean, expected, stderr), {'n': n}))


def martingale_study(params, n, replicates, seed=0, jobs=None):
    """E[#E_n / (sum p)^n] = 1."""
    if not params.supercritical:
        raise PreconditionError('the normalised count is studied for sum(p) > 1')
    seeds = replicate_seeds(seed, replicates)
    counts = map_tasks(_count_replicate, [(params, n, s) for s in seeds], jobs)
    values = [c / params.total ** n for c in counts]
    mean, stderr = _mean_and_stderr(values)
    return _logged(StudyReport('martingale', tuple(seeds), tuple(values), mean, stderr, 1.0,
                               _z(mean, 1.0, stderr), {'n': n}))


def _visibility_replicate(task):
    params, n_lo, n_hi, side, seed = task
    used, levels = _conditioned_levels(params.with_seed(seed), n_hi)
    window = range(n_lo, n_hi + 1)
    counts = [first_hit_cells(levels[k], side).count for k in window]
    return used, box_counting_dimension(counts, params.M, levels=window).slope


def visibility_study(params, n_lo, n_hi, replicates, seed=0, side='bottom', jobs=None):
    """Box-counting slope of the cells seen first from `side`; 1 for a planar set of dimension > 1."""
    if params.d != 2:
        raise PreconditionError('visibility is measured for d = 2')
    if n_hi - n_lo < 2:
        raise InvalidParameters(f'a box-counting fit needs three levels, got {n_lo}..{n_hi}')
    tasks = [(params, n_lo, n_hi, side, s) for s in replicate_seeds(seed, replicates)]
    results = map_tasks(_visibility_replicate, tasks, jobs)
    slopes = [slope for _, slope in results]
    mean, stderr = _mean_and_stderr(slopes)
    expected = 1.0 if params.dim_gt_1 else None
    return _logged(StudyReport(
        'visibility', tuple(s for s, _ in results), tuple(slopes), mean, stderr, expected,
        _z(mean, expected, stderr), {'n_lo': n_lo, 'n_hi': n_hi, 'side': side},
    ))


# INTERSECTIONS

def _intersection_replicate(task):
    p, p_prime, M, d, n, seed = task
    first = sample_level_set(homogeneous(M, p, d, seed=derive_seed(seed, 0)), n)
    second = sample_level_set(homogeneous(M, p_prime, d, seed=derive_seed(seed, 1)), n)
    return len(intersect_level_sets(first, second))


def intersection_moment_test(p, p_prime, M, n, replicates, seed=0, d=2, jobs=None):
    """
    Mean and variance of #(E(p) cap E(p')) at level n against the Galton-Watson
    process with retention p * p'.
    """
    q = float(p) * float(p_prime)
    m = M ** d * q
    if not (0 <= min(p, p_prime) and max(p, p_prime) <= 1):
        raise InvalidParameters(f'probabilities must lie in [0, 1], got {p}, {p_prime}')
    if m <= 1:
        raise PreconditionError(f'the intersection is subcritical: M^d p p\' = {m:.6g} <= 1')
    seeds = replicate_seeds(seed, replicates)
    counts = map_tasks(_intersection_replicate, [(p, p_prime, M, d, n, s) for s in seeds], jobs)
    counts = np.asarray(counts, dtype=np.float64)
    R = len(counts)
    mean_expected = m ** n
    var_expected = galton_watson_variance(m, M ** d * q * (1 - q), n)
    mean = float(counts.mean())
    variance = float(counts.var(ddof=1)) if R > 1 else 0.0
    stderr = math.sqrt(var_expected / R)
    # var_expected vanishes for p = p' = 1; both z-scores are then None
    z_mean = _z(mean, mean_expected, stderr)
    # normal approximation of the sample variance
    z_variance = _z(variance, var_expected, var_expected * math.sqrt(2.0 / max(R - 1, 1)))
    return _logged(StudyReport(
        'intersection', tuple(seeds), tuple(int(c) for c in counts), mean,
        stderr, mean_expected, z_mean,
        {
            'variance': variance,
            'expected_variance': var_expected,
            'z_variance': z_variance,
            'implied_dimension': math.log(m) / math.log(M),
            'p': p,
            'p_prime': p_prime,
        },
    ))


# DIMENSION CONSERVATION

def _offsets_in_projection(level_set, direction, count, seed):
    """Offsets drawn uniformly from the projection of `level_set` (length-weighted)."""
    union = project_level_set(level_set, direction.as_float())
    lengths = union.lengths()
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(lengths), size=count, p=lengths / lengths.sum())
    return union.starts[picks] + rng.random(count) * lengths[picks]


def _conservation_replicate(task):
    params, direction, n, x_samples, seed = task
    used, levels = _conditioned_levels(params.with_seed(seed), n)
    window = list(range(max(1, n // 2), n + 1))
    slopes = []
    frame = direction.as_float()
    for x in _offsets_in_projection(levels[n], frame, x_samples, derive_seed(used, 0)):
        query = SliceQuery(frame, float(x))
        counts = [int(np.count_nonzero(slice_mask(levels[k], query))) for k in window]
        slopes.append(fit_log_counts(window, counts, params.M).slope)
    return used, slopes


@dataclass(frozen=True)
class ConservationReport:
    expected_dimension: float
    seeds: tuple
    slopes: tuple
    fractions: dict
    window: tuple


def dimension_conservation_check(params, direction, n, x_samples, replicates=1, seed=0, jobs=None):
    """
    Share of slices whose box-counting slope reaches dim E - 1 - eps, offsets
    drawn from the projection of each conditioned sample.
    """
    if params.d != 2:
        raise PreconditionError('the conservation check is planar (d = 2)')
    if not params.dim_gt_1:
        raise PreconditionError(f'dimension conservation is checked for sum(p) > M, got {params.total:.6g}')
    if n < 2:
        raise InvalidParameters(f'slice slopes need n >= 2, got {n}')
    tasks = [(params, direction, n, x_samples, s) for s in replicate_seeds(seed, replicates)]
    results = map_tasks(_conservation_replicate, tasks, jobs)
    slopes = np.array([s for _, per_seed in results for s in per_seed])
    dim = expected_dimension(params)
    fractions = {eps: float(np.mean(slopes >= dim - 1 - eps)) for eps in CONSERVATION_EPSILONS}
    logger.info('conservation: %d slices, dim %.6g, fractions %s', len(slopes), dim, fractions)
    return ConservationReport(dim, tuple(s for s, _ in results), tuple(slopes.tolist()), fractions,
                              tuple(range(max(1, n // 2), n + 1)))
