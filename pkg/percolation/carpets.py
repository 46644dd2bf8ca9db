"""
Exceptional directions of random carpets.

For a carpet pattern with one common probability p, the slices of the
deterministic carpet grow like M^(slope * n); when every slice of a direction
grows strictly slower than the full (|I+| / M) rate, a random carpet with
p below `p_threshold` has a projection without interior in that direction.
"""
import logging
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import conf
from .core import iter_levels, sample_conditioned
from .exceptions import (
    CandidateInvalid,
    DegenerateSample,
    InvalidParameters,
    NumericalBlowUp,
    PreconditionError,
)
from .fitting import fit_log_counts
from .geometry import (
    Direction,
    SliceQuery,
    axis_containment,
    largest_interior_interval,
    pattern_slice_counts,
    project_level_set,
    random_rational_offsets,
)
from .parallel import map_tasks
from .randomness import derive_seed
from .transfer import candidate_function, check_condition_A, check_condition_B

logger = logging.getLogger(__name__)

INTERVAL_LIKELY = 'interval-likely'
EXCEPTIONAL_LIKELY = 'exceptional-likely'
UNDETERMINED = 'undetermined'

# a largest finite-level interval shrinking below this share over two levels
SHRINK_RATIO = 0.5


def _require_exact(direction):
    if not direction.exact:
        raise PreconditionError('exact rational cot required')


def slope_window(n):
    return list(range(max(1, n // 2), n + 1))


def epsilon_from_slope(slope, M=3):
    """epsilon solving (M^2 - 1)/M * (1 - epsilon) = M^slope."""
    return 1.0 - M ** slope * M / (M * M - 1)


def p_threshold(epsilon, symbols=8, M=3):
    """(M / symbols) / (1 - epsilon^2); (3/8) / (1 - epsilon^2) for the eight-cell carpet."""
    epsilon = float(epsilon)
    if not 0 < epsilon < 1:
        raise InvalidParameters(f'epsilon must lie in (0, 1), got {epsilon}')
    return (M / symbols) / (1 - epsilon * epsilon)


@dataclass(frozen=True)
class EpsilonEstimate:
    median: float
    lower: float
    upper: float
    in_model: bool
    window: tuple
    offsets: tuple
    slopes: tuple
    epsilons: tuple
    counts: tuple
    empty_offsets: int = 0

    @property
    def median_slope(self):
        return float(np.median(self.slopes))


def epsilon_alpha(pattern, direction, x_samples, n, seed=0, offsets=None):
    """
    Median and interquartile band of epsilon over random rational offsets.

    Each offset contributes the regression slope of its slice counts over
    levels max(1, n // 2) .. n. Offsets whose slice is empty are skipped.
    """
    _require_exact(direction)
    if n < 2:
        raise InvalidParameters(f'the growth exponent needs n >= 2, got {n}')
    if offsets is None:
        offsets = random_rational_offsets(direction, x_samples, seed)
    window = slope_window(n)
    slopes, kept, table = [], [], []
    for x in offsets:
        counts = pattern_slice_counts(pattern, SliceQuery(direction, x), n)
        if counts[n] == 0:
            continue
        fit = fit_log_counts(window, [counts[k] for k in window], pattern.M)
        slopes.append(fit.slope)
        kept.append(x)
        table.append(tuple(counts))
    if not slopes:
        raise DegenerateSample(f'all {len(offsets)} sampled slices miss the level-{n} carpet')
    epsilons = [epsilon_from_slope(s, pattern.M) for s in slopes]
    median = float(np.median(epsilons))
    lower, upper = (float(v) for v in np.percentile(epsilons, [25, 75]))
    in_model = pattern.size == pattern.M ** 2 - 1 and 0 < median < 1
    logger.info('epsilon at beta=%s: median %.4f over %d offsets', direction.beta, median, len(slopes))
    return EpsilonEstimate(
        median=median, lower=lower, upper=upper, in_model=in_model, window=tuple(window),
        offsets=tuple(kept), slopes=tuple(slopes), epsilons=tuple(epsilons), counts=tuple(table),
        empty_offsets=len(offsets) - len(kept),
    )


@dataclass(frozen=True)
class HitsCurve:
    levels: tuple
    counts: tuple
    values: tuple
    eventually_decreasing: bool
    log_slope: float


def expected_hits_curve(pattern, direction, x, p, n_lo, n_hi):
    """N_n * p^n over n_lo..n_hi: an upper bound of the expected number of slice cells kept."""
    _require_exact(direction)
    p = float(p)
    if not 0 < p <= 1:
        raise InvalidParameters(f'p must lie in (0, 1], got {p}')
    if not n_hi > n_lo >= 0:
        raise InvalidParameters(f'need n_hi > n_lo >= 0, got n_lo={n_lo}, n_hi={n_hi}')
    counts = pattern_slice_counts(pattern, SliceQuery(direction, x), n_hi)
    levels = list(range(n_lo, n_hi + 1))
    values = [counts[n] * p ** n for n in levels]
    tail = values[len(values) // 2:]
    decreasing = all(b < a for a, b in zip(tail, tail[1:]))
    if all(v > 0 for v in values):
        log_slope = float(np.polyfit(levels, np.log(values), 1)[0])
    else:
        log_slope = None
    return HitsCurve(tuple(levels), tuple(counts[n] for n in levels), tuple(values), decreasing, log_slope)


@dataclass(frozen=True)
class ThresholdReport:
    direction: Direction
    n: int
    seed: int
    estimate: EpsilonEstimate
    p_alpha: float = None
    curve: HitsCurve = None


def threshold_report(pattern, direction, x_samples, n, seed=0, p=None, x=None):
    """
    epsilon estimate, the matching critical probability, and the hits curve at
    probability `p` (default the pattern's) for offset `x` (default the first sampled one).
    """
    estimate = epsilon_alpha(pattern, direction, x_samples, n, seed=seed)
    p_alpha = None
    if estimate.in_model:
        p_alpha = p_threshold(estimate.median, symbols=pattern.size, M=pattern.M)
    curve_x = estimate.offsets[0] if x is None else x
    curve = expected_hits_curve(pattern, direction, curve_x, pattern.p if p is None else p, 0, n)
    return ThresholdReport(direction, n, seed, estimate, p_alpha, curve)


def farey_directions(max_denominator=None):
    """Every beta = a/b in [0, 1] with b <= max_denominator, ascending."""
    q = conf.scan_max_denominator() if max_denominator is None else int(max_denominator)
    if q < 1:
        raise InvalidParameters(f'max_denominator must be positive, got {q}')
    betas = sorted({Fraction(a, b) for b in range(1, q + 1) for a in range(b + 1)})
    return [Direction(beta) for beta in betas]


@dataclass(frozen=True)
class DirectionResult:
    direction: Direction
    seeds: tuple
    lengths: tuple
    coarse_lengths: tuple
    containment: bool
    proper_columns: bool
    certificate_a: object
    certificate_b: object
    b_detail: str
    verdict: str
    evidence: str = ''

    @property
    def mean_length(self):
        return float(np.mean(self.lengths)) if self.lengths else 0.0

    @property
    def mean_coarse_length(self):
        return float(np.mean(self.coarse_lengths)) if self.coarse_lengths else 0.0


@dataclass(frozen=True)
class DirectionScan:
    n: int
    seed: int
    results: list = field(default_factory=list)

    def verdicts(self):
        return [(r.direction, r.verdict) for r in self.results]


def _realisation(params, n):
    """Levels n - 2 and n of one realisation, conditioned on survival when possible."""
    if params.supercritical:
        params = params.with_seed(sample_conditioned(params, n).seed)
    levels = list(iter_levels(params, n))
    return params.seed, levels[max(0, n - 2)], levels[n]


def _length(union):
    return float(largest_interior_interval(union)[0])


def _verdict(direction, containment, proper_columns, certificate_a, certificate_b, lengths, coarse):
    if direction.beta == 0 and containment and proper_columns:
        return EXCEPTIONAL_LIKELY, 'projection inside the Cantor approximation of the retained columns'
    if certificate_b is not None and certificate_b.holds:
        return INTERVAL_LIKELY, 'condition B certificate'
    if certificate_a.holds:
        return INTERVAL_LIKELY, 'condition A certificate'
    mean, mean_coarse = float(np.mean(lengths)), float(np.mean(coarse))
    if mean == 0 or (mean_coarse > 0 and mean < SHRINK_RATIO * mean_coarse):
        return EXCEPTIONAL_LIKELY, f'largest interval shrank from {mean_coarse:.4g} to {mean:.4g}'
    return UNDETERMINED, f'largest interval {mean:.4g}, no certificate'


def _scan_direction(task):
    params, direction, n, seeds, r_max, margin, grid_n = task
    lengths, coarse, used, containment = [], [], [], True
    for s in seeds:
        seed, coarse_set, level_set = _realisation(params.with_seed(s), n)
        used.append(seed)
        lengths.append(_length(project_level_set(level_set, direction)))
        coarse.append(_length(project_level_set(coarse_set, direction)))
        if direction.beta == 0:
            containment = containment and axis_containment(level_set, params, direction)
    columns = {i for p, (i, j) in direction.orient_table(params) if p > 0}
    proper_columns = len(columns) < params.M

    certificate_a = check_condition_A(params, direction, r_max=r_max, margin=margin, N=grid_n)
    certificate_b, b_detail = None, ''
    try:
        candidate = candidate_function(params, direction, grid_n)
        certificate_b = check_condition_B(params, direction, candidate)
    except (CandidateInvalid, NumericalBlowUp, PreconditionError) as exc:
        b_detail = str(exc)

    verdict, evidence = _verdict(
        direction, containment and direction.beta == 0, proper_columns,
        certificate_a, certificate_b, lengths, coarse,
    )
    return DirectionResult(
        direction=direction, seeds=tuple(used), lengths=tuple(lengths), coarse_lengths=tuple(coarse),
        containment=containment and direction.beta == 0, proper_columns=proper_columns,
        certificate_a=certificate_a, certificate_b=certificate_b, b_detail=b_detail,
        verdict=verdict, evidence=evidence,
    )


def exceptional_scan(params, directions, n, seeds, seed=0, r_max=5, margin=0.05, grid_n=None, jobs=None):
    """
    Monte Carlo interval statistics and condition certificates per direction,
    summarised as a heuristic verdict with the evidence attached.
    """
    if params.d != 2:
        raise PreconditionError('direction scans are planar (d = 2)')
    if n < 1 or seeds < 1:
        raise InvalidParameters(f'need n >= 1 and seeds >= 1, got n={n}, seeds={seeds}')
    replicate_seeds = tuple(derive_seed(seed, k) for k in range(seeds))
    grid_n = conf.grid_n() if grid_n is None else int(grid_n)
    tasks = [(params, d, n, replicate_seeds, r_max, margin, grid_n) for d in directions]
    results = map_tasks(_scan_direction, tasks, jobs)
    for result in results:
        logger.info('beta=%s (%s): %s', result.direction.beta, result.direction.transform, result.verdict)
    return DirectionScan(n, seed, results)
