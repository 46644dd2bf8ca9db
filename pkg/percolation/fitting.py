"""Log-log regression of per-level counts."""
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import linregress

from .exceptions import DegenerateSample, InvalidParameters


@dataclass(frozen=True)
class DimensionFit:
    levels: tuple
    counts: tuple
    slope: float
    stderr: float
    r_squared: float

    @property
    def log_counts(self):
        return tuple(math.log(c) for c in self.counts)


def fit_log_counts(levels, counts, M, min_levels=2):
    """
    Least-squares slope of log(count) against level * log(M).

    Counts stay Python integers; their logarithms are taken exactly, so counts
    past the float range are fitted too.
    """
    levels = [int(n) for n in levels]
    counts = [int(c) for c in counts]
    if len(levels) != len(counts):
        raise InvalidParameters('levels and counts differ in length')
    if len(levels) < min_levels:
        raise InvalidParameters(f'a dimension fit needs at least {min_levels} levels, got {len(levels)}')
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise InvalidParameters('levels must be strictly increasing')
    if any(c <= 0 for c in counts):
        raise DegenerateSample(f'zero count in {dict(zip(levels, counts))}: extinct or empty sample')
    x = np.asarray(levels, dtype=np.float64) * math.log(M)
    y = np.array([math.log(c) for c in counts])
    if len(levels) == 2:
        slope = float((y[1] - y[0]) / (x[1] - x[0]))
        return DimensionFit(tuple(levels), tuple(counts), slope, 0.0, 1.0)
    fit = linregress(x, y)
    r_squared = float(fit.rvalue ** 2) if np.isfinite(fit.rvalue) else 1.0
    return DimensionFit(tuple(levels), tuple(counts), float(fit.slope), float(fit.stderr), r_squared)


def box_counting_dimension(counts, M, levels=None):
    """
    Box-counting dimension from cell counts of consecutive levels.

    `counts[k]` is the number of level-`levels[k]` cells (levels default to
    0, 1, 2, ...). At least three levels are required.
    """
    if levels is None:
        levels = range(len(counts))
    return fit_log_counts(list(levels), list(counts), M, min_levels=3)
