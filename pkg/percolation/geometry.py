"""
Planar projections, slices and visibility of level sets.

Directions are normalised into alpha in [pi/4, pi/2] by a dihedral symmetry of
the unit square; every computation below happens in that frame, where the
projection is (x, y) -> x - y * beta with beta = cot(alpha) in [0, 1] and
the projection of the square is [-beta, 1]. Cells are reported in their
original coordinates.

Exact mode (rational beta and offset) clears denominators and compares
integers. A line meets a cell when it crosses the cell's interior, i.e. the
offset lies strictly inside the projected interval; `SliceQuery(closed=True)`
counts boundary contacts as well.
"""
import enum
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational

import numpy as np

from .core import CellWord
from .exceptions import EmptySlice, InvalidParameters, PreconditionError
from .fitting import fit_log_counts
from .presets import Pattern

logger = logging.getLogger(__name__)

TRANSFORMS = ('identity', 'mirror', 'swap', 'mirror_swap')
_INT64_SAFE = 1 << 62

__all__ = [
    'Direction', 'IntervalUnion', 'Pattern', 'SliceQuery', 'Side', 'ErgodicSum', 'SliceDimension',
    'VisibleSet', 'project_cell', 'project_level_set', 'largest_interior_interval', 'slice_cells',
    'slice_mask', 'pattern_slice_count', 'pattern_slice_counts', 'slice_box_dimension',
    'classify_entrance', 'partial_ergodic_sum', 'rotation_orbit_average', 'visible_first_hit',
    'first_hit_cells', 'cantor_approximation', 'axis_containment', 'random_rational_offsets',
]


def _as_exact(value):
    if isinstance(value, Fraction):
        return value
    if isinstance(value, Rational):
        return Fraction(value)
    return None


@dataclass(frozen=True)
class Direction:
    """
    A projection direction, stored as beta = cot(alpha) in the normalised frame
    together with the symmetry `transform` that maps the original square onto it.
    """
    beta: object
    transform: str = 'identity'

    def __post_init__(self):
        exact = _as_exact(self.beta)
        beta = exact if exact is not None else float(self.beta)
        if not 0 <= beta <= 1:
            raise InvalidParameters(f'normalised cot must lie in [0, 1], got {beta}')
        if self.transform not in TRANSFORMS:
            raise InvalidParameters(f'unknown symmetry transform {self.transform!r}')
        object.__setattr__(self, 'beta', beta)

    @classmethod
    def from_cot(cls, cot):
        exact = _as_exact(cot)
        c = exact if exact is not None else float(cot)
        if not math.isfinite(c):
            return cls(Fraction(0), 'swap')
        if 0 <= c <= 1:
            return cls(c, 'identity')
        if c > 1:
            return cls(1 / c, 'swap')
        if c >= -1:
            return cls(-c, 'mirror')
        return cls(-1 / c, 'mirror_swap')

    @classmethod
    def from_tan(cls, tan):
        exact = _as_exact(tan)
        t = exact if exact is not None else float(tan)
        if t == 0:
            return cls(Fraction(0) if exact is not None else 0.0, 'swap')
        return cls.from_cot(1 / t)

    @classmethod
    def from_alpha(cls, alpha):
        alpha = math.fmod(float(alpha), math.pi)
        if alpha < 0:
            alpha += math.pi
        if math.sin(alpha) == 0:
            return cls(0.0, 'swap')
        if alpha == math.pi / 2:
            return cls(0.0, 'identity')
        return cls.from_cot(math.cos(alpha) / math.sin(alpha))

    @property
    def exact(self):
        return isinstance(self.beta, Fraction)

    @property
    def num(self):
        return self.beta.numerator

    @property
    def den(self):
        return self.beta.denominator

    @property
    def beta_float(self):
        return float(self.beta)

    @property
    def alpha(self):
        """The original angle in [0, pi)."""
        normalised = math.pi / 2 - math.atan(self.beta_float)
        return {
            'identity': normalised,
            'mirror': math.pi - normalised,
            'swap': math.pi / 2 - normalised,
            'mirror_swap': normalised + math.pi / 2,
        }[self.transform]

    def as_float(self):
        return Direction(self.beta_float, self.transform)

    def orient_corners(self, coords, side):
        """Map original integer cell corners (k, 2) at grid side `side` into the frame."""
        a, b = coords[:, 0], coords[:, 1]
        if self.transform in ('mirror', 'mirror_swap'):
            a = side - 1 - a
        if self.transform in ('swap', 'mirror_swap'):
            a, b = b, a
        return a, b

    def orient_symbol(self, symbol, M):
        a, b = self.orient_corners(np.array([symbol], dtype=np.int64), M)
        return int(a[0]), int(b[0])

    def orient_table(self, params):
        """(probability, (i, j)) pairs of a planar table, symbols taken into the frame."""
        if params.d != 2:
            raise PreconditionError('projections are implemented for d = 2')
        letters = params.letters()
        a, b = self.orient_corners(letters, params.M)
        return [(p, (int(i), int(j))) for p, i, j in zip(params.probs, a.tolist(), b.tolist())]

    def orient_pattern(self, pattern):
        return Pattern(pattern.M, frozenset(self.orient_symbol(s, pattern.M) for s in pattern.symbols), pattern.p)


@dataclass(frozen=True)
class SliceQuery:
    direction: Direction
    x: object
    closed: bool = False

    def __post_init__(self):
        exact = _as_exact(self.x) if self.direction.exact else None
        x = exact if exact is not None else float(self.x)
        if not -self.direction.beta <= x <= 1:
            raise InvalidParameters(f'offset {x} lies outside [-{self.direction.beta}, 1]')
        object.__setattr__(self, 'x', x)

    @property
    def exact(self):
        return isinstance(self.x, Fraction)


def _int_array(values, bound):
    """int64 when every value is below `bound` < 2**62 in magnitude, Python ints otherwise."""
    dtype = np.int64 if bound < _INT64_SAFE else object
    return np.asarray(values, dtype=dtype)


@dataclass(frozen=True, eq=False)
class IntervalUnion:
    """
    Sorted, pairwise disjoint, non-touching closed intervals.

    In exact mode endpoints are integers over the common denominator `scale`;
    otherwise `scale` is None and endpoints are floats.
    """
    starts: np.ndarray
    ends: np.ndarray
    scale: int = None

    @classmethod
    def merge(cls, starts, ends, scale=None):
        starts = np.asarray(starts)
        ends = np.asarray(ends)
        if len(starts) == 0:
            return cls.empty(scale)
        order = np.argsort(starts, kind='stable')
        s, e = starts[order], ends[order]
        reach = np.maximum.accumulate(e)
        new_group = np.ones(len(s), dtype=bool)
        new_group[1:] = s[1:] > reach[:-1]
        first = np.flatnonzero(new_group)
        last = np.append(first[1:] - 1, len(s) - 1)
        return cls(s[first], reach[last], scale)

    @classmethod
    def empty(cls, scale=None):
        dtype = np.int64 if scale is not None else np.float64
        return cls(np.zeros(0, dtype=dtype), np.zeros(0, dtype=dtype), scale)

    def __len__(self):
        return len(self.starts)

    @property
    def exact(self):
        return self.scale is not None

    def _value(self, v):
        return Fraction(int(v), self.scale) if self.exact else float(v)

    @property
    def intervals(self):
        return [(self._value(s), self._value(e)) for s, e in zip(self.starts, self.ends)]

    def lengths(self):
        return self.ends - self.starts

    def total_length(self):
        if self.exact:
            return Fraction(sum(int(v) for v in self.lengths().tolist()), self.scale)
        return float(np.sum(self.lengths()))

    def rescaled(self, scale):
        if not self.exact or scale % self.scale:
            raise InvalidParameters(f'cannot rescale denominator {self.scale} to {scale}')
        factor = scale // self.scale
        bound = max([abs(int(v)) for v in self.starts.tolist() + self.ends.tolist()] + [1]) * factor
        return IntervalUnion(_int_array([int(v) * factor for v in self.starts.tolist()], bound),
                             _int_array([int(v) * factor for v in self.ends.tolist()], bound), scale)

    def _common(self, other):
        if self.exact != other.exact:
            raise InvalidParameters('cannot combine exact and floating interval unions')
        if not self.exact:
            return self, other
        scale = self.scale * other.scale // math.gcd(self.scale, other.scale)
        return self.rescaled(scale), other.rescaled(scale)

    def union(self, other):
        a, b = self._common(other)
        return IntervalUnion.merge(np.concatenate([a.starts, b.starts]),
                                   np.concatenate([a.ends, b.ends]), a.scale)

    def contains(self, other):
        """Whether every interval of `other` lies inside one interval of this union."""
        a, b = self._common(other)
        if not len(b):
            return True
        if not len(a):
            return False
        idx = np.searchsorted(a.starts, b.starts, side='right') - 1
        if np.any(idx < 0):
            return False
        return bool(np.all(a.ends[idx] >= b.ends))

    def __eq__(self, other):
        return (
            isinstance(other, IntervalUnion)
            and self.scale == other.scale
            and np.array_equal(self.starts, other.starts)
            and np.array_equal(self.ends, other.ends)
        )

    __hash__ = None


def _check_planar(level_set):
    if level_set.d != 2:
        raise PreconditionError('projections are implemented for d = 2')


def project_cell(word, direction, M):
    """Closed interval Pi(K_word) in the frame: [(a - (b+1) beta) / M^n, (a + 1 - b beta) / M^n]."""
    n = word.level
    side = M ** n
    a, b = direction.orient_corners(np.array([word.corner(M)], dtype=np.int64), side)
    a, b = int(a[0]), int(b[0])
    beta = direction.beta
    return (a - (b + 1) * beta) / side, (a + 1 - b * beta) / side


def _exact_numerators(level_set, direction):
    """Interval endpoints of every cell over the denominator M^n * den."""
    side = level_set.side
    num, den = direction.num, direction.den
    bound = (side + 1) * (num + den)
    a, b = direction.orient_corners(level_set.coords, side)
    if bound >= _INT64_SAFE:
        a, b = a.astype(object), b.astype(object)
    return a * den - (b + 1) * num, (a + 1) * den - b * num, side * den


def projected_endpoints(level_set, direction):
    side = float(level_set.side)
    a, b = direction.orient_corners(level_set.coords, level_set.side)
    beta = direction.beta_float
    a = a.astype(np.float64)
    b = b.astype(np.float64)
    return (a - (b + 1) * beta) / side, (a + 1 - b * beta) / side


def project_level_set(level_set, direction):
    _check_planar(level_set)
    if direction.exact:
        lo, hi, scale = _exact_numerators(level_set, direction)
        if level_set.is_empty:
            return IntervalUnion.empty(scale)
        return IntervalUnion.merge(lo, hi, scale)
    if level_set.is_empty:
        return IntervalUnion.empty()
    lo, hi = projected_endpoints(level_set, direction)
    return IntervalUnion.merge(lo, hi)


def largest_interior_interval(union):
    """(length, interval) of the longest interval; (0, None) for the empty union."""
    if not len(union):
        return (Fraction(0) if union.exact else 0.0), None
    lengths = union.lengths()
    k = int(np.argmax(lengths))
    interval = union.intervals[k]
    return interval[1] - interval[0], interval


def _within(lo, x, hi, closed):
    if closed:
        return (lo <= x) & (x <= hi)
    return (lo < x) & (x < hi)


def slice_mask(level_set, query):
    """Boolean mask of the cells whose projected interval contains the offset."""
    _check_planar(level_set)
    if query.exact:
        lo, hi, scale = _exact_numerators(level_set, query.direction)
        xn, xd = query.x.numerator, query.x.denominator
        target = xn * scale
        bound = max(abs(target), (level_set.side + 1) * (query.direction.num + query.direction.den) * xd)
        if bound >= _INT64_SAFE:
            lo = np.asarray(lo, dtype=object)
            hi = np.asarray(hi, dtype=object)
        return np.asarray(_within(lo * xd, target, hi * xd, query.closed), dtype=bool)
    lo, hi = projected_endpoints(level_set, query.direction.as_float())
    return _within(lo, float(query.x), hi, query.closed)


def slice_cells(level_set, query):
    """Retained cells meeting the line through the offset."""
    mask = slice_mask(level_set, query)
    return {CellWord.from_corner(c, level_set.n, level_set.M) for c in level_set.coords[mask].tolist()}


def _slice_state(pattern, query):
    if not query.exact:
        raise PreconditionError('exact rational cot required')
    direction = query.direction
    xn, xd = query.x.numerator, query.x.denominator
    scale = direction.den * xd
    low = -direction.num * xd
    symbols = sorted(direction.orient_pattern(pattern).symbols)
    shifts = [-i * scale + j * direction.num * xd for i, j in symbols]
    return xn * direction.den, scale, low, shifts


def _advance_counts(states, counts, M, low, high, shifts, closed):
    nxt_states, nxt_counts = [], []
    for shift in shifts:
        child = states * M + shift
        keep = _within(low, child, high, closed)
        nxt_states.append(child[keep])
        nxt_counts.append(counts[keep])
    states = np.concatenate(nxt_states)
    counts = np.concatenate(nxt_counts)
    if not len(states):
        return states, counts
    order = np.argsort(states, kind='stable')
    states, counts = states[order], counts[order]
    starts = np.flatnonzero(np.r_[True, states[1:] != states[:-1]])
    return states[starts], np.add.reduceat(counts, starts)


def _advance_counts_exact(states, M, low, high, shifts, closed):
    nxt = {}
    for state, count in states.items():
        for shift in shifts:
            child = state * M + shift
            if _within(low, child, high, closed):
                nxt[child] = nxt.get(child, 0) + count
    return nxt


def pattern_slice_counts(pattern, query, n):
    """
    N at levels 0..n for the deterministic carpet of `pattern`.

    The state of a cell is its relative offset t = M^k x - a + b beta, kept as an
    integer over den * xd; a child (i, j) has t' = M t - i + j beta and meets the
    line iff t' lies in (-beta, 1), or in [-beta, 1] for closed queries. Equal
    states are merged, so the work is bounded by the number of distinct offsets
    rather than by the count.
    """
    start, scale, low, shifts = _slice_state(pattern, query)
    M = pattern.M
    bound = (M + 1) * (scale - low) + max(abs(s) for s in shifts)
    fits_int64 = bound < _INT64_SAFE and n * math.log2(max(len(shifts), 2)) < 62
    out = [1]
    if fits_int64:
        states = np.array([start], dtype=np.int64)
        counts = np.array([1], dtype=np.int64)
        shifts_arr = [np.int64(s) for s in shifts]
        for _ in range(n):
            states, counts = _advance_counts(states, counts, M, low, scale, shifts_arr, query.closed)
            out.append(int(counts.sum()))
        return out
    logger.debug('slice states exceed int64, counting with Python integers')
    states = {start: 1}
    for _ in range(n):
        states = _advance_counts_exact(states, M, low, scale, shifts, query.closed)
        out.append(sum(states.values()))
    return out


def pattern_slice_count(pattern, query, n):
    return pattern_slice_counts(pattern, query, n)[-1]


@dataclass(frozen=True)
class SliceDimension:
    fit: object
    counts: dict

    @property
    def slope(self):
        return self.fit.slope


def slice_box_dimension(pattern, direction, x, n_lo, n_hi):
    if not n_hi > n_lo >= 1:
        raise InvalidParameters(f'need n_hi > n_lo >= 1, got n_lo={n_lo}, n_hi={n_hi}')
    query = SliceQuery(direction, x)
    counts = pattern_slice_counts(pattern, query, n_hi)
    window = list(range(n_lo, n_hi + 1))
    table = {n: counts[n] for n in window}
    if any(counts[n] == 0 for n in window):
        raise EmptySlice(f'the line through x={query.x} misses the level-{n_hi} carpet')
    return SliceDimension(fit_log_counts(window, [counts[n] for n in window], pattern.M), table)


class Side(str, enum.Enum):
    SOUTH = 'south'
    WEST = 'west'


def classify_entrance(word, query, M):
    """Which border of K_word the line enters through, and psi_word(x)."""
    n = word.level
    side = M ** n
    a, b = query.direction.orient_corners(np.array([word.corner(M)], dtype=np.int64), side)
    beta = query.direction.beta if query.exact else query.direction.beta_float
    psi = side * query.x - int(a[0]) + int(b[0]) * beta
    if not -beta <= psi <= 1:
        raise InvalidParameters(f'cell {word.corner(M)} does not meet the line through x={query.x}')
    return (Side.SOUTH if psi >= 0 else Side.WEST), psi


@dataclass(frozen=True)
class ErgodicSum:
    average: float
    terms: int
    rows: tuple
    rotation_average: float
    consecutive_average: float


def _southern_entrances(pattern, query, n):
    """Entrance points (as floats) and rows of the southern level-n slice cells."""
    direction = query.direction
    symbols = sorted(direction.orient_pattern(pattern).symbols)
    M = pattern.M
    rows = np.zeros(1, dtype=np.int64)
    if query.exact:
        start, scale, low, shifts = _slice_state(pattern, query)
        if (M + 1) * (scale - low) >= _INT64_SAFE:
            raise PreconditionError('offset denominator too large for the entrance enumeration')
        t = np.array([start], dtype=np.int64)
        for _ in range(n):
            parts = [(t * M + s, rows * M + j) for s, (i, j) in zip(shifts, symbols)]
            t = np.concatenate([p[0] for p in parts])
            rows = np.concatenate([p[1] for p in parts])
            keep = _within(low, t, scale, query.closed)
            t, rows = t[keep], rows[keep]
        south = (t >= 0) & (t <= scale)
        return t[south].astype(np.float64) / scale, rows[south]
    beta = direction.beta_float
    t = np.array([float(query.x)])
    for _ in range(n):
        parts = [(t * M - i + j * beta, rows * M + j) for i, j in symbols]
        t = np.concatenate([p[0] for p in parts])
        rows = np.concatenate([p[1] for p in parts])
        keep = _within(-beta, t, 1.0, query.closed)
        t, rows = t[keep], rows[keep]
    south = (t >= 0.0) & (t <= 1.0)
    return t[south], rows[south]


def rotation_orbit_average(h, x0, beta, ks):
    """Mean of h over the rotation orbit points frac(x0 + k beta), k in ks."""
    ks = np.asarray(ks, dtype=np.float64)
    if not len(ks):
        raise EmptySlice('empty-sum: no orbit points')
    points = np.mod(float(x0) + ks * float(beta), 1.0)
    return float(np.mean(h(points)))


def partial_ergodic_sum(h, query, n, pattern):
    """
    Average of h over the southern entrance points of the level-n slice cells of
    the deterministic carpet, with the rotation comparators over the same rows
    and over as many consecutive rotation steps.
    """
    if abs(h.integral()) > 1e-6 + 2 * h.step * float(np.max(np.abs(h.values))):
        raise PreconditionError('partial ergodic sums need a zero-mean h')
    points, rows = _southern_entrances(pattern, query, n)
    if not len(points):
        raise EmptySlice('empty-sum: no southern cells on this slice')
    M = pattern.M
    if query.exact:
        x0 = float(Fraction(query.x.numerator * M ** n % query.x.denominator, query.x.denominator))
    else:
        x0 = math.fmod(float(query.x) * M ** n, 1.0) % 1.0
    beta = query.direction.beta_float
    order = np.argsort(rows, kind='stable')
    return ErgodicSum(
        average=float(np.mean(h(points))),
        terms=int(len(points)),
        rows=tuple(int(r) for r in rows[order].tolist()),
        rotation_average=rotation_orbit_average(h, x0, beta, rows),
        consecutive_average=rotation_orbit_average(h, x0, beta, np.arange(len(points))),
    )


SIDES = ('bottom', 'top', 'left', 'right')


@dataclass(frozen=True, eq=False)
class VisibleSet:
    cells: np.ndarray
    count: int


def visible_first_hit(grid, side):
    """First retained cell of every column (bottom/top) or row (left/right) seen from `side`."""
    if side not in SIDES:
        raise InvalidParameters(f'side must be one of {SIDES}, got {side!r}')
    grid = np.asarray(grid, dtype=bool)
    if grid.ndim != 2:
        raise PreconditionError('visibility works on a planar raster')
    n_rows, n_cols = grid.shape
    if side in ('bottom', 'top'):
        nonempty = grid.any(axis=0)
        rows = grid.argmax(axis=0) if side == 'bottom' else n_rows - 1 - grid[::-1].argmax(axis=0)
        cols = np.flatnonzero(nonempty)
        cells = np.stack([cols, rows[nonempty]], axis=1)
    else:
        nonempty = grid.any(axis=1)
        cols = grid.argmax(axis=1) if side == 'left' else n_cols - 1 - grid[:, ::-1].argmax(axis=1)
        rows = np.flatnonzero(nonempty)
        cells = np.stack([cols[nonempty], rows], axis=1)
    return VisibleSet(cells.astype(np.int64), int(len(cells)))


def first_hit_cells(level_set, side):
    """visible_first_hit computed from cell corners, without a raster."""
    _check_planar(level_set)
    if side not in SIDES:
        raise InvalidParameters(f'side must be one of {SIDES}, got {side!r}')
    coords = level_set.coords
    if not len(coords):
        return VisibleSet(np.zeros((0, 2), dtype=np.int64), 0)
    x, y = coords[:, 0], coords[:, 1]
    primary, secondary = {
        'bottom': (x, y), 'top': (x, -y), 'left': (y, x), 'right': (y, -x),
    }[side]
    order = np.lexsort((secondary, primary))
    _, first = np.unique(primary[order], return_index=True)
    cells = coords[order][first]
    if side in ('left', 'right'):
        cells = cells[np.lexsort((cells[:, 0], cells[:, 1]))]
    return VisibleSet(np.ascontiguousarray(cells), int(len(cells)))


def cantor_approximation(digits, M, n):
    """Level-n approximation of the set of points whose base-M digits lie in `digits`."""
    digits = sorted({int(c) for c in digits})
    if not digits or any(not 0 <= c < M for c in digits):
        raise InvalidParameters(f'digits {digits} are not a nonempty subset of 0..{M - 1}')
    ks = np.zeros(1, dtype=np.int64)
    for _ in range(n):
        ks = (ks[:, None] * M + np.asarray(digits, dtype=np.int64)[None, :]).ravel()
    return IntervalUnion.merge(ks, ks + 1, M ** n)


def axis_containment(level_set, params, direction):
    """
    At beta = 0, whether the projection of `level_set` lies in the Cantor
    approximation built from the columns (in the frame) that carry positive
    probability. Exact, zero tolerance.
    """
    if direction.beta != 0:
        raise PreconditionError('axis containment is defined for beta = 0')
    frame = Direction(Fraction(0), direction.transform)
    columns = {i for p, (i, j) in frame.orient_table(params) if p > 0}
    if not columns:
        return True
    cantor = cantor_approximation(columns, params.M, level_set.n)
    return cantor.contains(project_level_set(level_set, frame))


def random_rational_offsets(direction, count, seed, denominator=1 << 20):
    """`count` offsets -beta + (1 + beta) k / denominator with k uniform, from a seeded PCG64 stream."""
    rng = np.random.default_rng(seed)
    ks = rng.integers(0, denominator, size=int(count), endpoint=True).tolist()
    if direction.exact:
        beta = direction.beta
        return [-beta + (1 + beta) * Fraction(k, denominator) for k in ks]
    beta = direction.beta_float
    return [-beta + (1 + beta) * k / denominator for k in ks]
