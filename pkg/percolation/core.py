"""
Fractal percolation: parameters, retention draws and level-n approximations.

A level-n cell is addressed either by its word (i_1, ..., i_n) of letters in
{0..M-1}^d, first letter outermost, or by the integer corner of the cube it
addresses in [0, M^n - 1]^d. Letter (i, j) of a planar table is column i and
row j; tables are stored in letter-index order, index = sum_k i_k * M^k, which
for d = 2 is the row-major, bottom-row-first order.
"""
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import conf
from .exceptions import (
    ExtinctionDominated,
    InvalidParameters,
    LevelTooDeep,
    PreconditionError,
)
from .randomness import MAX_SEED, derive_seed, descend, descend_all, root_key, unit_draws

logger = logging.getLogger(__name__)

# parents processed per vectorised block
_BLOCK_CHILDREN = 1 << 22
_COORD_LIMIT = 1 << 62


@dataclass(frozen=True)
class PercolationParams:
    d: int
    M: int
    probs: tuple
    seed: int = 0

    @property
    def total(self):
        return math.fsum(self.probs)

    @property
    def supercritical(self):
        return self.total > 1

    @property
    def dim_gt_1(self):
        return self.total > self.M

    @property
    def homogeneous(self):
        return len(set(self.probs)) == 1

    def letters(self):
        """(M^d, d) array of letters in table order."""
        return letter_array(self.M, self.d)

    def prob(self, letter):
        return self.probs[letter_index(letter, self.M)]

    def matrix(self):
        """Planar table as probs[j][i] (bottom row first)."""
        if self.d != 2:
            raise PreconditionError('a probability matrix exists for d = 2 only')
        return [list(self.probs[j * self.M:(j + 1) * self.M]) for j in range(self.M)]

    def with_seed(self, seed):
        return PercolationParams(self.d, self.M, self.probs, int(seed))

    def with_probs(self, probs):
        return validate_params({'d': self.d, 'M': self.M, 'probs': list(probs), 'seed': self.seed})

    @property
    def digest(self):
        payload = json.dumps(
            {'d': self.d, 'M': self.M, 'probs': [repr(p) for p in self.probs], 'seed': self.seed},
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def letter_index(letter, M):
    return sum(int(c) * M ** k for k, c in enumerate(letter))


def letter_array(M, d):
    idx = np.arange(M ** d, dtype=np.int64)
    return np.stack([(idx // M ** k) % M for k in range(d)], axis=1)


def _flatten_probs(raw_probs, M, d):
    if isinstance(raw_probs, dict):
        flat = [0.0] * (M ** d)
        for key, value in raw_probs.items():
            letter = tuple(int(c) for c in (key.split(',') if isinstance(key, str) else key))
            if len(letter) != d or not all(0 <= c < M for c in letter):
                raise InvalidParameters(f'letter {key!r} is not in {{0..{M - 1}}}^{d}')
            flat[letter_index(letter, M)] = value
        return flat
    rows = list(raw_probs)
    if rows and all(isinstance(row, (list, tuple)) for row in rows):
        if d != 2:
            raise InvalidParameters('nested probability tables are only accepted for d = 2')
        if len(rows) != M or any(len(row) != M for row in rows):
            raise InvalidParameters(f'probability matrix must be {M} x {M}')
        return [value for row in rows for value in row]
    return rows


def validate_params(raw):
    """
    Build PercolationParams from a mapping with keys d, M, probs and seed.

    `probs` may be a flat list in table order, a bottom-row-first matrix
    (d = 2), or a mapping from letters to probabilities (missing letters are 0).
    """
    try:
        d = int(raw.get('d', 2))
        M = int(raw['M'])
        seed = int(raw.get('seed', 0))
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidParameters(f'malformed parameter record: {exc}') from exc
    if d < 1:
        raise InvalidParameters(f'd must be at least 1, got {d}')
    if M < 2:
        raise InvalidParameters(f'M must be at least 2, got {M}')
    if not 0 <= seed <= MAX_SEED:
        raise InvalidParameters(f'seed must be an unsigned 64-bit integer, got {seed}')
    flat = _flatten_probs(raw.get('probs', []), M, d)
    if len(flat) != M ** d:
        raise InvalidParameters(f'probability table has {len(flat)} entries, expected {M ** d}')
    probs = []
    for value in flat:
        try:
            p = float(value)
        except (TypeError, ValueError) as exc:
            raise InvalidParameters(f'probability {value!r} is not a number') from exc
        if not 0.0 <= p <= 1.0:
            raise InvalidParameters(f'probability out of range: {p}')
        probs.append(p)
    params = PercolationParams(d=d, M=M, probs=tuple(probs), seed=seed)
    logger.debug('params d=%d M=%d sum=%.6g supercritical=%s dim_gt_1=%s',
                 d, M, params.total, params.supercritical, params.dim_gt_1)
    return params


@dataclass(frozen=True)
class CellWord:
    letters: tuple

    @property
    def level(self):
        return len(self.letters)

    def corner(self, M, d=2):
        if not self.letters:
            return (0,) * d
        coords = [0] * len(self.letters[0])
        for letter in self.letters:
            coords = [c * M + int(i) for c, i in zip(coords, letter)]
        return tuple(coords)

    def prefix(self, n):
        return CellWord(self.letters[:n])

    @classmethod
    def from_corner(cls, corner, n, M):
        letters = []
        coords = [int(c) for c in corner]
        for _ in range(n):
            letters.append(tuple(c % M for c in coords))
            coords = [c // M for c in coords]
        if any(coords):
            raise InvalidParameters(f'corner {tuple(corner)} lies outside the level-{n} grid')
        return cls(tuple(reversed(letters)))


@dataclass(frozen=True, eq=False)
class LevelSet:
    n: int
    M: int
    d: int
    coords: np.ndarray
    params_digest: str = ''

    def __post_init__(self):
        self.coords.setflags(write=False)

    def __len__(self):
        return int(self.coords.shape[0])

    def __eq__(self, other):
        return (
            isinstance(other, LevelSet)
            and (self.n, self.M, self.d) == (other.n, other.M, other.d)
            and np.array_equal(self.coords, other.coords)
        )

    __hash__ = None

    @property
    def side(self):
        return self.M ** self.n

    @property
    def is_empty(self):
        return len(self) == 0

    @property
    def cells(self):
        return frozenset(map(tuple, self.coords.tolist()))

    def words(self):
        for corner in self.coords.tolist():
            yield CellWord.from_corner(corner, self.n, self.M)

    def contains(self, word):
        return word.level == self.n and word.corner(self.M, self.d) in self.cells

    def parents(self):
        """Corners of the level-(n-1) cells that have a retained child here."""
        if self.n == 0:
            raise PreconditionError('the root has no parent level')
        return np.unique(self.coords // self.M, axis=0)


def _canonical(coords, keys=None):
    order = np.lexsort(coords.T)
    coords = np.ascontiguousarray(coords[order])
    return coords if keys is None else (coords, keys[order])


def _check_width(params, level):
    if params.M ** level >= _COORD_LIMIT:
        raise LevelTooDeep(level, _COORD_LIMIT, detail='coordinate width')


def retention_draw(seed, word):
    """The uniform draw deciding whether `word` survives; retained iff draw < p_{last letter}."""
    key = root_key(seed)
    for letter in word.letters:
        key = descend(key, letter)
    return float(unit_draws(key)[0])


def iter_levels(params, n, cell_cap=None):
    """Yield E_0, E_1, ..., E_n of the realisation seeded by `params.seed`."""
    if n < 0:
        raise InvalidParameters(f'level must be non-negative, got {n}')
    cap = conf.cell_cap() if cell_cap is None else int(cell_cap)
    letters = params.letters()
    probs = np.asarray(params.probs, dtype=np.float64)
    width = len(letters)
    digest = params.digest

    coords = np.zeros((1, params.d), dtype=np.int64)
    keys = root_key(params.seed)
    yield LevelSet(0, params.M, params.d, coords.copy(), digest)

    block = max(1, _BLOCK_CHILDREN // width)
    for level in range(1, n + 1):
        _check_width(params, level)
        child_coords, child_keys, total = [], [], 0
        for start in range(0, len(keys), block):
            kids = descend_all(keys[start:start + block], letters)
            keep = unit_draws(kids) < probs[None, :]
            total += int(keep.sum())
            if total > cap:
                logger.warning('cell cap %d exceeded at level %d', cap, level)
                raise LevelTooDeep(level, cap)
            parent_idx, letter_idx = np.nonzero(keep)
            child_coords.append(coords[start:start + block][parent_idx] * params.M + letters[letter_idx])
            child_keys.append(kids[parent_idx, letter_idx])
        if child_coords:
            coords = np.concatenate(child_coords)
            keys = np.concatenate(child_keys)
        else:
            coords = np.zeros((0, params.d), dtype=np.int64)
            keys = np.zeros(0, dtype=np.uint64)
        coords, keys = _canonical(coords, keys)
        logger.debug('level %d: %d cells', level, len(coords))
        yield LevelSet(level, params.M, params.d, coords.copy(), digest)


def sample_level_set(params, n, cell_cap=None):
    level_set = None
    for level_set in iter_levels(params, n, cell_cap=cell_cap):
        pass
    return level_set


def sample_levels(params, n, cell_cap=None):
    return list(iter_levels(params, n, cell_cap=cell_cap))


@dataclass(frozen=True)
class ConditionedSample:
    level_set: LevelSet
    seed: int
    attempts: int

    @property
    def rejected(self):
        return self.attempts - 1


def attempt_seed(seed, attempt):
    return seed if attempt == 0 else derive_seed(seed, attempt)


def sample_conditioned(params, n, max_attempts=None, cell_cap=None):
    """
    Rejection-sample a realisation whose level-n set is nonempty.

    Attempt 0 uses the params seed itself; later attempts use derived seeds.
    """
    if not params.supercritical:
        raise PreconditionError(
            f'conditioning on survival needs sum(p) > 1, got {params.total:.6g}'
        )
    limit = conf.max_attempts() if max_attempts is None else int(max_attempts)
    if limit < 1:
        raise InvalidParameters('max_attempts must be positive')
    for attempt in range(limit):
        seed = attempt_seed(params.seed, attempt)
        level_set = sample_level_set(params.with_seed(seed), n, cell_cap=cell_cap)
        if not level_set.is_empty:
            if attempt:
                logger.info('survival at level %d after %d rejected draws', n, attempt)
            return ConditionedSample(level_set, seed, attempt + 1)
    q = extinction_probability(params)
    logger.warning('no surviving realisation in %d attempts (q=%.6f)', limit, q)
    raise ExtinctionDominated(limit, q)


def offspring_generating_function(params, s):
    return math.prod(1.0 - p + p * s for p in params.probs)


def extinction_probability(params, tol=1e-12, warm_start=1000):
    """
    Smallest fixed point of G(s) = prod(1 - p + p s) on [0, 1].

    Monotone iteration from 0 stays below the root and gives the lower end of
    the bracket; the upper end is the first of the points halving the distance
    to 1 where G(s) < s. brentq then closes the bracket to `tol`.
    """
    if any(p == 1.0 for p in params.probs):
        return 0.0
    if params.total <= 1:
        return 1.0

    def excess(s):
        return offspring_generating_function(params, s) - s

    lower = 0.0
    for _ in range(warm_start):
        lower = offspring_generating_function(params, lower)
    upper = lower
    for _ in range(64):
        upper = (upper + 1.0) / 2
        if excess(upper) < 0:
            return float(brentq(excess, lower, upper, xtol=tol))
        lower = upper
    logger.warning('extinction root not separated from 1 at sum(p)=%.12g', params.total)
    return lower


def expected_dimension(params):
    """log(sum p) / log M, or None when the process is subcritical."""
    total = params.total
    if total < 1:
        return None
    return math.log(total) / math.log(params.M)


def martingale_Z(level_set, params):
    if not params.supercritical:
        raise PreconditionError('Z is defined for sum(p) > 1')
    return len(level_set) / params.total ** level_set.n


@dataclass(frozen=True)
class BranchingStats:
    mean_offspring: float
    extinction_prob: float
    martingale_Z: float = None
    offspring_variance: float = field(default=0.0)


def branching_stats(params, level_set=None):
    return BranchingStats(
        mean_offspring=params.total,
        extinction_prob=extinction_probability(params),
        martingale_Z=None if level_set is None else martingale_Z(level_set, params),
        offspring_variance=math.fsum(p * (1.0 - p) for p in params.probs),
    )


def _row_view(coords):
    coords = np.ascontiguousarray(coords, dtype=np.int64)
    return coords.view(np.dtype((np.void, coords.dtype.itemsize * coords.shape[1]))).ravel()


def intersect_level_sets(a, b):
    if (a.n, a.M, a.d) != (b.n, b.M, b.d):
        raise InvalidParameters(
            f'cannot intersect level sets of (n, M, d) = {(a.n, a.M, a.d)} and {(b.n, b.M, b.d)}'
        )
    _, ia, _ = np.intersect1d(_row_view(a.coords), _row_view(b.coords), return_indices=True)
    coords = _canonical(a.coords[np.sort(ia)])
    return LevelSet(a.n, a.M, a.d, coords, f'{a.params_digest}&{b.params_digest}')


def full_level_set(M, d, n):
    """The deterministic full grid at level n."""
    coords = np.indices((M ** n,) * d, dtype=np.int64).reshape(d, -1).T
    return LevelSet(n, M, d, _canonical(coords), 'full')


def raster(level_set):
    """Bit grid indexed [row, column]; row 0 is the bottom row."""
    if level_set.d != 2:
        raise PreconditionError('rasters exist for d = 2 only')
    side = level_set.side
    grid = np.zeros((side, side), dtype=np.uint8)
    if len(level_set):
        grid[level_set.coords[:, 1], level_set.coords[:, 0]] = 1
    return grid
