"""
Named probability tables and carpet patterns.

The Cantor-like carpet removes the middle row (letters (i, 1)): with the
projection x - y*cot(alpha) this is the orientation whose density on
[-cot(alpha), 1] is the Cantor rise / plateau / Cantor fall profile, and whose
projection along horizontal lines (alpha = 0) is the middle-thirds Cantor set.
"""
from dataclasses import dataclass

from .core import PercolationParams, letter_index, sample_level_set, validate_params
from .exceptions import InvalidParameters


@dataclass(frozen=True)
class Pattern:
    """A planar carpet: retained symbols I+ with one common probability p."""
    M: int
    symbols: frozenset
    p: float = 1.0

    def __post_init__(self):
        if not self.symbols:
            raise InvalidParameters('a pattern needs at least one retained symbol')
        for i, j in self.symbols:
            if not (0 <= i < self.M and 0 <= j < self.M):
                raise InvalidParameters(f'symbol {(i, j)} is outside the {self.M} x {self.M} grid')
        if not 0.0 < self.p <= 1.0:
            raise InvalidParameters(f'pattern probability must lie in (0, 1], got {self.p}')

    @property
    def size(self):
        return len(self.symbols)

    def ordered_symbols(self):
        return sorted(self.symbols, key=lambda s: letter_index(s, self.M))

    def params(self, seed=0):
        probs = [0.0] * (self.M ** 2)
        for symbol in self.symbols:
            probs[letter_index(symbol, self.M)] = self.p
        return PercolationParams(d=2, M=self.M, probs=tuple(probs), seed=int(seed))

    def deterministic(self):
        return Pattern(self.M, self.symbols, 1.0)

    def level_set(self, n):
        """The deterministic carpet approximation: every word over I+ of length n."""
        return sample_level_set(self.deterministic().params(), n)

    def contains(self, other):
        return self.M == other.M and other.symbols <= self.symbols

    @classmethod
    def from_params(cls, params):
        if params.d != 2:
            raise InvalidParameters('patterns are planar (d = 2)')
        positive = {p for p in params.probs if p > 0}
        if len(positive) != 1:
            raise InvalidParameters('a pattern table takes values in {0, p} for a single p > 0')
        letters = params.letters()
        symbols = frozenset(
            (int(i), int(j)) for (i, j), p in zip(letters.tolist(), params.probs) if p > 0
        )
        return cls(params.M, symbols, positive.pop())


def full_pattern(M=3, p=1.0):
    return Pattern(M, frozenset((i, j) for i in range(M) for j in range(M)), p)


def sierpinski_pattern(p=1.0):
    return Pattern(3, frozenset((i, j) for i in range(3) for j in range(3) if (i, j) != (1, 1)), p)


def cantor_pattern(p=1.0):
    return Pattern(3, frozenset((i, j) for i in range(3) for j in range(3) if j != 1), p)


def homogeneous(M=3, p=0.5, d=2, seed=0):
    return validate_params({'d': d, 'M': M, 'probs': [p] * (M ** d), 'seed': seed})


def sierpinski_carpet(p, seed=0):
    return sierpinski_pattern(p).params(seed)


def cantor_carpet(p, seed=0):
    return cantor_pattern(p).params(seed)


PRESETS = {
    'homogeneous': homogeneous,
    'sierpinski': sierpinski_carpet,
    'cantor': cantor_carpet,
}


def preset(name, seed=0, **options):
    try:
        factory = PRESETS[name]
    except KeyError:
        raise InvalidParameters(f'unknown preset {name!r}; choose one of {sorted(PRESETS)}') from None
    return factory(seed=seed, **options)
