"""Functions on the projection interval [-beta, 1], sampled on a uniform grid."""
import hashlib
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .exceptions import InvalidParameters


@dataclass(frozen=True, eq=False)
class GridFunction:
    lo: float
    hi: float
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or len(values) < 2:
            raise InvalidParameters('a grid function needs at least two samples')
        if not self.lo < self.hi:
            raise InvalidParameters(f'empty domain [{self.lo}, {self.hi}]')
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    @classmethod
    def from_callable(cls, func, beta, N):
        xs = np.linspace(-float(beta), 1.0, int(N))
        return cls(-float(beta), 1.0, np.asarray(func(xs), dtype=np.float64))

    @classmethod
    def zeros_like(cls, other):
        return cls(other.lo, other.hi, np.zeros_like(other.values))

    @property
    def N(self):
        return len(self.values)

    @property
    def beta(self):
        return -self.lo

    @property
    def step(self):
        return (self.hi - self.lo) / (self.N - 1)

    @property
    def xs(self):
        return np.linspace(self.lo, self.hi, self.N)

    def __call__(self, t):
        """Piecewise-linear interpolation, zero outside the domain."""
        return np.interp(t, self.xs, self.values, left=0.0, right=0.0)

    def same_grid(self, other):
        return self.N == other.N and np.isclose(self.lo, other.lo) and np.isclose(self.hi, other.hi)

    def _check(self, other):
        if not self.same_grid(other):
            raise InvalidParameters('grid functions live on different grids')

    def with_values(self, values):
        return GridFunction(self.lo, self.hi, values)

    def __add__(self, other):
        self._check(other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return self.with_values(self.values - other.values)

    def scaled(self, factor):
        return self.with_values(self.values * factor)

    def integral(self):
        return float(trapezoid(self.values, dx=self.step))

    def normalized(self):
        total = self.integral()
        if total <= 0:
            raise InvalidParameters('cannot normalise a function with non-positive integral')
        return self.scaled(1.0 / total)

    def sup_distance(self, other):
        self._check(other)
        return float(np.max(np.abs(self.values - other.values)))

    def max_slope(self):
        return float(np.max(np.abs(np.diff(self.values))) / self.step)

    @property
    def digest(self):
        payload = np.array([self.lo, self.hi], dtype=np.float64).tobytes() + self.values.tobytes()
        return hashlib.sha256(payload).hexdigest()[:16]
