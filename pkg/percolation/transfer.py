"""
The transfer operator F g(x) = sum_i p_i g(psi_i(x)) on functions over [-beta, 1].

psi_i maps the projection of the level-n cell with frame corner (a, b) onto
[-beta, 1]: psi(t) = M^n t - a + b beta. Functions are GridFunction samples
with linear interpolation, zero outside the domain.
"""
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import conf
from .exceptions import CandidateInvalid, InvalidParameters, NumericalBlowUp, PreconditionError
from .grid import GridFunction
from .presets import Pattern, cantor_pattern

logger = logging.getLogger(__name__)

BLOW_UP = 1e6
# positivity is not required within this many cells of the endpoints
COLLAR = 2
CANDIDATE_ITERATIONS = 30

I1_HALF_WIDTHS = (0.45, 0.40, 0.30, 0.20, 0.10, 0.05)
I2_HALF_WIDTHS = (0.49, 0.48, 0.47, 0.46, 0.45, 0.40, 0.30, 0.20, 0.10)

HOLDS = 'holds'
FAILS = 'fails'
INCONCLUSIVE = 'inconclusive'


def cantor_function(x):
    """
    The middle-thirds Cantor function, from the exact ternary digits of x.

    Floats are expanded exactly (as the binary rational they are); the result
    carries up to 64 binary digits.
    """
    x = Fraction(x)
    if not 0 <= x <= 1:
        raise InvalidParameters(f'the Cantor function is defined on [0, 1], got {x}')
    if x == 1:
        return 1.0
    p, q = x.numerator, x.denominator
    value, weight = Fraction(0), Fraction(1, 2)
    for _ in range(64):
        digit, p = divmod(3 * p, q)
        if digit == 1:
            return float(value + weight)
        if digit == 2:
            value += weight
        weight /= 2
        if not p:
            break
    return float(value)


def cantor_values(xs):
    return np.array([cantor_function(min(max(float(x), 0.0), 1.0)) for x in np.asarray(xs).ravel()])


@dataclass(frozen=True)
class AffineMap:
    """t -> slope * t + shift, restricted to `support`."""
    slope: int
    shift: object
    support: tuple

    def __call__(self, t):
        return self.slope * t + self.shift

    def then(self, other):
        """The map `other` applied after this one."""
        o_lo, o_hi = other.support
        return AffineMap(
            self.slope * other.slope,
            other.slope * self.shift + other.shift,
            ((o_lo - self.shift) / self.slope, (o_hi - self.shift) / self.slope),
        )


def psi_map(direction, corner, n, M):
    """psi for the level-n cell with original corner `corner`."""
    side = M ** n
    if not all(0 <= int(c) < side for c in corner):
        raise InvalidParameters(f'corner {tuple(corner)} lies outside the level-{n} grid')
    a, b = direction.orient_corners(np.array([corner], dtype=np.int64), side)
    a, b = int(a[0]), int(b[0])
    beta = direction.beta
    return AffineMap(side, b * beta - a, ((a - (b + 1) * beta) / side, (a + 1 - b * beta) / side))


def _check_domain(g, direction):
    if not (math.isclose(g.lo, -direction.beta_float, abs_tol=1e-12) and math.isclose(g.hi, 1.0)):
        raise InvalidParameters(
            f'function lives on [{g.lo}, {g.hi}], expected [-{direction.beta_float}, 1]'
        )


def apply_F(params, direction, g):
    _check_domain(g, direction)
    beta = direction.beta_float
    xs = g.xs
    out = np.zeros_like(xs)
    for p, (i, j) in direction.orient_table(params):
        if p:
            out += p * g(params.M * xs - i + j * beta)
    return g.with_values(out)


def eigenvalue(params):
    total = params.total
    if total == 0:
        raise PreconditionError('the eigenvalue sum(p)/M vanishes for an all-zero table')
    return total / params.M


@dataclass(frozen=True)
class Iterate:
    function: GridFunction
    differences: tuple = field(default=())


def normalized_iterate(params, direction, g0, n):
    """f_k = (M / sum p) F f_{k-1}, with the sup-norm distances between consecutive iterates."""
    factor = 1.0 / eigenvalue(params)
    f = g0
    differences = []
    for k in range(n):
        nxt = apply_F(params, direction, f).scaled(factor)
        peak = float(np.max(np.abs(nxt.values)))
        if not math.isfinite(peak) or peak > BLOW_UP:
            raise NumericalBlowUp(f'iterate {k + 1} reached {peak:.3g}')
        differences.append(nxt.sup_distance(f))
        f = nxt
    return Iterate(f, tuple(differences))


def _grid_n(N):
    return conf.grid_n() if N is None else int(N)


def closed_form_density_cantor_carpet(direction, N=None):
    beta = direction.beta_float
    if not 0 < beta < 1:
        raise InvalidParameters(f'the closed form needs beta in (0, 1), got {beta}')

    def density(xs):
        values = np.ones_like(xs)
        rise = xs < 0
        fall = xs >= 1 - beta
        values[rise] = cantor_values((xs[rise] + beta) / beta)
        values[fall] = cantor_values((1 - xs[fall]) / beta)
        return values

    return GridFunction.from_callable(density, beta, _grid_n(N))


def trapezoid_density(direction, N=None):
    """Projected Lebesgue density of the unit square: rise, plateau 1, fall."""
    beta = direction.beta_float
    if beta == 0:
        return GridFunction.from_callable(np.ones_like, 0.0, _grid_n(N))
    return GridFunction.from_callable(
        lambda xs: np.clip(np.minimum((xs + beta) / beta, (1 - xs) / beta), 0.0, 1.0),
        beta, _grid_n(N),
    )


def tent_function(direction, N=None):
    """Unit-mass tent peaking at the midpoint of [-beta, 1]."""
    beta = direction.beta_float
    mid, half = (1 - beta) / 2, (1 + beta) / 2
    return GridFunction.from_callable(
        lambda xs: np.clip(1 - np.abs(xs - mid) / half, 0.0, None) / half, beta, _grid_n(N),
    )


def indicator(direction, interval, N=None):
    lo, hi = (float(v) for v in interval)
    return GridFunction.from_callable(
        lambda xs: ((xs >= lo) & (xs <= hi)).astype(np.float64), direction.beta_float, _grid_n(N),
    )


def eigen_residual(params, direction, f):
    image = apply_F(params, direction, f).scaled(1.0 / eigenvalue(params))
    return image.sup_distance(f)


def integral_gap(params, direction, g):
    return abs(apply_F(params, direction, g).integral() - params.total / params.M * g.integral())


def iterate_by_words(params, direction, g, n):
    """sum over level-n words of p_word * g(psi_word(x)), without intermediate resampling."""
    _check_domain(g, direction)
    table = [(p, i, j) for p, (i, j) in direction.orient_table(params) if p]
    weights = np.ones(1)
    a = np.zeros(1)
    b = np.zeros(1)
    for _ in range(n):
        weights = np.concatenate([weights * p for p, _, _ in table])
        a = np.concatenate([a * params.M + i for _, i, _ in table])
        b = np.concatenate([b * params.M + j for _, _, j in table])
    beta = direction.beta_float
    scale = float(params.M ** n)
    xs = g.xs
    out = np.zeros_like(xs)
    for w, ai, bi in zip(weights, a, b):
        out += w * g(scale * xs - ai + bi * beta)
    return g.with_values(out)


def is_cantor_carpet(params, direction):
    if params.d != 2 or params.M != 3:
        return False
    try:
        pattern = Pattern.from_params(params)
    except InvalidParameters:
        return False
    return direction.orient_pattern(pattern).symbols == cantor_pattern().symbols


def candidate_kind(params, direction):
    beta = direction.beta_float
    if params.homogeneous and params.probs[0] > 0 and beta > 0:
        return 'trapezoid'
    if 0 < beta < 1 and is_cantor_carpet(params, direction):
        return 'closed_form'
    return 'iterate'


def candidate_function(params, direction, N=None):
    """
    A Condition-B candidate: the trapezoid for full homogeneous tables, the
    closed form for the Cantor-like carpet, otherwise the normalised iterate of
    the tent function.
    """
    kind = candidate_kind(params, direction)
    if kind == 'trapezoid':
        return trapezoid_density(direction, N)
    if kind == 'closed_form':
        return closed_form_density_cantor_carpet(direction, N)
    return normalized_iterate(params, direction, tent_function(direction, N), CANDIDATE_ITERATIONS).function


@dataclass(frozen=True)
class ConditionCertificate:
    kind: str
    direction: object
    verdict: str
    grid_n: int
    margin: float
    r: int = None
    inner: tuple = None
    outer: tuple = None
    min_value: float = None
    epsilon: float = None
    candidate_digest: str = None
    detail: str = ''

    @property
    def holds(self):
        return self.verdict == HOLDS


def condition_A_ladder(beta):
    mid, length = (1 - beta) / 2, 1 + beta
    for hw1 in I1_HALF_WIDTHS:
        for hw2 in I2_HALF_WIDTHS:
            if hw2 > hw1:
                yield hw1, (mid - hw1 * length, mid + hw1 * length), (mid - hw2 * length, mid + hw2 * length)


def check_condition_A(params, direction, r_max=5, margin=0.05, N=None):
    """
    Search I1 inside int I2 and r <= r_max with F^r 1_{I1} >= 1 + margin on I2.

    The search runs over a fixed ladder of centred intervals, so failing to
    find a pair is reported as inconclusive, never as fails.
    """
    if r_max < 1:
        raise InvalidParameters(f'r_max must be positive, got {r_max}')
    N = _grid_n(N)
    beta = direction.beta_float
    iterates = {}
    for hw1 in I1_HALF_WIDTHS:
        g = indicator(direction, ((1 - beta) / 2 - hw1 * (1 + beta), (1 - beta) / 2 + hw1 * (1 + beta)), N)
        powers = []
        for _ in range(r_max):
            g = apply_F(params, direction, g)
            powers.append(g.values)
        iterates[hw1] = powers

    xs = np.linspace(-beta, 1.0, N)
    best = 0.0
    for r in range(1, r_max + 1):
        for hw1, inner, outer in condition_A_ladder(beta):
            values = iterates[hw1][r - 1]
            on_outer = (xs >= outer[0]) & (xs <= outer[1])
            low = float(np.min(values[on_outer])) if on_outer.any() else 0.0
            best = max(best, low)
            if low >= 1 + margin:
                logger.info('condition A holds at beta=%.6g with r=%d', beta, r)
                return ConditionCertificate(
                    'A', direction, HOLDS, N, margin, r=r, inner=inner, outer=outer, min_value=low,
                )
    detail = 'zero iterate mass' if best == 0 else f'best minimum {best:.6g} below {1 + margin:.6g}'
    logger.info('condition A inconclusive at beta=%.6g: %s', beta, detail)
    return ConditionCertificate('A', direction, INCONCLUSIVE, N, margin, r=r_max, min_value=best, detail=detail)


def _validate_candidate(g, positivity_floor):
    values = g.values
    if np.any(values < -1e-12):
        raise CandidateInvalid('candidate takes negative values')
    if abs(values[0]) > 1e-12 or abs(values[-1]) > 1e-12:
        raise CandidateInvalid('candidate does not vanish at the endpoints')
    core = values[COLLAR + 1:len(values) - COLLAR - 1]
    if len(core) and float(np.min(core)) < positivity_floor:
        raise CandidateInvalid(
            f'candidate drops to {float(np.min(core)):.3g} inside the interval (floor {positivity_floor:.3g})'
        )


def check_condition_B(params, direction, g, epsilon_floor=None, positivity_floor=None):
    """F g >= (1 + epsilon_floor) g at every interior grid point where g > 0."""
    epsilon_floor = conf.epsilon_floor() if epsilon_floor is None else float(epsilon_floor)
    positivity_floor = conf.positivity_floor() if positivity_floor is None else float(positivity_floor)
    try:
        _check_domain(g, direction)
    except InvalidParameters as exc:
        raise CandidateInvalid(str(exc)) from exc
    _validate_candidate(g, positivity_floor)

    image = apply_F(params, direction, g).values[1:-1]
    base = g.values[1:-1]
    positive = base > 0
    ratios = image[positive] / base[positive]
    if not len(ratios):
        raise CandidateInvalid('candidate has no interior support')
    epsilon = float(np.min(ratios)) - 1.0
    verdict = HOLDS if epsilon >= epsilon_floor else FAILS
    logger.info('condition B %s at beta=%.6g (epsilon=%.4g)', verdict, direction.beta_float, epsilon)
    return ConditionCertificate(
        'B', direction, verdict, g.N, epsilon_floor, epsilon=epsilon, candidate_digest=g.digest,
        min_value=float(np.min(base[COLLAR:len(base) - COLLAR])) if len(base) > 2 * COLLAR else None,
    )
