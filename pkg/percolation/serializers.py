import dataclasses
from fractions import Fraction

from rest_framework import serializers

from .core import PercolationParams, validate_params
from .exceptions import InvalidParameters
from .geometry import SIDES, Direction
from .presets import PRESETS, preset
from .randomness import MAX_SEED
from .transfer import FAILS, HOLDS, INCONCLUSIVE

STATS = (
    'dimension', 'extinction', 'branching_mean', 'martingale', 'intersection',
    'conservation', 'visibility', 'histogram',
)
DEFAULT_STATS = ('dimension', 'extinction', 'branching_mean', 'martingale')


def _parse_fraction(data):
    if isinstance(data, bool):
        raise ValueError(data)
    if isinstance(data, dict):
        num, den = data.get('num'), data.get('den')
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in (num, den)) or den <= 0:
            raise ValueError(data)
        return Fraction(num, den)
    if isinstance(data, int):
        return Fraction(data)
    if isinstance(data, str):
        return Fraction(data)
    raise ValueError(data)


class FractionField(serializers.Field):
    """An exact rational written as {"num": int, "den": int}."""
    default_error_messages = {'invalid': 'Expected {{"num": <int>, "den": <positive int>}}.'}

    def to_internal_value(self, data):
        try:
            return _parse_fraction(data)
        except (ValueError, ZeroDivisionError):
            self.fail('invalid')

    def to_representation(self, value):
        value = Fraction(value)
        return {'num': value.numerator, 'den': value.denominator}


class RealField(FractionField):
    """A rational as {"num", "den"} (or an integer), or a float."""
    default_error_messages = {'invalid': 'Expected {{"num": <int>, "den": <positive int>}} or a finite number.'}

    def to_internal_value(self, data):
        if isinstance(data, float):
            if data != data or data in (float('inf'), float('-inf')):
                self.fail('invalid')
            return data
        return super().to_internal_value(data)

    def to_representation(self, value):
        if isinstance(value, Fraction):
            return super().to_representation(value)
        return float(value)


# CONFIGURATION

class ParamsSerializer(serializers.Serializer):
    d = serializers.IntegerField(min_value=1, default=2)
    M = serializers.IntegerField(min_value=2)
    probs = serializers.JSONField()
    seed = serializers.IntegerField(min_value=0, max_value=MAX_SEED, default=0)

    def validate(self, attrs):
        try:
            return validate_params(attrs)
        except InvalidParameters as exc:
            raise serializers.ValidationError(str(exc)) from exc

    def to_representation(self, instance):
        return {
            'd': instance.d,
            'M': instance.M,
            'probs': instance.matrix() if instance.d == 2 else list(instance.probs),
            'seed': instance.seed,
        }


class PresetSerializer(serializers.Serializer):
    name = serializers.ChoiceField(choices=sorted(PRESETS))
    p = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.5)
    M = serializers.IntegerField(min_value=2, default=3)
    d = serializers.IntegerField(min_value=1, default=2)
    seed = serializers.IntegerField(min_value=0, max_value=MAX_SEED, default=0)

    def validate(self, attrs):
        options = {'p': attrs['p']}
        if attrs['name'] == 'homogeneous':
            options.update(M=attrs['M'], d=attrs['d'])
        try:
            return preset(attrs['name'], seed=attrs['seed'], **options)
        except InvalidParameters as exc:
            raise serializers.ValidationError(str(exc)) from exc


class DirectionSerializer(serializers.Serializer):
    """
    Input: one of `cot`, `tan` (exact rationals) or `alpha_rad`, or a normalised
    record `beta` + `transform`. Output: the normalised record.
    """
    cot = FractionField(write_only=True, required=False)
    tan = FractionField(write_only=True, required=False)
    beta = RealField(required=False)
    transform = serializers.ChoiceField(choices=['identity', 'mirror', 'swap', 'mirror_swap'], required=False)
    alpha_rad = serializers.FloatField(source='alpha', required=False)

    def validate(self, attrs):
        try:
            if 'beta' in attrs:
                return Direction(attrs['beta'], attrs.get('transform', 'identity'))
            given = [key for key in ('cot', 'tan', 'alpha') if key in attrs]
            if len(given) != 1:
                raise serializers.ValidationError('give exactly one of "cot", "tan" and "alpha_rad"')
            key = given[0]
            return {
                'cot': Direction.from_cot,
                'tan': Direction.from_tan,
                'alpha': Direction.from_alpha,
            }[key](attrs[key])
        except InvalidParameters as exc:
            raise serializers.ValidationError(str(exc)) from exc


@dataclasses.dataclass(frozen=True)
class RunConfig:
    params: PercolationParams
    depth: int = 4
    direction: Direction = None
    x: object = None
    grid_n: int = None
    replicates: int = 20
    n_lo: int = None
    n_hi: int = None
    x_samples: int = 50
    r_max: int = 5
    margin: float = 0.05
    epsilon_floor: float = None
    bins: int = 64
    p: float = None
    p_prime: float = 1.0
    directions: tuple = None
    max_denominator: int = None
    max_attempts: int = None
    conditioned: bool = False
    iterations: int = 0
    stats: tuple = DEFAULT_STATS
    level: int = 25
    side: str = 'bottom'

    def with_seed(self, seed):
        return dataclasses.replace(self, params=self.params.with_seed(seed))

    @property
    def window(self):
        n_hi = self.depth if self.n_hi is None else self.n_hi
        n_lo = max(1, n_hi // 2) if self.n_lo is None else self.n_lo
        return n_lo, n_hi


class RunConfigSerializer(serializers.Serializer):
    params = ParamsSerializer(required=False)
    preset = PresetSerializer(required=False)
    depth = serializers.IntegerField(min_value=0, required=False)
    direction = DirectionSerializer(required=False)
    x = RealField(required=False)
    grid_n = serializers.IntegerField(min_value=8, required=False)
    replicates = serializers.IntegerField(min_value=1, required=False)
    n_lo = serializers.IntegerField(min_value=0, required=False)
    n_hi = serializers.IntegerField(min_value=1, required=False)
    x_samples = serializers.IntegerField(min_value=1, required=False)
    r_max = serializers.IntegerField(min_value=1, required=False)
    margin = serializers.FloatField(min_value=0.0, required=False)
    epsilon_floor = serializers.FloatField(min_value=0.0, required=False)
    bins = serializers.IntegerField(min_value=1, required=False)
    p = serializers.FloatField(min_value=0.0, max_value=1.0, required=False)
    p_prime = serializers.FloatField(min_value=0.0, max_value=1.0, required=False)
    directions = DirectionSerializer(many=True, required=False)
    max_denominator = serializers.IntegerField(min_value=1, required=False)
    max_attempts = serializers.IntegerField(min_value=1, required=False)
    conditioned = serializers.BooleanField(required=False)
    iterations = serializers.IntegerField(min_value=0, required=False)
    stats = serializers.ListField(child=serializers.ChoiceField(choices=STATS), required=False)
    level = serializers.IntegerField(min_value=0, required=False)
    side = serializers.ChoiceField(choices=SIDES, required=False)

    def validate(self, attrs):
        params, named = attrs.pop('params', None), attrs.pop('preset', None)
        if (params is None) == (named is None):
            raise serializers.ValidationError('give exactly one of "params" and "preset"')
        attrs['params'] = params if params is not None else named
        for key in ('directions', 'stats'):
            if key in attrs:
                attrs[key] = tuple(attrs[key])
        n_lo, n_hi = attrs.get('n_lo'), attrs.get('n_hi')
        if n_lo is not None and n_hi is not None and n_lo >= n_hi:
            raise serializers.ValidationError({'n_lo': ['must be below n_hi']})
        return RunConfig(**attrs)


# REPORTS

class SampleReportSerializer(serializers.Serializer):
    level = serializers.IntegerField(min_value=0)
    cells = serializers.IntegerField(min_value=0)
    M = serializers.IntegerField(min_value=2)
    d = serializers.IntegerField(min_value=1)
    seed = serializers.IntegerField(min_value=0)
    params_digest = serializers.CharField()
    conditioned = serializers.BooleanField()
    attempts = serializers.IntegerField(min_value=1, allow_null=True)
    rejected = serializers.IntegerField(min_value=0, allow_null=True)


class ProjectionReportSerializer(serializers.Serializer):
    direction = DirectionSerializer()
    level = serializers.IntegerField(min_value=0)
    cells = serializers.IntegerField(min_value=0)
    intervals = serializers.ListField(child=serializers.ListField(child=RealField(), min_length=2, max_length=2))
    total_length = RealField()
    largest_length = RealField()
    largest_interval = serializers.ListField(child=RealField(), min_length=2, max_length=2, allow_null=True)


class SliceReportSerializer(serializers.Serializer):
    direction = DirectionSerializer()
    x = RealField()
    level = serializers.IntegerField(min_value=0)
    counts = serializers.ListField(child=serializers.IntegerField(min_value=0))


class SliceDimensionReportSerializer(serializers.Serializer):
    direction = DirectionSerializer()
    x = RealField()
    n_lo = serializers.IntegerField(min_value=1)
    n_hi = serializers.IntegerField(min_value=2)
    counts = serializers.DictField(child=serializers.IntegerField(min_value=1))
    slope = serializers.FloatField()
    stderr = serializers.FloatField()
    r_squared = serializers.FloatField()


class EigenReportSerializer(serializers.Serializer):
    direction = DirectionSerializer()
    grid_n = serializers.IntegerField(min_value=2)
    density = serializers.ChoiceField(choices=['closed_form', 'trapezoid', 'iterate'])
    eigenvalue = serializers.FloatField()
    residual = serializers.FloatField(min_value=0.0)
    iterations = serializers.IntegerField(min_value=0)
    differences = serializers.ListField(child=serializers.FloatField())
    digest = serializers.CharField()


class CertificateSerializer(serializers.Serializer):
    kind = serializers.ChoiceField(choices=['A', 'B'])
    direction = DirectionSerializer()
    verdict = serializers.ChoiceField(choices=[HOLDS, FAILS, INCONCLUSIVE])
    grid_n = serializers.IntegerField(min_value=2)
    margin = serializers.FloatField()
    r = serializers.IntegerField(min_value=1, allow_null=True)
    inner = serializers.ListField(child=serializers.FloatField(), allow_null=True)
    outer = serializers.ListField(child=serializers.FloatField(), allow_null=True)
    min_value = serializers.FloatField(allow_null=True)
    epsilon = serializers.FloatField(allow_null=True)
    candidate_digest = serializers.CharField(allow_null=True)
    detail = serializers.CharField(allow_blank=True)


class ConditionReportSerializer(serializers.Serializer):
    condition_a = CertificateSerializer()
    condition_b = CertificateSerializer(allow_null=True)
    b_detail = serializers.CharField(allow_blank=True)


class EpsilonEstimateSerializer(serializers.Serializer):
    median = serializers.FloatField()
    lower = serializers.FloatField()
    upper = serializers.FloatField()
    in_model = serializers.BooleanField()
    window = serializers.ListField(child=serializers.IntegerField(min_value=1))
    offsets = serializers.ListField(child=RealField())
    slopes = serializers.ListField(child=serializers.FloatField())
    epsilons = serializers.ListField(child=serializers.FloatField())
    counts = serializers.ListField(child=serializers.ListField(child=serializers.IntegerField(min_value=0)))
    empty_offsets = serializers.IntegerField(min_value=0)


class HitsCurveSerializer(serializers.Serializer):
    levels = serializers.ListField(child=serializers.IntegerField(min_value=0))
    counts = serializers.ListField(child=serializers.IntegerField(min_value=0))
    values = serializers.ListField(child=serializers.FloatField(min_value=0.0))
    eventually_decreasing = serializers.BooleanField()
    log_slope = serializers.FloatField(allow_null=True)


class ThresholdReportSerializer(serializers.Serializer):
    direction = DirectionSerializer()
    n = serializers.IntegerField(min_value=2)
    seed = serializers.IntegerField(min_value=0)
    estimate = EpsilonEstimateSerializer()
    p_alpha = serializers.FloatField(allow_null=True)
    curve = HitsCurveSerializer()


class DirectionResultSerializer(serializers.Serializer):
    direction = DirectionSerializer()
    seeds = serializers.ListField(child=serializers.IntegerField(min_value=0))
    lengths = serializers.ListField(child=serializers.FloatField(min_value=0.0))
    coarse_lengths = serializers.ListField(child=serializers.FloatField(min_value=0.0))
    containment = serializers.BooleanField()
    proper_columns = serializers.BooleanField()
    certificate_a = CertificateSerializer()
    certificate_b = CertificateSerializer(allow_null=True)
    b_detail = serializers.CharField(allow_blank=True)
    verdict = serializers.ChoiceField(choices=['interval-likely', 'exceptional-likely', 'undetermined'])
    evidence = serializers.CharField(allow_blank=True)


class DirectionScanSerializer(serializers.Serializer):
    n = serializers.IntegerField(min_value=1)
    seed = serializers.IntegerField(min_value=0)
    results = DirectionResultSerializer(many=True)


class StudyReportSerializer(serializers.Serializer):
    name = serializers.CharField()
    seeds = serializers.ListField(child=serializers.IntegerField(min_value=0))
    values = serializers.ListField(child=serializers.FloatField())
    mean = serializers.FloatField()
    stderr = serializers.FloatField(min_value=0.0)
    expected = serializers.FloatField(allow_null=True)
    z = serializers.FloatField(allow_null=True)
    extra = serializers.JSONField()


class ConservationReportSerializer(serializers.Serializer):
    expected_dimension = serializers.FloatField()
    seeds = serializers.ListField(child=serializers.IntegerField(min_value=0))
    slopes = serializers.ListField(child=serializers.FloatField())
    fractions = serializers.DictField(child=serializers.FloatField(min_value=0.0, max_value=1.0))
    window = serializers.ListField(child=serializers.IntegerField(min_value=1))


class HistogramReportSerializer(serializers.Serializer):
    direction = DirectionSerializer()
    edges = serializers.ListField(child=serializers.FloatField(), min_length=2)
    masses = serializers.ListField(child=serializers.FloatField(min_value=0.0))
    cells = serializers.IntegerField(min_value=0)
    seeds = serializers.ListField(child=serializers.IntegerField(min_value=0))
    closed_form_distance = serializers.FloatField(min_value=0.0, allow_null=True)

    def validate(self, attrs):
        if len(attrs['masses']) != len(attrs['edges']) - 1:
            raise serializers.ValidationError('one mass per bin expected')
        return attrs


class StatsReportSerializer(serializers.Serializer):
    dimension = StudyReportSerializer(required=False)
    extinction = StudyReportSerializer(required=False)
    branching_mean = StudyReportSerializer(required=False)
    martingale = StudyReportSerializer(required=False)
    intersection = StudyReportSerializer(required=False)
    visibility = StudyReportSerializer(required=False)
    conservation = ConservationReportSerializer(required=False)
    histogram = HistogramReportSerializer(required=False)


class ExtinctionReportSerializer(serializers.Serializer):
    params = ParamsSerializer()
    q = serializers.FloatField(min_value=0.0, max_value=1.0)
    mean_offspring = serializers.FloatField(min_value=0.0)
    offspring_variance = serializers.FloatField(min_value=0.0)
    supercritical = serializers.BooleanField()
    dim_gt_1 = serializers.BooleanField()
    expected_dimension = serializers.FloatField(allow_null=True)
