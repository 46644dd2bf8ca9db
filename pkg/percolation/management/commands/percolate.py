import json
import logging
from fractions import Fraction
from pathlib import Path

import numpy as np
from django.core.management.base import BaseCommand, CommandError

from percolation import serializers as s
from percolation.carpets import exceptional_scan, farey_directions, threshold_report
from percolation.core import (
    branching_stats,
    expected_dimension,
    raster,
    sample_conditioned,
    sample_level_set,
)
from percolation.estimators import (
    branching_mean_study,
    closed_form_bin_masses,
    dimension_conservation_check,
    dimension_study,
    extinction_study,
    histogram_study,
    intersection_moment_test,
    martingale_study,
    visibility_study,
)
from percolation.exceptions import (
    CandidateInvalid,
    InvalidParameters,
    NumericalBlowUp,
    PercolationError,
    PreconditionError,
)
from percolation.formats import dumps_json, write_csv, write_pgm
from percolation.geometry import (
    SliceQuery,
    largest_interior_interval,
    pattern_slice_counts,
    project_level_set,
    slice_box_dimension,
)
from percolation.presets import Pattern
from percolation.randomness import MAX_SEED
from percolation.transfer import (
    candidate_function,
    candidate_kind,
    check_condition_A,
    check_condition_B,
    eigen_residual,
    eigenvalue,
    is_cantor_carpet,
    normalized_iterate,
    tent_function,
)

logger = logging.getLogger(__name__)

SUBCOMMANDS = (
    'sample', 'project', 'slice', 'slice-dim', 'eigen', 'condition',
    'threshold', 'scan', 'stats', 'extinction',
)


class Command(BaseCommand):
    help = 'Simulate fractal percolation and analyse projections, slices and transfer operators.'

    def add_arguments(self, parser):
        parser.add_argument('subcommand', choices=SUBCOMMANDS)
        parser.add_argument('--config', required=True, help='RunConfig JSON file')
        parser.add_argument('--out', default='.', help='output directory (default: current directory)')
        parser.add_argument('--jobs', type=int, default=None,
                            help='worker processes (default PERCOLAB_JOBS; 0 means one per processor)')
        parser.add_argument('--seed', type=int, default=None, help='overrides the config seed')

    def handle(self, *args, **options):
        subcommand = options['subcommand']
        config = self.load_config(options['config'], options['seed'])
        out = Path(options['out'])
        out.mkdir(parents=True, exist_ok=True)
        self.jobs = options['jobs']
        logger.info('%s: start (params %s)', subcommand, config.params.digest)
        try:
            written = getattr(self, 'run_' + subcommand.replace('-', '_'))(config, out)
        except PercolationError as exc:
            logger.warning('%s failed: %s', subcommand, exc)
            raise CommandError(str(exc), returncode=exc.exit_code) from exc
        for path in written:
            self.stdout.write(self.style.SUCCESS(f'Wrote {path}'))
        logger.info('%s: done, %d files in %s', subcommand, len(written), out)

    def load_config(self, path, seed=None):
        try:
            raw = json.loads(Path(path).read_text(encoding='utf-8'))
        except (OSError, ValueError) as exc:
            raise CommandError(f'cannot read config {path}: {exc}', returncode=2) from exc
        serializer = s.RunConfigSerializer(data=raw)
        if not serializer.is_valid():
            raise CommandError(f'invalid config: {json.dumps(serializer.errors, sort_keys=True)}', returncode=2)
        config = serializer.validated_data
        if seed is not None:
            if not 0 <= seed <= MAX_SEED:
                raise CommandError(f'seed must be an unsigned 64-bit integer, got {seed}', returncode=2)
            config = config.with_seed(seed)
        return config

    def emit_json(self, path, serializer_class, payload):
        """Write a report and check that it parses back through the same serializer."""
        data = serializer_class(payload).data
        text = dumps_json(data)
        path.write_text(text, encoding='utf-8')
        check = serializer_class(data=json.loads(text))
        if not check.is_valid():
            raise CommandError(f'{path.name} does not re-validate: {check.errors}')
        return path

    # helpers

    def level_set(self, config, n=None):
        n = config.depth if n is None else n
        if config.conditioned:
            sample = sample_conditioned(config.params, n, max_attempts=config.max_attempts)
            return sample.level_set, sample
        return sample_level_set(config.params, n), None

    def require_direction(self, config):
        if config.direction is None:
            raise InvalidParameters('this subcommand needs a "direction"')
        return config.direction

    def exact_query(self, config):
        direction = self.require_direction(config)
        x = Fraction(0) if config.x is None else config.x
        if not direction.exact or not isinstance(x, Fraction):
            raise PreconditionError('exact rational cot required')
        return SliceQuery(direction, x)

    # subcommands

    def run_sample(self, config, out):
        level_set, sample = self.level_set(config)
        pgm = write_pgm(out / 'raster.pgm', raster(level_set))
        report = {
            'level': level_set.n,
            'cells': len(level_set),
            'M': level_set.M,
            'd': level_set.d,
            'seed': sample.seed if sample else config.params.seed,
            'params_digest': level_set.params_digest,
            'conditioned': config.conditioned,
            'attempts': sample.attempts if sample else None,
            'rejected': sample.rejected if sample else None,
        }
        return [pgm, self.emit_json(out / 'sample.json', s.SampleReportSerializer, report)]

    def run_project(self, config, out):
        direction = self.require_direction(config)
        level_set, _ = self.level_set(config)
        union = project_level_set(level_set, direction)
        length, interval = largest_interior_interval(union)
        report = {
            'direction': direction,
            'level': level_set.n,
            'cells': len(level_set),
            'intervals': [list(pair) for pair in union.intervals],
            'total_length': union.total_length(),
            'largest_length': length,
            'largest_interval': list(interval) if interval else None,
        }
        return [self.emit_json(out / 'projection.json', s.ProjectionReportSerializer, report)]

    def run_slice(self, config, out):
        query = self.exact_query(config)
        counts = pattern_slice_counts(Pattern.from_params(config.params), query, config.depth)
        csv_path = write_csv(out / 'slice_counts.csv', ['level', 'count'], enumerate(counts))
        report = {'direction': query.direction, 'x': query.x, 'level': config.depth, 'counts': counts}
        return [csv_path, self.emit_json(out / 'slice.json', s.SliceReportSerializer, report)]

    def run_slice_dim(self, config, out):
        query = self.exact_query(config)
        n_lo, n_hi = config.window
        result = slice_box_dimension(Pattern.from_params(config.params), query.direction, query.x, n_lo, n_hi)
        report = {
            'direction': query.direction,
            'x': query.x,
            'n_lo': n_lo,
            'n_hi': n_hi,
            'counts': result.counts,
            'slope': result.fit.slope,
            'stderr': result.fit.stderr,
            'r_squared': result.fit.r_squared,
        }
        return [self.emit_json(out / 'slice_dimension.json', s.SliceDimensionReportSerializer, report)]

    def run_eigen(self, config, out):
        direction = self.require_direction(config)
        params = config.params
        differences = ()
        if config.iterations:
            iterate = normalized_iterate(params, direction, tent_function(direction, config.grid_n),
                                         config.iterations)
            f, differences, kind = iterate.function, iterate.differences, 'iterate'
        else:
            f, kind = candidate_function(params, direction, config.grid_n), candidate_kind(params, direction)
        csv_path = write_csv(out / 'density.csv', ['x', 'value'], zip(f.xs.tolist(), f.values.tolist()))
        report = {
            'direction': direction,
            'grid_n': f.N,
            'density': kind,
            'eigenvalue': eigenvalue(params),
            'residual': eigen_residual(params, direction, f),
            'iterations': config.iterations,
            'differences': list(differences),
            'digest': f.digest,
        }
        return [csv_path, self.emit_json(out / 'eigen.json', s.EigenReportSerializer, report)]

    def run_condition(self, config, out):
        direction = self.require_direction(config)
        params = config.params
        certificate_a = check_condition_A(params, direction, r_max=config.r_max, margin=config.margin,
                                          N=config.grid_n)
        certificate_b, detail = None, ''
        try:
            candidate = candidate_function(params, direction, config.grid_n)
            certificate_b = check_condition_B(params, direction, candidate, epsilon_floor=config.epsilon_floor)
        except (CandidateInvalid, NumericalBlowUp) as exc:
            detail = str(exc)
        report = {'condition_a': certificate_a, 'condition_b': certificate_b, 'b_detail': detail}
        return [self.emit_json(out / 'condition.json', s.ConditionReportSerializer, report)]

    def run_threshold(self, config, out):
        direction = self.require_direction(config)
        if not direction.exact or (config.x is not None and not isinstance(config.x, Fraction)):
            raise PreconditionError('exact rational cot required')
        if config.depth < 2:
            raise InvalidParameters('threshold needs depth >= 2')
        report = threshold_report(
            Pattern.from_params(config.params), direction, config.x_samples, config.depth,
            seed=config.params.seed, p=config.p, x=config.x,
        )
        curve = report.curve
        csv_path = write_csv(out / 'hits_curve.csv', ['level', 'count', 'value'],
                             zip(curve.levels, curve.counts, curve.values))
        return [csv_path, self.emit_json(out / 'threshold.json', s.ThresholdReportSerializer, report)]

    def run_scan(self, config, out):
        directions = config.directions or farey_directions(config.max_denominator)
        scan = exceptional_scan(
            config.params, directions, config.depth, config.replicates, seed=config.params.seed,
            r_max=config.r_max, margin=config.margin, grid_n=config.grid_n, jobs=self.jobs,
        )
        return [self.emit_json(out / 'scan.json', s.DirectionScanSerializer, scan)]

    def run_stats(self, config, out):
        params, seed, jobs = config.params, config.params.seed, self.jobs
        n_lo, n_hi = config.window
        sections = {}
        for name in config.stats:
            logger.info('stats: %s', name)
            if name == 'dimension':
                sections[name] = dimension_study(params, n_lo, n_hi, config.replicates, seed, jobs)
            elif name == 'extinction':
                sections[name] = extinction_study(params, config.level, config.replicates, seed, jobs)
            elif name == 'branching_mean':
                sections[name] = branching_mean_study(params, config.depth, config.replicates, seed, jobs)
            elif name == 'martingale':
                sections[name] = martingale_study(params, config.depth, config.replicates, seed, jobs)
            elif name == 'visibility':
                sections[name] = visibility_study(params, n_lo, n_hi, config.replicates, seed,
                                                  side=config.side, jobs=jobs)
            elif name == 'intersection':
                if not params.homogeneous:
                    raise PreconditionError('the intersection test uses a homogeneous table')
                p = params.probs[0] if config.p is None else config.p
                sections[name] = intersection_moment_test(p, config.p_prime, params.M, config.depth,
                                                          config.replicates, seed, d=params.d, jobs=jobs)
            elif name == 'conservation':
                sections[name] = dimension_conservation_check(
                    params, self.require_direction(config), config.depth, config.x_samples,
                    config.replicates, seed, jobs,
                )
            elif name == 'histogram':
                sections[name] = self.histogram_section(config)
        return [self.emit_json(out / 'stats.json', s.StatsReportSerializer, sections)]

    def run_extinction(self, config, out):
        params = config.params
        stats = branching_stats(params)
        report = {
            'params': params,
            'q': stats.extinction_prob,
            'mean_offspring': stats.mean_offspring,
            'offspring_variance': stats.offspring_variance,
            'supercritical': params.supercritical,
            'dim_gt_1': params.dim_gt_1,
            'expected_dimension': expected_dimension(params),
        }
        return [self.emit_json(out / 'extinction.json', s.ExtinctionReportSerializer, report)]

    def histogram_section(self, config):
        direction, params = self.require_direction(config), config.params
        histogram = histogram_study(params, direction, config.depth, config.bins, config.replicates,
                                    config.params.seed, self.jobs)
        distance = None
        if is_cantor_carpet(params, direction):
            reference = closed_form_bin_masses(direction, histogram.edges)
            distance = float(np.max(np.abs(histogram.masses - reference) / histogram.widths))
        return {
            'direction': direction,
            'edges': histogram.edges.tolist(),
            'masses': histogram.masses.tolist(),
            'cells': histogram.cells,
            'seeds': list(histogram.seeds),
            'closed_form_distance': distance,
        }
