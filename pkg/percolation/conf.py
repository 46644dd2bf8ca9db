"""
Access to the PERCOLAB_* settings.

The computational modules also run inside worker processes and plain library
imports, where Django settings may not be configured; every accessor then
falls back to the project default.
"""
import os

from django.conf import settings
from django.core.exceptions import ImproperlyConfigured

DEFAULTS = {
    'PERCOLAB_CELL_CAP': 50_000_000,
    'PERCOLAB_MAX_ATTEMPTS': 1000,
    'PERCOLAB_GRID_N': 4096,
    'PERCOLAB_EPSILON_FLOOR': 0.01,
    'PERCOLAB_POSITIVITY_FLOOR': 1e-6,
    'PERCOLAB_SCAN_MAX_DENOMINATOR': 32,
    'PERCOLAB_JOBS': 0,
}


def get(name):
    try:
        return getattr(settings, name, DEFAULTS[name])
    except ImproperlyConfigured:
        return DEFAULTS[name]


def cell_cap():
    return int(get('PERCOLAB_CELL_CAP'))


def max_attempts():
    return int(get('PERCOLAB_MAX_ATTEMPTS'))


def grid_n():
    return int(get('PERCOLAB_GRID_N'))


def epsilon_floor():
    return float(get('PERCOLAB_EPSILON_FLOOR'))


def positivity_floor():
    return float(get('PERCOLAB_POSITIVITY_FLOOR'))


def scan_max_denominator():
    return int(get('PERCOLAB_SCAN_MAX_DENOMINATOR'))


def jobs():
    """Worker count; 0 in the settings means one per processor."""
    value = int(get('PERCOLAB_JOBS'))
    return value if value > 0 else (os.cpu_count() or 1)
