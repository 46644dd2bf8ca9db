from pathlib import Path
from decouple import config

# BASE DIR
BASE_DIR = Path(__file__).resolve().parent.parent

# SECRET KEY, DEBUG
# No request handling happens in this project; the key only satisfies Django's checks.
SECRET_KEY = config('SECRET_KEY', default='percolab-local-only-key')
DEBUG = config('DEBUG', default=False, cast=bool)
ALLOWED_HOSTS = []

# DATABASE CONFIG
# Simulations keep no state between runs.
DATABASES = {}

# APPLICATION DEFINITION
INSTALLED_APPS = [
    'rest_framework',
    'percolation',
]

# INTERNATIONALIZATION
LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = False
USE_TZ = True

# SIMULATION LIMITS
PERCOLAB_CELL_CAP = config('PERCOLAB_CELL_CAP', default=50_000_000, cast=int)
PERCOLAB_MAX_ATTEMPTS = config('PERCOLAB_MAX_ATTEMPTS', default=1000, cast=int)

# TRANSFER OPERATOR DEFAULTS
PERCOLAB_GRID_N = config('PERCOLAB_GRID_N', default=4096, cast=int)
PERCOLAB_EPSILON_FLOOR = config('PERCOLAB_EPSILON_FLOOR', default=0.01, cast=float)
PERCOLAB_POSITIVITY_FLOOR = config('PERCOLAB_POSITIVITY_FLOOR', default=1e-6, cast=float)

# SCANS AND WORKERS
PERCOLAB_SCAN_MAX_DENOMINATOR = config('PERCOLAB_SCAN_MAX_DENOMINATOR', default=32, cast=int)
PERCOLAB_JOBS = config('PERCOLAB_JOBS', default=0, cast=int)  # 0 -> os.cpu_count()

# LOGGING
PERCOLAB_LOG_LEVEL = config('PERCOLAB_LOG_LEVEL', default='DEBUG' if DEBUG else 'INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'plain': {
            'format': '%(asctime)s %(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'plain',
        },
    },
    'loggers': {
        'percolation': {
            'handlers': ['console'],
            'level': PERCOLAB_LOG_LEVEL,
            'propagate': False,
        },
    },
}

# REST FRAMEWORK CONFIG
# Serializers only: configs and reports are validated, nothing is served.
REST_FRAMEWORK = {
    'COERCE_DECIMAL_TO_STRING': False,
    'UNAUTHENTICATED_USER': None,
}
