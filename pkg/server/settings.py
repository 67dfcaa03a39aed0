"""
Django settings for the eigenprep project.
"""

import environ
import dj_database_url
import os
from pathlib import Path

BASE_DIR = Path(__file__).resolve().parent.parent

# Initialize Environment Variables
env = environ.Env()
env_file = os.path.join(BASE_DIR, '.env')
if os.path.exists(env_file):
    environ.Env.read_env(env_file)

# ==========================================
# 1. SECURITY SETTINGS
# ==========================================

# Only the ORM and management commands are used; nothing is served.
SECRET_KEY = env('SECRET_KEY', default='eigenprep-local-runs')
DEBUG = env.bool('DEBUG', default=False)

ALLOWED_HOSTS = []


# ==========================================
# 2. APPLICATION DEFINITION
# ==========================================

INSTALLED_APPS = [
    'django.contrib.contenttypes',

    # Third Party
    'rest_framework',

    # My Apps
    'eigenprep',
]


# ==========================================
# 3. DATABASE (run manifests)
# ==========================================

DATABASES = {
    'default': dj_database_url.config(
        default=env('DATABASE_URI', default=f"sqlite:///{BASE_DIR / 'eigenprep.sqlite3'}"),
        conn_max_age=600,
    )
}

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# ==========================================
# 4. INTERNATIONALIZATION
# ==========================================

LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = False
USE_TZ = True


# ==========================================
# 5. LOGGING
# ==========================================

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'plain': {'format': '%(name)s: %(message)s'},
    },
    'handlers': {
        'console': {
            'class': 'rich.logging.RichHandler',
            'formatter': 'plain',
            'show_path': False,
            'rich_tracebacks': True,
        },
    },
    'loggers': {
        'eigenprep': {
            'handlers': ['console'],
            'level': env('EIGENPREP_LOG_LEVEL', default='INFO'),
            'propagate': False,
        },
    },
}


# ==========================================
# 6. EXPERIMENTS
# ==========================================

# Runs without --out write to <EIGENPREP_OUTPUT_DIR>/<kind>-<run id>.
EIGENPREP_OUTPUT_DIR = env('EIGENPREP_OUTPUT_DIR', default=str(BASE_DIR / 'runs'))
EIGENPREP_THREADS = env.int('EIGENPREP_THREADS', default=1)

# Overrides for eigenprep.conf.NumericConfig, e.g. {'unitary_tol': 1e-10}
EIGENPREP_NUMERICS = {}
