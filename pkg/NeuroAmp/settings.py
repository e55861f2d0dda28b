"""
Django settings for the NeuroAmp project.

The project has no HTTP surface; Django provides the management-command
runner, configuration, logging and the run registry database.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.2/ref/settings/
"""

import os
from pathlib import Path

import dj_database_url

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = os.environ.get('SECRET_KEY', 'neuroamp-local-only-not-a-secret')

DEBUG = os.environ.get('DEBUG', 'False').lower() in ('true', '1', 'yes')

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'rest_framework',
    'hearing',
]


# DRF is used for validation only; no request handling, so no users.
REST_FRAMEWORK = {
    'DEFAULT_AUTHENTICATION_CLASSES': [],
    'DEFAULT_PERMISSION_CLASSES': [],
    'UNAUTHENTICATED_USER': None,
}


# Database (run registry)
# https://docs.djangoproject.com/en/5.2/ref/settings/#databases

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': BASE_DIR / 'db.sqlite3',
    }
}

if os.environ.get('DATABASE_URL'):
    DATABASES['default'] = dj_database_url.config(
        default=os.environ.get('DATABASE_URL'),
        conn_max_age=600,
        conn_health_checks=True,
    )

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True


# Logging - level of the project loggers is driven by NEUROAMP_LOG
NEUROAMP_LOG = os.environ.get('NEUROAMP_LOG', 'INFO').upper()

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{asctime} {levelname} {name} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        'hearing': {
            'handlers': ['console'],
            'level': NEUROAMP_LOG,
            'propagate': False,
        },
    },
}


# NeuroAmp pipeline defaults - every value can be overridden per run by
# --config / flags; these only fill in what a run leaves unset.
NEUROAMP_SEED = int(os.environ.get('NEUROAMP_SEED', '0'))
NEUROAMP_JOBS = int(os.environ.get('NEUROAMP_JOBS', '1'))
NEUROAMP_RUNS_DIR = Path(os.environ.get('NEUROAMP_RUNS_DIR', BASE_DIR / 'runs'))
NEUROAMP_SLOW_TESTS = os.environ.get('NEUROAMP_SLOW_TESTS', '').lower() in ('true', '1', 'yes')
