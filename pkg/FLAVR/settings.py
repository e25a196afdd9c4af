"""
Django settings for the FLAVR frame-interpolation toolkit.

The project has no web surface and no database: Django provides the app
layout, the management-command CLI and the test runner.
"""
import os
from pathlib import Path

import logfire
from dotenv import load_dotenv

from settings import settings as env_settings

load_dotenv()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Only used by Django internals; nothing is signed.
SECRET_KEY = os.environ.get('DJANGO_SECRET_KEY', 'flavr-offline-toolkit')

DEBUG = int(os.environ.get('DJANGO_DEBUG', '0'))

ALLOWED_HOSTS = []

# Application definition
INSTALLED_APPS = [
    'vfi_tensor',
    'vfi_net',
    'vfi_data',
    'vfi_training',
    'vfi_metrics',
    'vfi_bench',
    'vfi_cli',
]

# Frames, checkpoints and reports are files; no database is configured.
DATABASES = {}

USE_TZ = True
TIME_ZONE = 'UTC'

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"

# Toolkit settings resolved from the environment (.env supported)
FLAVR_THREADS = env_settings.FLAVR_THREADS
FLAVR_OUTPUT_ROOT = BASE_DIR / env_settings.FLAVR_OUTPUT_ROOT
FLAVR_RUN_SLOW = bool(env_settings.FLAVR_RUN_SLOW)

logfire.configure(
    console=False,
    inspect_arguments=False,
    send_to_logfire=env_settings.FLAVR_SEND_TO_LOGFIRE,
)

# Logging Configuration
LOG_LEVEL = env_settings.FLAVR_LOG_LEVEL

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'standard': {
            'format': '%(asctime)s [%(levelname)s] %(name)s: %(message)s'
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'standard'
        },
    },
    'loggers': {
        'django': {
            'handlers': ['console'],
            'level': LOG_LEVEL,
            'propagate': False,
        },
        **{
            app: {
                'handlers': ['console'],
                'level': LOG_LEVEL,
                'propagate': False,
            }
            for app in INSTALLED_APPS
        },
    },
}
