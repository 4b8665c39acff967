"""
Django settings for the geodistill project.

For more information on this file, see
https://docs.djangoproject.com/en/5.2/topics/settings/

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.2/ref/settings/
"""
from datetime import timedelta
from pathlib import Path

from decouple import config

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = config('SECRET_KEY', default='django-insecure-geodistill-desk-scale-key')

# SECURITY WARNING: don't run with debug turned on in production!
DEBUG = config('DEBUG', default=True, cast=bool)

ALLOWED_HOSTS = config('ALLOWED_HOSTS', default='localhost,127.0.0.1', cast=lambda v: [h.strip() for h in v.split(',')])

# Application definition

INSTALLED_APPS = [
    "django.contrib.admin",
    "django.contrib.auth",
    "django.contrib.contenttypes",
    "django.contrib.sessions",
    "django.contrib.messages",
    "django.contrib.staticfiles",

    # Third party apps
    'rest_framework',
    'rest_framework_simplejwt',
    'django_filters',

    # my apps
    'imaging',
    'backbones',
    'distill',
    'probing',
    'changedet',
    'runs',
]

MIDDLEWARE = [
    "django.middleware.security.SecurityMiddleware",
    "django.contrib.sessions.middleware.SessionMiddleware",
    "django.middleware.common.CommonMiddleware",
    "django.middleware.csrf.CsrfViewMiddleware",
    "django.contrib.auth.middleware.AuthenticationMiddleware",
    "django.contrib.messages.middleware.MessageMiddleware",
    "django.middleware.clickjacking.XFrameOptionsMiddleware",
]

ROOT_URLCONF = "geodistill.urls"

TEMPLATES = [
    {
        "BACKEND": "django.template.backends.django.DjangoTemplates",
        "DIRS": [],
        "APP_DIRS": True,
        "OPTIONS": {
            "context_processors": [
                "django.template.context_processors.request",
                "django.contrib.auth.context_processors.auth",
                "django.contrib.messages.context_processors.messages",
            ],
        },
    },
]

WSGI_APPLICATION = "geodistill.wsgi.application"

# Database
# Run provenance only; SQLite keeps desk-scale use server-free.
# https://docs.djangoproject.com/en/5.2/ref/settings/#databases

DB_ENGINE = config('DB_ENGINE', default='django.db.backends.sqlite3')

if DB_ENGINE.endswith('sqlite3'):
    DATABASES = {
        "default": {
            "ENGINE": DB_ENGINE,
            "NAME": config('DB_NAME', default=str(BASE_DIR / 'geodistill.sqlite3')),
        }
    }
else:
    DATABASES = {
        "default": {
            "ENGINE": DB_ENGINE,
            'NAME': config('DB_NAME', default='geodistill_db'),
            'USER': config('DB_USER', default='postgres'),
            'PASSWORD': config('DB_PASSWORD', default='postgres'),
            'HOST': config('DB_HOST', default='localhost'),
            'PORT': config('DB_PORT', default='5432'),
        }
    }

# Internationalization
# https://docs.djangoproject.com/en/5.2/topics/i18n/

LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = True

USE_TZ = True

# Static files (CSS, JavaScript, Images)
# https://docs.djangoproject.com/en/5.2/howto/static-files/

STATIC_URL = "static/"

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"

REST_FRAMEWORK = {
    'DEFAULT_PERMISSION_CLASSES': [
        'rest_framework.permissions.IsAuthenticated',
    ],
    'DEFAULT_AUTHENTICATION_CLASSES': [
        'rest_framework_simplejwt.authentication.JWTAuthentication',
    ],
    'DEFAULT_PAGINATION_CLASS': 'rest_framework.pagination.PageNumberPagination',
    'PAGE_SIZE': 20,
}
SIMPLE_JWT = {
    'ACCESS_TOKEN_LIFETIME': timedelta(minutes=60),
    'REFRESH_TOKEN_LIFETIME': timedelta(days=7),
    'AUTH_HEADER_TYPES': ('Bearer',),
}

# Celery Configuration
CELERY_BROKER_URL = config('CELERY_BROKER_URL', default='redis://localhost:6379/0')
CELERY_RESULT_BACKEND = config('CELERY_RESULT_BACKEND', default='redis://localhost:6379/0')
CELERY_ACCEPT_CONTENT = ['json']
CELERY_TASK_SERIALIZER = 'json'
CELERY_RESULT_SERIALIZER = 'json'
CELERY_TIMEZONE = 'UTC'
# A training run owns its process; one at a time per worker.
CELERY_WORKER_PREFETCH_MULTIPLIER = 1
CELERY_TASK_ACKS_LATE = True

# Run outputs
# Relative output_dir values in run configs resolve under this root.
GEODISTILL_OUTPUT_ROOT = Path(config('GEODISTILL_OUTPUT_ROOT', default=str(BASE_DIR / 'outputs')))

# Desk-scale defaults applied when a run config omits a key.
GEODISTILL_DEFAULTS = {
    'run': {
        'seed': 0,
        'device': 'cpu',
        'float_width': 32,
        'num_workers': 0,
        'log_every': 10,
        'checkpoint_every': 0,
    },
    'backbone': {
        'family': 'residual',
        'stage_channels': [16, 32, 64, 128],
        'depth_per_stage': [2, 2, 2, 2],
        'widening_factor': 1,
        'in_channels': 3,
        'patch_size': 8,
        'embed_dim': 96,
        'depth': 4,
        'num_heads': 4,
        'native_size': 224,
        'patch_resize': True,
    },
    'head': {
        'hidden_dim': 512,
        'bottleneck_dim': 64,
        'num_prototypes': 1024,
        'num_layers': 3,
    },
    'augment': {
        'global_size': 224,
        'num_globals': 2,
        'global_scale': [0.32, 1.0],
        'local_sizes': [184, 164, 144, 124, 104, 84],
        'local_scale': [0.05, 0.32],
        'baseline_local_size': 96,
        'jitter_strengths': [0.4, 0.4, 0.2, 0.1],
        'jitter_prob': 0.8,
        'grayscale_prob': 0.2,
        'blur_sigma': [0.1, 2.0],
        'global_blur_probs': [1.0, 0.1],
        'local_blur_prob': 0.5,
    },
    'optimizer': {
        'lr': 5e-4,
        'min_lr': 1e-6,
        'weight_decay': 0.04,
        'batch_size': 32,
        'clip_grad': 3.0,
    },
    'schedule': {
        'epochs': 30,
        'warmup_epochs': 10,
        'freeze_last_layer_epochs': 1,
    },
    'distill': {
        'student_temp': 0.1,
        'teacher_temp': 0.07,
        'warmup_teacher_temp': 0.04,
        'warmup_teacher_temp_epochs': 30,
        'center_momentum': 0.9,
        'momentum_base': 0.996,
        'centering': True,
    },
    'dataset': {
        'root': '',
        'layout': 'classfolders',
        'name': '',
        'splits': {'train': 0.8, 'test': 0.2},
        'image_size': 0,
    },
    'probe': {
        'protocol': 'knn',
        'k': 20,
        'knn_temperature': 0.07,
        'epochs': 100,
        'lr': 1e-3,
        'batch_size': 256,
    },
    'finetune': {
        'task': 'single',
        'epochs': 200,
        'lr': None,
        'momentum': 0.9,
        'batch_size': 32,
        'optimizer': 'adam',
        'train_fraction': 1.0,
        'freeze_backbone': False,
    },
    'changedet': {
        'epochs': 20,
        'lr': 6e-4,
        'batch_size': 32,
        'decoder_widths': [128, 64, 32, 16],
        'dice_smooth': 1.0,
        'threshold': 0.5,
        'save_masks': True,
    },
}

# Logging
# https://docs.djangoproject.com/en/5.2/topics/logging/

LOG_LEVEL = config('GEODISTILL_LOG_LEVEL', default='INFO')

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
    'root': {
        'handlers': ['console'],
        'level': LOG_LEVEL,
    },
    'loggers': {
        name: {'handlers': ['console'], 'level': LOG_LEVEL, 'propagate': False}
        for name in ('imaging', 'backbones', 'distill', 'probing', 'changedet', 'runs')
    },
}
