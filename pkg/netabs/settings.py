from pathlib import Path
import environ

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Environment variables
env = environ.Env(
    DEBUG=(bool, False),
    SECRET_KEY=(str, 'netabs-insecure-local-key'),
    NETABS_TOL=(float, 1e-9),
    NETABS_EIG_METHOD=(str, 'lapack'),
    NETABS_MC_WORKERS=(int, 1),
    NETABS_MC_CHUNK=(int, 500),
    NETABS_OUTPUT_DIR=(str, 'reports'),
    NETABS_LOG_LEVEL=(str, 'INFO'),
)

# Read .env file
environ.Env.read_env(BASE_DIR / '.env')

SECRET_KEY = env('SECRET_KEY')

DEBUG = env('DEBUG')

ALLOWED_HOSTS = []

# Application definition
INSTALLED_APPS = [
    'rest_framework',
    'core',
]

TEMPLATES = [
    {
        'BACKEND': 'django.template.backends.django.DjangoTemplates',
        'DIRS': [],
        'APP_DIRS': True,
        'OPTIONS': {
            'context_processors': [],
        },
    },
]

# No database: everything is computed in-process from JSON configs.
DATABASES = {}

LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = False
USE_TZ = True

# Django REST Framework (serializers only, used for config validation)
REST_FRAMEWORK = {
    'DEFAULT_AUTHENTICATION_CLASSES': [],
    'DEFAULT_PERMISSION_CLASSES': [],
    'UNAUTHENTICATED_USER': None,
}

# Numerics
NETABS_TOL = env('NETABS_TOL')
NETABS_EIG_METHOD = env('NETABS_EIG_METHOD')

# Monte Carlo engine
NETABS_MC_WORKERS = env('NETABS_MC_WORKERS')
NETABS_MC_CHUNK = env('NETABS_MC_CHUNK')

# Reports
NETABS_OUTPUT_DIR = Path(env('NETABS_OUTPUT_DIR'))
NETABS_CASESTUDY_CONFIG = env.path(
    'NETABS_CASESTUDY_CONFIG', default=BASE_DIR / 'core' / 'fixtures' / 'casestudy.json'
)

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
        'core': {
            'handlers': ['console'],
            'level': env('NETABS_LOG_LEVEL'),
            'propagate': False,
        },
    },
}
