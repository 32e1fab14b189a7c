import os
from dotenv import load_dotenv

load_dotenv()

THREADS = int(os.getenv('RFAVAR_THREADS', '1') or 1)
LOG_LEVEL = os.getenv('RFAVAR_LOG_LEVEL', 'INFO')

# MM-EM defaults; c is the step size of the proximal-gradient update
DEFAULT_C = 0.01
DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 2000
VARIANCE_FLOOR = 1e-8

DEFAULT_LAG_ORDER = 12
DEFAULT_CI_LEVEL = 0.68
DEFAULT_R_MAX = 10

BURN_IN = 200
DGP_EIGEN_FLOOR = 1e-3
DGP_MAX_RADIUS = 0.95

# share of dropped bootstrap replications above which bands are refused
MAX_DROPPED_SHARE = 0.2
