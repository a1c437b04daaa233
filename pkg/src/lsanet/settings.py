import os

from dotenv import load_dotenv


load_dotenv(override=True)

DEBUG = True if os.getenv('DEBUG') == 'True' else False

# Worker cap for per-cloud work
THREADS = max(1, int(os.getenv('LSANET_THREADS') or os.cpu_count() or 1))

# Optimizer and schedule
BASE_LR = 0.002
DECAY_RATIO = 0.7
DECAY_INTERVAL_EPOCHS = 40
LR_FLOOR = 1e-5
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
BATCH_SIZE = 32

# Batch norm
BN_EPS = 1e-5
BN_MOMENTUM = 0.9

# Data
DEFAULT_N_POINTS = 1024
DENSITY_POINT_COUNTS = (1024, 512, 256, 128, 64)
DROPOUT_MAX_RATIO = 0.875

# Checkpoint file
CHECKPOINT_MAGIC = b'LSAN'
CHECKPOINT_VERSION = 1
