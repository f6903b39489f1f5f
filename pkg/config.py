import os
import dotenv
dotenv.load_dotenv()
basedir = os.path.abspath(os.path.dirname(__file__))

# Where run directories are created when --run-dir is relative
RUNS_DIR = os.environ.get('DISTILL_RUNS_DIR') or os.path.join(basedir, 'runs')

# Worker cap for independent optimisation jobs; --threads overrides it
THREADS = int(os.environ.get('DISTILL_THREADS', '1'))

LOG_LEVEL = os.environ.get('DISTILL_LOG_LEVEL', 'INFO').upper()
LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'

# Optional JSON config picked up when --config is not given
DEFAULT_CONFIG_PATH = os.environ.get('DISTILL_CONFIG')

# Long directional reproductions in the test-suite
SLOW_TESTS = os.environ.get('DISTILL_SLOW_TESTS', '').lower() in ('1', 'true', 'yes')

# Numeric precision every artifact declares
PRECISION_BITS = 32
