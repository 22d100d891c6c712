"""This module pulls in the configuration details from a delta_infer.config or
delta_infer.dev.config file. Environment variables override file entries.

The engine itself never reads these globals; it receives an EngineOptions
value built by engine_options() so that tests can configure it directly.
"""
import os
from collections import namedtuple
from starlette.config import Config

if os.path.exists('delta_infer.dev.config') or os.environ.get('DEBUG', False):
    DEV_CONFIG = True
    config = Config('delta_infer.dev.config')  # pylint: disable=invalid-name
else:
    DEV_CONFIG = False
    config = Config('delta_infer.config')  # pylint: disable=invalid-name

DEBUG = config('DEBUG', cast=bool, default=False)
POISON_DEBUG = config('POISON_DEBUG', cast=bool, default=DEBUG)
THREADS = config('DELTA_INFER_THREADS', cast=int, default=1)
RESET_INTERVAL = config('RESET_INTERVAL', cast=int, default=500)
VERY_SPARSE_MAX = config('VERY_SPARSE_MAX', cast=int, default=4)
TILE_MODE = config('TILE_MODE', cast=str, default='hybrid')
LOG_LEVEL = config('LOG_LEVEL', cast=str, default='WARNING')

TILE_MODES = ('hybrid', 'per_tile', 'per_pixel')

# threads - size of the tile worker pool, 1 runs every tile serially
# poison - fill masked-off regions with NaN so stale reads fail loudly
# very_sparse_max - tiles with 1..very_sparse_max active inputs take the
#     gathered-pixel path, more than that go dense
# tile_mode - hybrid, per_tile or per_pixel
# reset_interval - frames between automatic buffer resets, 0 disables
EngineOptions = namedtuple(
    'EngineOptions',
    'threads poison very_sparse_max tile_mode reset_interval',
)


def engine_options(source: Config = None, **overrides) -> EngineOptions:
    """Builds engine options from a starlette config (the module config by
    default). Keyword overrides win over configured values, None overrides
    are ignored so CLI flags can be passed straight through.
    """
    if source is None:
        options = EngineOptions(THREADS, POISON_DEBUG, VERY_SPARSE_MAX,
                                TILE_MODE, RESET_INTERVAL)
    else:
        debug = source('DEBUG', cast=bool, default=False)
        options = EngineOptions(
            threads=source('DELTA_INFER_THREADS', cast=int, default=1),
            poison=source('POISON_DEBUG', cast=bool, default=debug),
            very_sparse_max=source('VERY_SPARSE_MAX', cast=int, default=4),
            tile_mode=source('TILE_MODE', cast=str, default='hybrid'),
            reset_interval=source('RESET_INTERVAL', cast=int, default=500),
        )

    options = options._replace(
        **{k: v
           for k, v in overrides.items() if v is not None})

    if options.tile_mode not in TILE_MODES:
        raise ValueError(f'unknown tile mode {options.tile_mode}')
    if options.threads < 1:
        raise ValueError('thread count must be at least 1')

    return options
