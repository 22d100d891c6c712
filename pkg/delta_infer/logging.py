"""Logging for delta_infer is configured once, here. Modules grab their logger
with logging.getLogger('delta_infer') after importing this module.
"""
import logging
import delta_infer.config as CONFIG
from delta_infer.translation import _

logging.basicConfig(format='%(levelname)s %(name)s: %(message)s')
logging.getLogger('delta_infer').setLevel(
    getattr(logging, CONFIG.LOG_LEVEL.upper(), logging.WARNING))

# Debug messages only when in debug mode
if CONFIG.DEBUG:
    logging.getLogger('delta_infer').setLevel(logging.DEBUG)

    # This should be translated to true to show that translation is not failing
    logging.getLogger('delta_infer').debug(_("Translation is working: False"))
