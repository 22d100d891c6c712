"""delta_infer is a CNN inference engine for fixed-camera video. Instead of
recomputing every frame, it propagates sparse per-pixel frame deltas through
every layer, skips tiles where nothing changed and truncates insignificant
updates without letting the truncation error accumulate.
"""
from delta_infer.version import VERSION

__version__ = VERSION
