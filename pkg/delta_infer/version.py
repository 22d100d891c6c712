"""This file stores the current delta_infer version.

We don't really want to load numpy and the whole engine for a simple version
inquiry.
"""
VERSION = '0.1.0-dev'
NAME = 'delta_infer'
DESCRIPTION = 'Sparse frame-delta CNN inference for fixed-camera video'
