"""Sparse delta implementations of every supported layer kind."""
from delta_infer.layers.state import LayerState, ConvParams, MissingStateException
from delta_infer.layers.generate import delta_generate
from delta_infer.layers.conv import sparse_conv2d, dispatch_modes
from delta_infer.layers.activation import activate_truncate, ACTIVATIONS
from delta_infer.layers.pooling import sparse_pool
from delta_infer.layers.upsample import sparse_upsample
from delta_infer.layers.elementwise import sparse_affine, sparse_add
from delta_infer.layers.elementwise import sparse_concat, dense_accumulate
