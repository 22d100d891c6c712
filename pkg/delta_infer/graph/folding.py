"""Batch norm folding.

A batch norm after a convolution is an affine map per output channel, so it
can be pushed into the convolution's weights and bias:

    w' = w * gamma / sqrt(var + eps)
    b' = (b - mean) * gamma / sqrt(var + eps) + beta
"""
from typing import Tuple
import numpy as np
from delta_infer.layers.state import ConvParams
from delta_infer.tensor.core import ShapeException


def batchnorm_affine(gamma: np.ndarray, beta: np.ndarray, mean: np.ndarray,
                     var: np.ndarray,
                     eps: float = 1e-5) -> Tuple[np.ndarray, np.ndarray]:
    """The (scale, shift) pair a batch norm applies per channel."""
    gamma, beta, mean, var = (np.asarray(v, dtype=np.float64).reshape(-1)
                              for v in (gamma, beta, mean, var))
    if not gamma.shape == beta.shape == mean.shape == var.shape:
        raise ShapeException('batch norm parameters differ in length')
    if np.any(var + eps <= 0):
        raise ValueError('batch norm variance plus eps must be positive')

    scale = gamma / np.sqrt(var + eps)
    return scale.astype(np.float32), (beta - mean * scale).astype(np.float32)


def fold_batchnorm(params: ConvParams, gamma: np.ndarray, beta: np.ndarray,
                   mean: np.ndarray, var: np.ndarray,
                   eps: float = 1e-5) -> ConvParams:
    """Returns new convolution parameters equivalent to the convolution
    followed by the batch norm. The inputs are left untouched.
    """
    gamma, beta, mean, var = (np.asarray(v, dtype=np.float64).reshape(-1)
                              for v in (gamma, beta, mean, var))
    if gamma.shape != (params.out_channels, ):
        raise ShapeException(
            f'batch norm over {gamma.size} channels cannot fold into a '
            f'convolution with {params.out_channels} outputs')

    factor = gamma / np.sqrt(var + eps)
    weights = params.weights.astype(np.float64) * factor[:, None, None, None]
    bias = (np.zeros(params.out_channels) if params.bias is None else
            params.bias.astype(np.float64))
    bias = (bias - mean) * factor + beta

    return ConvParams(weights.astype(np.float32),
                      bias.astype(np.float32),
                      stride=params.stride,
                      dilation=params.dilation,
                      padding=params.padding,
                      groups=params.groups,
                      in_channels=params.in_channels)
