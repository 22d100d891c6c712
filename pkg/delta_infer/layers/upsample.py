"""Sparse upsampling. Both modes are linear and stateless.

Bilinear mode samples at half-pixel centres,

    src = (dst + 0.5) / factor - 0.5

clamped into the image, and blends the two neighbouring rows and columns.
An output pixel is active iff any pixel of its support is active; the
interpolated value treats inactive support pixels as zero delta. This is
the same as dilating the source mask by one pixel before interpolating.
"""
from typing import Tuple
import numpy as np
from delta_infer.stats import RunStats
from delta_infer.tensor.core import FeatureTensor, UpdateMask, ShapeException

UPSAMPLE_MODES = ('nearest', 'bilinear')


def bilinear_axis(size: int,
                  factor: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Source indices and weights along one axis.

    Returns (lower, upper, weight) with one entry per output position; the
    output blends (1 - weight) of lower with weight of upper.
    """
    dst = np.arange(size * factor, dtype=np.float64)
    src = np.clip((dst + 0.5) / factor - 0.5, 0.0, size - 1)
    lower = np.floor(src).astype(np.int64)
    upper = np.minimum(lower + 1, size - 1)
    return lower, upper, (src - lower).astype(np.float32)


def _bilinear_support(mask: UpdateMask, factor: int) -> UpdateMask:
    y0, y1, _ = bilinear_axis(mask.height, factor)
    x0, x1, _ = bilinear_axis(mask.width, factor)
    bits = mask.bits
    out = (bits[:, y0][:, :, x0] | bits[:, y0][:, :, x1] |
           bits[:, y1][:, :, x0] | bits[:, y1][:, :, x1])
    return UpdateMask(out)


def sparse_upsample(delta_in: FeatureTensor,
                    mask_in: UpdateMask,
                    factor: int = 2,
                    mode: str = 'nearest',
                    poison: bool = False,
                    stats: RunStats = None,
                    name: str = 'upsample') -> Tuple[FeatureTensor,
                                                     UpdateMask]:
    mask_in.check_annotates(delta_in)
    if factor < 1:
        raise ShapeException(f'{name}: upsampling factor must be >= 1')
    if mode not in UPSAMPLE_MODES:
        raise ValueError(f'{name}: unknown upsampling mode {mode}')

    batch, height, width, channels = delta_in.shape
    out_shape = (batch, height * factor, width * factor, channels)
    delta_out = FeatureTensor.empty(out_shape, poison)

    if mode == 'nearest':
        mask_out = UpdateMask(
            mask_in.bits.repeat(factor, axis=1).repeat(factor, axis=2))
        b, y, x = np.nonzero(mask_out.bits)
        delta_out.data[b, y, x] = delta_in.data[b, y // factor, x // factor]
    else:
        mask_out = _bilinear_support(mask_in, factor)
        y0, y1, wy = bilinear_axis(height, factor)
        x0, x1, wx = bilinear_axis(width, factor)
        dense = delta_in.dense_equivalent(mask_in)

        b, y, x = np.nonzero(mask_out.bits)
        wy, wx = wy[y, None], wx[x, None]
        one = np.float32(1.0)
        top = ((one - wx) * dense[b, y0[y], x0[x]] +
               wx * dense[b, y0[y], x1[x]])
        bottom = ((one - wx) * dense[b, y1[y], x0[x]] +
                  wx * dense[b, y1[y], x1[x]])
        delta_out.data[b, y, x] = (one - wy) * top + wy * bottom

    if stats is not None:
        layer = stats.layer(name, 'upsample')
        layer.frames += 1
        layer.record_mask(mask_out)
        layer.bytes_touched_estimate += (
            (mask_in.count() + mask_out.count()) * channels * 4 +
            mask_in.bits.size + mask_out.bits.size)

    return delta_out, mask_out
