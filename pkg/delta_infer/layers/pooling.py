"""Sparse pooling.

Average pooling is linear and stateless: the delta of the output is the
average of the input delta with inactive pixels as zero. Max pooling is
nonlinear and keeps x^A, the accumulated pre-pool input, so that

    dy = maxpool(x^A + dx) - maxpool(x^A)

for every output window touching an active pixel. Pooling never truncates.
Average windows divide by the full window area, padding included, which is
what keeps them linear.
"""
from typing import Tuple
import numpy as np
from delta_infer.layers.state import LayerState, MissingStateException
from delta_infer.stats import RunStats
from delta_infer.tensor.core import FeatureTensor, UpdateMask, ShapeException
from delta_infer.tensor.masks import dilate_for_geometry
from delta_infer.tensor.tiles import ConvGeometry

POOL_KINDS = ('max', 'avg', 'global_avg')


def sparse_pool(delta_in: FeatureTensor,
                mask_in: UpdateMask,
                state: LayerState = None,
                kind: str = 'max',
                kernel: int = 2,
                stride: int = None,
                padding: int = 0,
                first_frame: bool = False,
                poison: bool = False,
                stats: RunStats = None,
                name: str = 'pool') -> Tuple[FeatureTensor, UpdateMask]:
    """Pools a sparse delta tensor. Max pooling mutates its state."""
    mask_in.check_annotates(delta_in)
    if kind not in POOL_KINDS:
        raise ValueError(f'{name}: unknown pooling kind {kind}')

    if kind == 'global_avg':
        delta_out, mask_out = _global_avg(delta_in, mask_in, poison)
    else:
        geometry = ConvGeometry(kernel, kernel, stride or kernel, 1, padding)
        if padding * 2 > kernel:
            raise ShapeException(
                f'{name}: padding {padding} too large for window {kernel}')
        mask_out = dilate_for_geometry(mask_in, geometry)
        if kind == 'max':
            if state is None:
                raise MissingStateException(
                    f'{name}: max pooling needs its accumulated input')
            state.check_matches(delta_in)
            delta_out = _max_pool(delta_in, mask_in, mask_out, state,
                                  geometry, first_frame, poison)
        else:
            delta_out = _avg_pool(delta_in, mask_in, mask_out, geometry,
                                  poison)

    if stats is not None:
        layer = stats.layer(name, kind + 'pool')
        layer.frames += 1
        layer.record_mask(mask_out)
        layer.bytes_touched_estimate += (
            mask_in.count() * delta_in.channels * 4 +
            mask_out.count() * delta_out.channels * 4 + mask_in.bits.size)

    return delta_out, mask_out


def _windows(mask_out: UpdateMask, geometry: ConvGeometry, height: int,
             width: int):
    """Input coordinates of every window behind an active output.

    Returns (active outputs, batch, rows, cols, valid) where rows/cols are
    clipped into the image and valid flags taps that really lie inside it.
    """
    active = np.argwhere(mask_out.bits)
    taps = np.arange(geometry.kernel_h)
    rows = active[:, 1, None] * geometry.stride - geometry.padding + taps
    cols = active[:, 2, None] * geometry.stride - geometry.padding + taps
    valid = (((rows >= 0) & (rows < height))[:, :, None] &
             ((cols >= 0) & (cols < width))[:, None, :])

    batch = active[:, 0, None, None]
    rows = np.clip(rows, 0, height - 1)[:, :, None]
    cols = np.clip(cols, 0, width - 1)[:, None, :]
    return active, batch, rows, cols, valid


def _updated_taps(delta_in: FeatureTensor, b, rows, cols,
                  updated: np.ndarray) -> np.ndarray:
    """Window deltas with zeros wherever the tap is not an updated input.
    Only updated taps are read from delta_in.
    """
    taps = np.zeros(updated.shape + (delta_in.channels, ), dtype=np.float32)
    b, rows, cols = np.broadcast_arrays(b, rows, cols)
    taps[updated] = delta_in.data[b[updated], rows[updated], cols[updated]]
    return taps


def _max_pool(delta_in: FeatureTensor, mask_in: UpdateMask,
              mask_out: UpdateMask, state: LayerState,
              geometry: ConvGeometry, first_frame: bool,
              poison: bool) -> FeatureTensor:
    batch, height, width, channels = delta_in.shape
    shape = (batch, mask_out.height, mask_out.width, channels)
    delta_out = FeatureTensor.empty(shape, poison)

    if mask_out.any():
        active, b, rows, cols, valid = _windows(mask_out, geometry, height,
                                                width)
        old = state.accumulated.data[b, rows, cols]
        updated = mask_in.bits[b, rows, cols] & valid
        new = old + _updated_taps(delta_in, b, rows, cols, updated)

        floor = np.float32(-np.inf)
        new_max = np.where(valid[..., None], new, floor).max(axis=(1, 2))
        if first_frame:
            delta = new_max
        else:
            old_max = np.where(valid[..., None], old, floor).max(axis=(1, 2))
            delta = new_max - old_max
        delta_out.data[active[:, 0], active[:, 1], active[:, 2]] = delta

    bits = mask_in.bits
    state.accumulated.data[bits] += delta_in.data[bits]
    return delta_out


def _avg_pool(delta_in: FeatureTensor, mask_in: UpdateMask,
              mask_out: UpdateMask, geometry: ConvGeometry,
              poison: bool) -> FeatureTensor:
    batch, height, width, channels = delta_in.shape
    shape = (batch, mask_out.height, mask_out.width, channels)
    delta_out = FeatureTensor.empty(shape, poison)

    if mask_out.any():
        active, b, rows, cols, valid = _windows(mask_out, geometry, height,
                                                width)
        updated = mask_in.bits[b, rows, cols] & valid
        values = _updated_taps(delta_in, b, rows, cols, updated)
        area = np.float32(geometry.kernel_h * geometry.kernel_w)
        delta_out.data[active[:, 0], active[:, 1], active[:, 2]] = \
            values.sum(axis=(1, 2), dtype=np.float32) / area

    return delta_out


def _global_avg(delta_in: FeatureTensor, mask_in: UpdateMask,
                poison: bool) -> Tuple[FeatureTensor, UpdateMask]:
    batch, height, width, channels = delta_in.shape
    delta_out = FeatureTensor.empty((batch, 1, 1, channels), poison)
    mask_out = UpdateMask(mask_in.bits.any(axis=(1, 2)).reshape(batch, 1, 1))

    area = np.float32(height * width)
    for b in np.nonzero(mask_out.bits[:, 0, 0])[0]:
        picked = delta_in.data[b][mask_in.bits[b]]
        delta_out.data[b, 0, 0] = picked.sum(axis=0, dtype=np.float32) / area

    return delta_out, mask_out
