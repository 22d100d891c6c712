"""Turns dense frames into sparse deltas against what was last propagated."""
from typing import Tuple
import numpy as np
from delta_infer.layers.activation import truncation_keep
from delta_infer.layers.state import LayerState, MissingStateException
from delta_infer.stats import RunStats
from delta_infer.tensor.core import FeatureTensor, UpdateMask
from delta_infer.tensor.masks import mask_dilate_radius


def delta_generate(frame: FeatureTensor,
                   prev_input: LayerState,
                   epsilon_in: float,
                   dilation_radius: int = 0,
                   first_frame: bool = False,
                   poison: bool = False,
                   stats: RunStats = None,
                   name: str = 'input') -> Tuple[FeatureTensor, UpdateMask]:
    """Compares a frame with the last propagated input.

    A pixel is active when its largest channel change reaches epsilon_in. The
    active mask is then widened by dilation_radius pixels; pixels switched on
    by the dilation emit their own (possibly small) delta. The stored input is
    only refreshed where a delta was emitted, so changes that were held back
    stay pending against the last propagated value.
    """
    if prev_input is None:
        raise MissingStateException(f'{name}: delta generation needs state')
    prev_input.check_matches(frame)
    frame.check_finite()

    if first_frame:
        prev_input.accumulated.data[...] = frame.data
        prev_input.bias_applied = True
        mask = UpdateMask.full(frame.spatial_shape, True)
        delta = frame.copy()
    else:
        diff = frame.data - prev_input.accumulated.data
        flat = diff.reshape(-1, frame.channels)
        active = truncation_keep(flat, epsilon_in).reshape(frame.spatial_shape)
        mask = mask_dilate_radius(UpdateMask(active), dilation_radius)

        delta = FeatureTensor.empty(frame.shape, poison)
        delta.data[mask.bits] = diff[mask.bits]
        prev_input.accumulated.data[mask.bits] = frame.data[mask.bits]

    if stats is not None:
        layer = stats.layer(name, 'input')
        layer.frames += 1
        layer.record_mask(mask)
        layer.bytes_touched_estimate += (frame.data.size * 8 +
                                         mask.count() * frame.channels * 8)

    return delta, mask
