"""Per-pixel linear layers: affine scaling, addition, concatenation, and the
dense accumulation that turns the delta stream back into an output.
"""
from typing import List, Tuple
import numpy as np
from delta_infer.layers.state import LayerState, MissingStateException
from delta_infer.stats import RunStats
from delta_infer.tensor.core import FeatureTensor, UpdateMask, ShapeException
from delta_infer.tensor.masks import mask_union


def _count(stats: RunStats, name: str, kind: str, mask: UpdateMask,
           touched: int) -> None:
    if stats is None:
        return
    layer = stats.layer(name, kind)
    layer.frames += 1
    layer.record_mask(mask)
    layer.bytes_touched_estimate += touched


def sparse_affine(delta_in: FeatureTensor,
                  mask_in: UpdateMask,
                  scale: np.ndarray,
                  shift: np.ndarray,
                  first_frame: bool = False,
                  poison: bool = False,
                  stats: RunStats = None,
                  name: str = 'affine') -> Tuple[FeatureTensor, UpdateMask]:
    """y = scale * x + shift per channel. The shift is a bias, so it only
    enters on the first frame.
    """
    mask_in.check_annotates(delta_in)
    scale = np.asarray(scale, dtype=np.float32).reshape(-1)
    shift = np.asarray(shift, dtype=np.float32).reshape(-1)
    if scale.shape != (delta_in.channels, ) or scale.shape != shift.shape:
        raise ShapeException(
            f'{name}: scale/shift of {scale.size}/{shift.size} entries for '
            f'{delta_in.channels} channels')

    delta_out = FeatureTensor.empty(delta_in.shape, poison)
    bits = mask_in.bits
    values = delta_in.data[bits] * scale
    if first_frame:
        values += shift
    delta_out.data[bits] = values

    _count(stats, name, 'affine', mask_in,
           mask_in.count() * delta_in.channels * 8 + scale.size * 8)
    return delta_out, mask_in.copy()


def sparse_add(a_delta: FeatureTensor,
               a_mask: UpdateMask,
               b_delta: FeatureTensor,
               b_mask: UpdateMask,
               poison: bool = False,
               stats: RunStats = None,
               name: str = 'add') -> Tuple[FeatureTensor, UpdateMask]:
    """Element-wise sum over the union of both masks. A pixel active in only
    one operand takes that operand's delta unchanged.
    """
    a_mask.check_annotates(a_delta)
    b_mask.check_annotates(b_delta)
    if a_delta.shape != b_delta.shape:
        raise ShapeException(
            f'{name}: cannot add tensors shaped {a_delta.shape} and '
            f'{b_delta.shape}')

    mask_out = mask_union(a_mask, b_mask)
    delta_out = FeatureTensor.empty(a_delta.shape, poison)
    delta_out.data[mask_out.bits] = 0.0
    delta_out.data[a_mask.bits] += a_delta.data[a_mask.bits]
    delta_out.data[b_mask.bits] += b_delta.data[b_mask.bits]

    _count(stats, name, 'add', mask_out,
           (a_mask.count() + b_mask.count() + mask_out.count()) *
           a_delta.channels * 4)
    return delta_out, mask_out


def sparse_concat(inputs: List[Tuple[FeatureTensor, UpdateMask]],
                  poison: bool = False,
                  stats: RunStats = None,
                  name: str = 'concat') -> Tuple[FeatureTensor, UpdateMask]:
    """Concatenates along channels. A pixel active in any input is active in
    the output, with the channels of inputs that did not update it set to
    explicit zeros.
    """
    if not inputs:
        raise ShapeException(f'{name}: nothing to concatenate')

    spatial = inputs[0][0].spatial_shape
    mask_out = UpdateMask.full(spatial, False)
    for tensor, mask in inputs:
        mask.check_annotates(tensor)
        if tensor.spatial_shape != spatial:
            raise ShapeException(
                f'{name}: spatial shapes {spatial} and '
                f'{tensor.spatial_shape} differ')
        mask_out = mask_union(mask_out, mask)

    channels = sum(tensor.channels for tensor, _ in inputs)
    delta_out = FeatureTensor.empty(spatial + (channels, ), poison)
    delta_out.data[mask_out.bits] = 0.0

    offset = 0
    for tensor, mask in inputs:
        block = delta_out.data[..., offset:offset + tensor.channels]
        block[mask.bits] = tensor.data[mask.bits]
        offset += tensor.channels

    _count(stats, name, 'concat', mask_out,
           sum(m.count() * t.channels for t, m in inputs) * 4 +
           mask_out.count() * channels * 4)
    return delta_out, mask_out


def dense_accumulate(delta_in: FeatureTensor,
                     mask_in: UpdateMask,
                     output_state: LayerState,
                     stats: RunStats = None,
                     name: str = 'output') -> FeatureTensor:
    """Adds the delta into the dense output buffer and returns a copy of the
    full output.
    """
    if output_state is None:
        raise MissingStateException(f'{name}: output needs its buffer')
    mask_in.check_annotates(delta_in)
    output_state.check_matches(delta_in)

    bits = mask_in.bits
    output_state.accumulated.data[bits] += delta_in.data[bits]

    _count(stats, name, 'output', mask_in,
           mask_in.count() * delta_in.channels * 12)
    return output_state.accumulated.copy()
