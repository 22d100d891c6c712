"""Activation functions fused with update truncation.

For a nonlinear f, the delta of the output can't be computed from the delta
of the input alone, so every activation keeps x^A (what it has accumulated)
and x^T (what it has withheld). For an active input pixel the candidate
update is

    dy = f(x^A + x^T + dx) - f(x^A)

If the largest |dy| over the pixel's channels stays below epsilon, the pixel
is truncated: dx is parked in x^T and the pixel is marked unchanged. Otherwise
dy is emitted, x^A absorbs x^T + dx and x^T is cleared. x^A + x^T always equals
the input the layer would hold had it never truncated, so a slow drift is
emitted as soon as it adds up to something significant.

A negative epsilon means dense mode: every active pixel is emitted.
"""
from typing import Callable, Tuple
import numpy as np
from delta_infer.layers.state import LayerState, MissingStateException
from delta_infer.stats import RunStats
from delta_infer.tensor.core import FeatureTensor, UpdateMask


def _relu(x: np.ndarray, _slope: float) -> np.ndarray:
    return np.maximum(x, np.float32(0.0))


def _relu6(x: np.ndarray, _slope: float) -> np.ndarray:
    return np.minimum(np.maximum(x, np.float32(0.0)), np.float32(6.0))


def _leaky_relu(x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x >= 0, x, x * np.float32(slope)).astype(np.float32)


def _sigmoid(x: np.ndarray, _slope: float) -> np.ndarray:
    # exp of a large negative argument overflows quietly to inf, which is
    # fine: 1 / (1 + inf) is the correct limit.
    with np.errstate(over='ignore'):
        return (np.float32(1.0) /
                (np.float32(1.0) + np.exp(-x))).astype(np.float32)


def _swish(x: np.ndarray, slope: float) -> np.ndarray:
    return (x * _sigmoid(x, slope)).astype(np.float32)


def _identity(x: np.ndarray, _slope: float) -> np.ndarray:
    return x


ACTIVATIONS = {
    'relu': _relu,
    'relu6': _relu6,
    'leaky_relu': _leaky_relu,
    'sigmoid': _sigmoid,
    'swish': _swish,
    'identity': _identity,
}


def activation_function(fn: str, negative_slope: float = 0.01
                        ) -> Callable[[np.ndarray], np.ndarray]:
    """Returns the element-wise function for an activation kind."""
    try:
        func = ACTIVATIONS[fn]
    except KeyError:
        raise ValueError(f'unknown activation {fn}') from None
    return lambda x: func(x, negative_slope)


def truncation_keep(candidate: np.ndarray, epsilon: float) -> np.ndarray:
    """Which pixels of a (pixels, channels) candidate delta to emit.

    Max norm over channels against epsilon. An all-zero update is never
    emitted unless epsilon is the negative dense-mode sentinel, so epsilon 0
    still holds back updates that would not change the output.
    """
    if epsilon < 0:
        return np.ones(candidate.shape[0], dtype=bool)

    peak = np.max(np.abs(candidate), axis=1) if candidate.shape[1] else \
        np.zeros(candidate.shape[0], dtype=np.float32)
    return (peak >= epsilon) & (peak > 0)


def activate_truncate(delta_in: FeatureTensor,
                      mask_in: UpdateMask,
                      state: LayerState,
                      epsilon: float,
                      fn: str = 'relu',
                      negative_slope: float = 0.01,
                      first_frame: bool = False,
                      poison: bool = False,
                      stats: RunStats = None,
                      name: str = 'activation'
                      ) -> Tuple[FeatureTensor, UpdateMask]:
    """Applies the activation to the delta stream and truncates small
    updates. Mutates the state in place.

    On the first frame everything downstream starts from zero rather than
    from f(x^A), so every pixel emits f(x) in full and nothing is truncated.
    """
    if state is None or state.truncated is None:
        raise MissingStateException(
            f'{name}: activation needs accumulated and truncated buffers')
    mask_in.check_annotates(delta_in)
    state.check_matches(delta_in)
    if np.isnan(epsilon) or epsilon == np.inf:
        raise ValueError(f'{name}: epsilon must be finite, got {epsilon}')

    func = activation_function(fn, negative_slope)
    delta_out = FeatureTensor.empty(delta_in.shape, poison)
    mask_out = UpdateMask.empty_like(delta_in)

    bits = mask_in.bits
    if bits.any():
        accumulated = state.accumulated.data[bits]
        truncated = state.truncated.data[bits]
        pending = accumulated + truncated + delta_in.data[bits]
        if first_frame:
            candidate = func(pending)
            keep = np.ones(candidate.shape[0], dtype=bool)
        else:
            candidate = func(pending) - func(accumulated)
            keep = truncation_keep(candidate, epsilon)
        where = np.argwhere(bits)
        kept, dropped = where[keep], where[~keep]
        kept_idx = (kept[:, 0], kept[:, 1], kept[:, 2])
        dropped_idx = (dropped[:, 0], dropped[:, 1], dropped[:, 2])

        delta_out.data[kept_idx] = candidate[keep]
        mask_out.bits[kept_idx] = True
        state.accumulated.data[kept_idx] = pending[keep]
        state.truncated.data[kept_idx] = 0.0
        # x^T + dx, same sum as the pending value without x^A
        state.truncated.data[dropped_idx] = (truncated[~keep] +
                                             delta_in.data[dropped_idx])

    if stats is not None:
        layer = stats.layer(name, 'activation')
        layer.frames += 1
        layer.record_mask(mask_out)
        active = mask_in.count()
        # read dx, x^A, x^T, write dy, x^A, x^T for every active pixel
        layer.bytes_touched_estimate += (active * delta_in.channels * 4 * 6 +
                                         bits.size * 2)

    return delta_out, mask_out
