"""Update mask arithmetic: how masks grow through convolutions and how the
input mask is widened after thresholding.
"""
import numpy as np
from scipy.ndimage import binary_dilation
from delta_infer.tensor.core import UpdateMask, ShapeException
from delta_infer.tensor.tiles import ConvGeometry, conv_output_shape


def mask_dilate_conv(mask: UpdateMask, kernel_h: int, kernel_w: int,
                     stride: int, dilation: int, padding: int) -> UpdateMask:
    """An output pixel is active iff any input pixel inside its receptive
    field is active. Padding pixels are permanently inactive.
    """
    geometry = ConvGeometry(kernel_h, kernel_w, stride, dilation, padding)
    return dilate_for_geometry(mask, geometry)


def dilate_for_geometry(mask: UpdateMask,
                        geometry: ConvGeometry) -> UpdateMask:
    out_h, out_w = conv_output_shape(mask.height, mask.width, geometry)
    pad, step, dil = geometry.padding, geometry.stride, geometry.dilation

    padded = np.zeros(
        (mask.batch, mask.height + 2 * pad, mask.width + 2 * pad), dtype=bool)
    padded[:, pad:pad + mask.height, pad:pad + mask.width] = mask.bits

    out = np.zeros((mask.batch, out_h, out_w), dtype=bool)
    for ky in range(geometry.kernel_h):
        for kx in range(geometry.kernel_w):
            y0, x0 = ky * dil, kx * dil
            out |= padded[:, y0:y0 + (out_h - 1) * step + 1:step,
                          x0:x0 + (out_w - 1) * step + 1:step]
    return UpdateMask(out)


def mask_dilate_radius(mask: UpdateMask, radius: int) -> UpdateMask:
    """An output bit is true iff an input bit lies within Chebyshev distance
    radius. Pixels beyond the border don't exist, so blocks are clipped.
    """
    if radius < 0:
        raise ValueError(f'dilation radius must be >= 0, got {radius}')
    if radius == 0 or not mask.any():
        return mask.copy()

    structure = np.ones((1, 2 * radius + 1, 2 * radius + 1), dtype=bool)
    return UpdateMask(binary_dilation(mask.bits, structure=structure))


def mask_union(first: UpdateMask, second: UpdateMask) -> UpdateMask:
    if first.shape != second.shape:
        raise ShapeException(
            f'cannot union masks shaped {first.shape} and {second.shape}')
    return UpdateMask(first.bits | second.bits)
