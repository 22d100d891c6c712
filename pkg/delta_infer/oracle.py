"""Dense reference execution.

Every layer is evaluated from scratch on every frame: no masks, no state,
biases on every frame. The implementations are deliberately direct so they
can be checked by reading them. Convolutions accumulate in float64 and
round to float32 per layer; everything else works in float32.
"""
import numpy as np
from delta_infer.graph.model import ModelGraph, LayerRecord
from delta_infer.layers.activation import activation_function
from delta_infer.layers.state import ConvParams
from delta_infer.layers.upsample import bilinear_axis
from delta_infer.tensor.core import FeatureTensor, ShapeException
from delta_infer.tensor.tiles import ConvGeometry, conv_output_shape


def dense_conv2d(x: FeatureTensor,
                 params: ConvParams,
                 with_bias: bool = True) -> FeatureTensor:
    """Direct convolution. For every kernel tap, in row then column order, the
    shifted input is multiplied into the output group by group.
    """
    if x.channels != params.in_channels:
        raise ShapeException(
            f'input has {x.channels} channels, convolution expects '
            f'{params.in_channels}')

    geometry = params.geometry
    batch, height, width, _ = x.shape
    out_h, out_w = conv_output_shape(height, width, geometry)
    pad, step, dil = geometry.padding, geometry.stride, geometry.dilation

    padded = np.zeros((batch, height + 2 * pad, width + 2 * pad,
                       params.in_channels),
                      dtype=np.float64)
    padded[:, pad:pad + height, pad:pad + width] = x.data

    groups = params.groups
    in_g = params.in_per_group
    out_g = params.out_channels // groups
    weights = params.weights.astype(np.float64)
    out = np.zeros((batch, out_h, out_w, params.out_channels),
                   dtype=np.float64)

    for ky in range(geometry.kernel_h):
        for kx in range(geometry.kernel_w):
            window = padded[:, ky * dil:ky * dil + (out_h - 1) * step + 1:step,
                            kx * dil:kx * dil + (out_w - 1) * step + 1:step]
            for group in range(groups):
                source = window[..., group * in_g:(group + 1) * in_g]
                kernel = weights[group * out_g:(group + 1) * out_g, ky, kx]
                out[..., group * out_g:(group + 1) * out_g] += np.tensordot(
                    source, kernel, axes=([3], [1]))

    if with_bias and params.bias is not None:
        out += params.bias
    return FeatureTensor(out.astype(np.float32))


def dense_pool(x: FeatureTensor, kind: str, kernel: int, stride: int = None,
               padding: int = 0) -> FeatureTensor:
    """Max or average pooling. Average windows divide by the full window area,
    padding included.
    """
    stride = stride or kernel
    geometry = ConvGeometry(kernel, kernel, stride, 1, padding)
    batch, height, width, channels = x.shape
    out_h, out_w = conv_output_shape(height, width, geometry)

    fill = -np.inf if kind == 'max' else 0.0
    padded = np.full((batch, height + 2 * padding, width + 2 * padding,
                      channels),
                     fill,
                     dtype=np.float32)
    padded[:, padding:padding + height, padding:padding + width] = x.data

    windows = [
        padded[:, ky:ky + (out_h - 1) * stride + 1:stride,
               kx:kx + (out_w - 1) * stride + 1:stride]
        for ky in range(kernel) for kx in range(kernel)
    ]
    if kind == 'max':
        return FeatureTensor(np.max(windows, axis=0))
    total = np.sum(windows, axis=0, dtype=np.float64)
    return FeatureTensor((total / (kernel * kernel)).astype(np.float32))


def dense_upsample(x: FeatureTensor, factor: int,
                   mode: str = 'nearest') -> FeatureTensor:
    if mode == 'nearest':
        return FeatureTensor(
            x.data.repeat(factor, axis=1).repeat(factor, axis=2))

    y0, y1, wy = bilinear_axis(x.height, factor)
    x0, x1, wx = bilinear_axis(x.width, factor)
    wy = wy[None, :, None, None]
    wx = wx[None, None, :, None]
    one = np.float32(1.0)
    rows0, rows1 = x.data[:, y0], x.data[:, y1]
    top = (one - wx) * rows0[:, :, x0] + wx * rows0[:, :, x1]
    bottom = (one - wx) * rows1[:, :, x0] + wx * rows1[:, :, x1]
    return FeatureTensor((one - wy) * top + wy * bottom)


def dense_layer(layer: LayerRecord, inputs: list,
                frame: FeatureTensor) -> FeatureTensor:
    """Evaluates one layer on dense inputs."""
    kind = layer.kind
    if kind == 'input':
        return frame.copy()

    x = inputs[0]
    if kind == 'conv':
        return dense_conv2d(x, layer.conv)
    if kind in ('batchnorm', 'affine'):
        return FeatureTensor(x.data * layer.scale + layer.shift)
    if kind == 'activation':
        func = activation_function(layer.get('fn'),
                                   layer.get('negative_slope', 0.01))
        return FeatureTensor(func(x.data))
    if kind in ('maxpool', 'avgpool'):
        return dense_pool(x, kind[:3], layer.get('kernel'),
                          layer.get('stride'), layer.get('padding', 0))
    if kind == 'globalavgpool':
        mean = x.data.sum(axis=(1, 2), keepdims=True, dtype=np.float64)
        return FeatureTensor(mean / (x.height * x.width))
    if kind == 'upsample':
        return dense_upsample(x, layer.get('factor'),
                              layer.get('mode', 'nearest'))
    if kind == 'add':
        total = x.data.copy()
        for other in inputs[1:]:
            total += other.data
        return FeatureTensor(total)
    if kind == 'concat':
        return FeatureTensor(
            np.concatenate([tensor.data for tensor in inputs], axis=3))
    if kind == 'output':
        return x.copy()

    raise ValueError(f'unknown layer type {kind}')


def dense_run_frame(graph: ModelGraph, frame: FeatureTensor) -> FeatureTensor:
    """Stateless dense evaluation of the graph on one frame."""
    if not isinstance(frame, FeatureTensor):
        frame = FeatureTensor(frame)
    if frame.shape != graph.input_shape:
        raise ShapeException(
            f'frame shape {frame.shape} does not match model input '
            f'{graph.input_shape}')
    frame.check_finite()

    values = {}
    for layer in graph.layers:
        inputs = [values[name] for name in layer.inputs]
        values[layer.name] = dense_layer(layer, inputs, frame)
    return values[graph.output_layer.name]


def dense_run(graph: ModelGraph, frames: list) -> list:
    return [dense_run_frame(graph, frame) for frame in frames]
