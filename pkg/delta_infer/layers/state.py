"""Per-layer caches and convolution parameters."""
import numpy as np
from delta_infer.tensor.core import FeatureTensor, ShapeException, Shape
from delta_infer.tensor.tiles import ConvGeometry


class MissingStateException(RuntimeError):
    """Raised when a nonlinear layer runs without its state buffers."""


class LayerState:
    """Caches owned by one nonlinear layer.

    accumulated - x^A, the dense-equivalent input the layer has seen so far
    truncated - x^T, deltas withheld since the pixel's last emitted update;
        only truncation points (activations) carry it
    bias_applied - set once the first (dense) frame went through
    """

    def __init__(self, shape: Shape, truncation: bool = False) -> None:
        self.accumulated = FeatureTensor.zeros(shape)
        self.truncated = FeatureTensor.zeros(shape) if truncation else None
        self.bias_applied = False

    @property
    def shape(self) -> Shape:
        return self.accumulated.shape

    def reset(self) -> None:
        self.accumulated.data[...] = 0.0
        if self.truncated is not None:
            self.truncated.data[...] = 0.0
        self.bias_applied = False

    def check_matches(self, tensor: FeatureTensor) -> None:
        if self.accumulated.shape != tensor.shape:
            raise ShapeException(
                f'state shape {self.accumulated.shape} does not match '
                f'tensor shape {tensor.shape}')

    @property
    def nbytes(self) -> int:
        """Bytes held by the cache buffers."""
        if self.truncated is None:
            return self.accumulated.data.nbytes
        return self.accumulated.data.nbytes + self.truncated.data.nbytes

    def pending(self) -> np.ndarray:
        """x^A + x^T: the input the layer would hold had it never truncated."""
        if self.truncated is None:
            return self.accumulated.data.copy()
        return self.accumulated.data + self.truncated.data


class ConvParams:
    """Convolution hyper-parameters and weights.

    weights - shaped (out_channels, kernel_h, kernel_w, in_channels / groups)
    bias - per output channel, or None
    """

    def __init__(self, weights: np.ndarray, bias: np.ndarray = None,
                 stride: int = 1, dilation: int = 1, padding: int = 0,
                 groups: int = 1, in_channels: int = None) -> None:
        weights = np.ascontiguousarray(weights, dtype=np.float32)
        if weights.ndim != 4:
            raise ShapeException(
                'convolution weights are (out, kh, kw, in/groups), got '
                f'shape {weights.shape}')

        out_channels, kernel_h, kernel_w, in_per_group = weights.shape
        if groups < 1 or out_channels % groups:
            raise ShapeException(
                f'{out_channels} output channels cannot be split into '
                f'{groups} groups')
        if in_channels is None:
            in_channels = in_per_group * groups
        if in_channels % groups or in_channels // groups != in_per_group:
            raise ShapeException(
                f'{in_channels} input channels do not match {groups} groups '
                f'of {in_per_group}')

        if bias is not None:
            bias = np.ascontiguousarray(bias, dtype=np.float32).reshape(-1)
            if bias.shape != (out_channels, ):
                raise ShapeException(
                    f'bias has {bias.size} entries for {out_channels} '
                    'output channels')

        self.weights = weights
        self.bias = bias
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.groups = groups
        self.geometry = ConvGeometry(kernel_h, kernel_w, stride, dilation,
                                     padding)
        # Validates stride/dilation/padding eagerly.
        if stride < 1 or dilation < 1 or padding < 0:
            raise ShapeException(
                f'invalid stride {stride}, dilation {dilation} or padding '
                f'{padding}')

        out_per_group = out_channels // groups
        group_of = np.arange(out_channels) // out_per_group
        # input channel read by output channel o for local channel c
        self.in_index = (group_of[:, None] * in_per_group +
                         np.arange(in_per_group)[None, :])

    @property
    def kernel_h(self) -> int:
        return self.geometry.kernel_h

    @property
    def kernel_w(self) -> int:
        return self.geometry.kernel_w

    @property
    def stride(self) -> int:
        return self.geometry.stride

    @property
    def dilation(self) -> int:
        return self.geometry.dilation

    @property
    def padding(self) -> int:
        return self.geometry.padding

    @property
    def in_per_group(self) -> int:
        return self.weights.shape[3]

    @property
    def depthwise(self) -> bool:
        return (self.groups > 1 and self.groups == self.in_channels
                and self.groups == self.out_channels)

    def input_slice(self, local_channel: int):
        """Index selecting, for every output channel, the input channel it
        multiplies with weights[:, ky, kx, local_channel]. A plain slice when
        every output reads the same input channel.
        """
        if self.groups == 1:
            return slice(local_channel, local_channel + 1)
        if self.depthwise:
            return slice(None)
        return self.in_index[:, local_channel]
