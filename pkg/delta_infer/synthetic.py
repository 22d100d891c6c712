"""Synthetic videos and models for tests, benchmarks and examples."""
import os
from typing import List, Tuple
import numpy as np
from delta_infer.graph.manifest import write_blob, write_manifest
from delta_infer.tensor.core import FeatureTensor, Shape
from delta_infer.tensor.tiles import ConvGeometry, conv_output_shape


def moving_square_video(frames: int,
                        shape: Shape = (1, 64, 64, 1),
                        size: int = 8,
                        speed: int = 1,
                        value: float = 1.0,
                        background: float = 0.0) -> List[FeatureTensor]:
    """A square sliding left to right (wrapping around) over a flat
    background. Only the square's leading and trailing edges change between
    frames.
    """
    batch, height, width, channels = shape
    top = (height - size) // 2
    video = []
    for index in range(frames):
        data = np.full(shape, background, dtype=np.float32)
        left = (index * speed) % max(width - size + 1, 1)
        data[:, top:top + size, left:left + size, :] = value
        video.append(FeatureTensor(data))
    return video


def static_video(frames: int, shape: Shape = (1, 32, 32, 3),
                 seed: int = 0) -> List[FeatureTensor]:
    rng = np.random.RandomState(seed)
    frame = rng.standard_normal(shape).astype(np.float32)
    return [FeatureTensor(frame.copy()) for _ in range(frames)]


def random_video(frames: int,
                 shape: Shape = (1, 32, 32, 3),
                 change_fraction: float = 0.1,
                 seed: int = 0) -> List[FeatureTensor]:
    """Random first frame; afterwards a random subset of pixels takes new
    random values every frame.
    """
    rng = np.random.RandomState(seed)
    current = rng.standard_normal(shape).astype(np.float32)
    video = [FeatureTensor(current.copy())]
    for _ in range(frames - 1):
        changed = rng.random_sample(shape[:3]) < change_fraction
        current[changed] = rng.standard_normal(
            (int(changed.sum()), shape[3])).astype(np.float32)
        video.append(FeatureTensor(current.copy()))
    return video


def drift_jump_video(frames: int,
                     shape: Shape = (1, 16, 16, 1),
                     pixel: Tuple[int, int] = (8, 8),
                     drift: float = 0.01,
                     jump: float = 1.0,
                     period: int = 25,
                     seed: int = 0) -> List[FeatureTensor]:
    """A static random frame whose pixel drifts by a small step every frame
    and jumps by a large step every period frames.
    """
    rng = np.random.RandomState(seed)
    current = rng.standard_normal(shape).astype(np.float32)
    video = []
    row, col = pixel
    for index in range(frames):
        if index:
            step = jump if index % period == 0 else drift
            current[:, row, col, :] += np.float32(step)
        video.append(FeatureTensor(current.copy()))
    return video


class ManifestBuilder:
    """Builds a manifest and its weight blob layer by layer.

    Usage:

    builder = ManifestBuilder('toy', (1, 16, 16, 3))
    builder.conv('conv1', 8, kernel=3, padding=1)
    builder.activation('relu1', 'relu')
    manifest, blob = builder.build()
    """

    def __init__(self,
                 name: str,
                 input_shape: Shape,
                 epsilon: float = 0.0,
                 dilation: int = 0,
                 seed: int = 0) -> None:
        self.rng = np.random.RandomState(seed)
        self.chunks = []
        self.offset = 0
        self.shapes = {}
        self.last = 'input'
        self.manifest = {
            'name': name,
            'input_shape': list(input_shape),
            'weights': 'weights.bin',
            'layers': [],
        }
        self._add({'name': 'input', 'type': 'input', 'epsilon': epsilon,
                   'dilation': dilation}, tuple(input_shape))

    def _add(self, layer: dict, shape: tuple) -> str:
        self.manifest['layers'].append(layer)
        self.shapes[layer['name']] = shape
        self.last = layer['name']
        return layer['name']

    def _inputs(self, inputs: List[str]) -> List[str]:
        return list(inputs) if inputs else [self.last]

    def blob(self, values: np.ndarray) -> dict:
        values = np.asarray(values, dtype=np.float32).reshape(-1)
        ref = {'offset': self.offset, 'length': int(values.size)}
        self.chunks.append(values)
        self.offset += values.size
        return ref

    def shape(self, name: str = None) -> tuple:
        return self.shapes[name or self.last]

    def conv(self,
             name: str,
             out_channels: int,
             kernel: int = 3,
             stride: int = 1,
             dilation: int = 1,
             padding: int = None,
             groups: int = 1,
             bias: bool = True,
             weights: np.ndarray = None,
             tile: List[int] = None,
             inputs: List[str] = None) -> str:
        inputs = self._inputs(inputs)
        batch, height, width, channels = self.shapes[inputs[0]]
        if padding is None:
            padding = dilation * (kernel - 1) // 2
        if weights is None:
            fan_in = kernel * kernel * channels // groups
            weights = self.rng.standard_normal(
                (out_channels, kernel, kernel, channels // groups)) / np.sqrt(
                    fan_in)

        layer = {
            'name': name,
            'type': 'conv',
            'inputs': inputs,
            'out_channels': out_channels,
            'kernel': [kernel, kernel],
            'stride': stride,
            'dilation': dilation,
            'padding': padding,
            'groups': groups,
            'weight': self.blob(weights),
        }
        if bias:
            layer['bias'] = self.blob(
                self.rng.standard_normal(out_channels) * 0.1)
        if tile:
            layer['tile'] = list(tile)

        out_h, out_w = conv_output_shape(
            height, width, ConvGeometry(kernel, kernel, stride, dilation,
                                        padding))
        return self._add(layer, (batch, out_h, out_w, out_channels))

    def batchnorm(self, name: str, inputs: List[str] = None) -> str:
        inputs = self._inputs(inputs)
        channels = self.shapes[inputs[0]][3]
        rng = self.rng
        layer = {
            'name': name,
            'type': 'batchnorm',
            'inputs': inputs,
            'gamma': self.blob(rng.uniform(0.5, 1.5, channels)),
            'beta': self.blob(rng.standard_normal(channels) * 0.1),
            'mean': self.blob(rng.standard_normal(channels) * 0.1),
            'var': self.blob(rng.uniform(0.5, 1.5, channels)),
            'eps': 1e-5,
        }
        return self._add(layer, self.shapes[inputs[0]])

    def affine(self, name: str, inputs: List[str] = None) -> str:
        inputs = self._inputs(inputs)
        channels = self.shapes[inputs[0]][3]
        layer = {
            'name': name,
            'type': 'affine',
            'inputs': inputs,
            'scale': self.blob(self.rng.uniform(0.5, 1.5, channels)),
            'shift': self.blob(self.rng.standard_normal(channels) * 0.1),
        }
        return self._add(layer, self.shapes[inputs[0]])

    def activation(self,
                   name: str,
                   fn: str = 'relu',
                   epsilon: float = 0.0,
                   negative_slope: float = None,
                   inputs: List[str] = None) -> str:
        inputs = self._inputs(inputs)
        layer = {
            'name': name,
            'type': 'activation',
            'inputs': inputs,
            'fn': fn,
            'epsilon': epsilon,
        }
        if negative_slope is not None:
            layer['negative_slope'] = negative_slope
        return self._add(layer, self.shapes[inputs[0]])

    def pool(self,
             name: str,
             kind: str = 'maxpool',
             kernel: int = 2,
             stride: int = None,
             padding: int = 0,
             inputs: List[str] = None) -> str:
        inputs = self._inputs(inputs)
        batch, height, width, channels = self.shapes[inputs[0]]
        layer = {
            'name': name,
            'type': kind,
            'inputs': inputs,
            'kernel': kernel,
            'stride': stride or kernel,
            'padding': padding,
        }
        out_h, out_w = conv_output_shape(
            height, width, ConvGeometry(kernel, kernel, stride or kernel, 1,
                                        padding))
        return self._add(layer, (batch, out_h, out_w, channels))

    def global_pool(self, name: str, inputs: List[str] = None) -> str:
        inputs = self._inputs(inputs)
        batch, _height, _width, channels = self.shapes[inputs[0]]
        layer = {'name': name, 'type': 'globalavgpool', 'inputs': inputs}
        return self._add(layer, (batch, 1, 1, channels))

    def upsample(self,
                 name: str,
                 factor: int = 2,
                 mode: str = 'nearest',
                 inputs: List[str] = None) -> str:
        inputs = self._inputs(inputs)
        batch, height, width, channels = self.shapes[inputs[0]]
        layer = {
            'name': name,
            'type': 'upsample',
            'inputs': inputs,
            'factor': factor,
            'mode': mode,
        }
        return self._add(layer,
                         (batch, height * factor, width * factor, channels))

    def add(self, name: str, inputs: List[str]) -> str:
        layer = {'name': name, 'type': 'add', 'inputs': list(inputs)}
        return self._add(layer, self.shapes[inputs[0]])

    def concat(self, name: str, inputs: List[str]) -> str:
        first = self.shapes[inputs[0]]
        channels = sum(self.shapes[name][3] for name in inputs)
        layer = {'name': name, 'type': 'concat', 'inputs': list(inputs)}
        return self._add(layer, first[:3] + (channels, ))

    def output(self, name: str = 'output', inputs: List[str] = None) -> str:
        inputs = self._inputs(inputs)
        layer = {'name': name, 'type': 'output', 'inputs': inputs}
        return self._add(layer, self.shapes[inputs[0]])

    def build(self) -> Tuple[dict, np.ndarray]:
        """Returns (manifest, blob); adds the output layer if missing."""
        if self.manifest['layers'][-1]['type'] != 'output':
            self.output()
        blob = (np.concatenate(self.chunks) if self.chunks else np.zeros(
            0, dtype=np.float32))
        return self.manifest, blob.astype(np.float32)

    def save(self, directory: str, name: str = 'model.json') -> str:
        """Writes manifest and blob into directory; returns the manifest
        path.
        """
        manifest, blob = self.build()
        manifest_path = os.path.join(directory, name)
        blob_path = os.path.join(directory, manifest['weights'])
        write_blob(blob_path, blob)
        write_manifest(manifest_path, manifest)
        return manifest_path


def conv_stack(depth: int = 10,
               shape: Shape = (1, 64, 64, 1),
               channels: int = 16,
               epsilon: float = 0.0,
               input_epsilon: float = 0.0,
               seed: int = 0) -> Tuple[dict, np.ndarray]:
    """depth 3x3 convolutions, each followed by a ReLU."""
    builder = ManifestBuilder('conv-stack', shape, input_epsilon, seed=seed)
    for index in range(depth):
        builder.conv(f'conv{index}', channels)
        builder.activation(f'relu{index}', 'relu', epsilon)
    return builder.build()


ACTIVATION_FNS = ('relu', 'relu6', 'leaky_relu', 'sigmoid', 'swish',
                  'identity')


def random_graph(layers: int,
                 shape: Shape = (1, 16, 16, 4),
                 seed: int = 0,
                 epsilon: float = 0.0) -> Tuple[dict, np.ndarray]:
    """A random model of roughly the given number of layers, drawn from every
    supported layer kind. Branches (residual additions and concatenations)
    count as one step.
    """
    rng = np.random.RandomState(seed)
    builder = ManifestBuilder(f'random-{seed}', shape, seed=seed)
    kinds = ('conv', 'depthwise', 'batchnorm', 'affine', 'activation',
             'maxpool', 'avgpool', 'upsample', 'residual', 'concat')

    for index in range(layers):
        _batch, height, width, channels = builder.shape()
        kind = kinds[rng.randint(len(kinds))]
        name = f'{kind}{index}'

        if kind in ('maxpool', 'avgpool') and min(height, width) >= 4:
            builder.pool(name, kind, kernel=2 + rng.randint(2), stride=2)
        elif kind == 'upsample' and max(height, width) <= 16:
            builder.upsample(name, 2, ('nearest', 'bilinear')[rng.randint(2)])
        elif kind == 'depthwise':
            builder.conv(name, channels, kernel=3, groups=channels)
        elif kind == 'batchnorm':
            source = builder.conv(f'conv{index}', 2 + rng.randint(6))
            builder.batchnorm(name, [source])
        elif kind == 'affine':
            builder.affine(name)
        elif kind == 'activation':
            fn = ACTIVATION_FNS[rng.randint(len(ACTIVATION_FNS))]
            builder.activation(name, fn, epsilon)
        elif kind == 'residual':
            source = builder.last
            branch = builder.conv(f'{name}_conv', channels, kernel=3)
            builder.add(name, [source, branch])
        elif kind == 'concat':
            source = builder.last
            branch = builder.conv(f'{name}_conv', 2 + rng.randint(4),
                                  kernel=1)
            builder.concat(name, [source, branch])
        else:
            stride = 2 if min(height, width) >= 8 and rng.randint(4) == 0 \
                else 1
            kernel = (1, 3)[rng.randint(2)]
            builder.conv(name, 2 + rng.randint(6), kernel=kernel,
                         stride=stride)

    if rng.randint(3) == 0:
        builder.global_pool('pool_global')
    return builder.build()
