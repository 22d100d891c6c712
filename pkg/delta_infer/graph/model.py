"""Model graphs: building them from manifests and running frames through them.

The first frame after construction or a reset runs as a delta against a zero
baseline with every pixel active and biases enabled, which fills every state
buffer; the sparse code path is the only code path. Every later frame
propagates sparse deltas end to end.
"""
import math
import time
from collections import OrderedDict, namedtuple
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Tuple
import numpy as np
from delta_infer.config import EngineOptions, engine_options
from delta_infer.graph.folding import batchnorm_affine, fold_batchnorm
from delta_infer.graph.manifest import blob_slice, load_manifest
from delta_infer.graph.schema import ManifestValidationException
from delta_infer.layers.activation import activate_truncate
from delta_infer.layers.conv import sparse_conv2d
from delta_infer.layers.elementwise import sparse_affine, sparse_add
from delta_infer.layers.elementwise import sparse_concat, dense_accumulate
from delta_infer.layers.generate import delta_generate
from delta_infer.layers.pooling import sparse_pool
from delta_infer.layers.state import ConvParams, LayerState
from delta_infer.layers.upsample import sparse_upsample
from delta_infer.logging import logging
from delta_infer.stats import RunStats
from delta_infer.tensor.core import FeatureTensor, UpdateMask, ShapeException
from delta_infer.tensor.tiles import TileSpec, conv_output_shape, ConvGeometry
from delta_infer.translation import _

LOGGER = logging.getLogger('delta_infer')

# Any negative epsilon means never truncate; this is the one dense mode uses.
DENSE_EPSILON = -1.0

# Layers that emit only part of their active pixels.
TRUNCATING_KINDS = ('input', 'activation')

# kind - the layer type
# input_masks - masks the layer received, in input order
# output_mask - the mask it produced
TraceEntry = namedtuple('TraceEntry', 'kind input_masks output_mask')


class LayerRecord:
    """One node of a model graph.

    inputs - names of the producing layers
    entry - the layer's manifest entry
    shape - the output shape, filled in by shape inference
    conv - ConvParams for convolutions
    tiles - TileSpec for convolutions
    scale/shift - per-channel affine for batch norm and affine layers
    state - LayerState for layers that need one
    """

    def __init__(self, entry: dict, inputs: List[str]) -> None:
        self.name = entry['name']
        self.kind = entry['type']
        self.inputs = inputs
        self.entry = entry
        self.epsilon = None
        if self.kind in TRUNCATING_KINDS:
            self.epsilon = float(entry.get('epsilon', 0.0))
        self.shape = None
        self.conv = None
        self.tiles = None
        self.scale = None
        self.shift = None
        self.state = None

    def get(self, field: str, default=None):
        return self.entry.get(field, default)

    @property
    def truncates(self) -> bool:
        return self.kind in TRUNCATING_KINDS

    def __repr__(self) -> str:
        return f'LayerRecord({self.name}, {self.kind}, {self.shape})'


class ModelGraph:
    """An executable model with the state of one video stream.

    One graph serves one stream. Concurrent streams need separate graphs and
    calls to run_frame must not overlap.
    """

    def __init__(self,
                 name: str,
                 input_shape: Tuple[int, int, int, int],
                 layers: List[LayerRecord],
                 options: EngineOptions = None,
                 manifest: dict = None) -> None:
        self.name = name
        self.input_shape = tuple(input_shape)
        self.layers = layers
        self.options = options or engine_options()
        self.manifest = manifest
        self.frame_index = 0
        self.trace = False
        self.last_trace = OrderedDict()
        self._by_name = {layer.name: layer for layer in layers}
        self._executor = None
        self._last_use = _last_uses(layers)

    def layer(self, name: str) -> LayerRecord:
        return self._by_name[name]

    @property
    def output_layer(self) -> LayerRecord:
        return self.layers[-1]

    @property
    def output_shape(self) -> Tuple[int, int, int, int]:
        return self.output_layer.shape

    def truncation_layers(self) -> List[LayerRecord]:
        """Activation layers in execution order; the thresholds the tuner
        works on. The input threshold is set by hand.
        """
        return [layer for layer in self.layers if layer.kind == 'activation']

    def epsilons(self) -> 'OrderedDict[str, float]':
        return OrderedDict((layer.name, layer.epsilon)
                           for layer in self.layers if layer.truncates)

    def set_epsilon(self, name: str, epsilon: float) -> None:
        layer = self.layer(name)
        if not layer.truncates:
            raise ValueError(
                _('layer {name} has no truncation threshold').format(
                    name=name))
        if not math.isfinite(epsilon):
            raise ValueError(
                _('epsilon for {name} must be finite').format(name=name))
        layer.epsilon = float(epsilon)

    def set_epsilons(self, epsilons: Dict[str, float]) -> None:
        for name, epsilon in epsilons.items():
            self.set_epsilon(name, epsilon)

    def set_dense_mode(self) -> None:
        """Never truncate and process every tile densely, so the engine does
        the same work a dense engine would.
        """
        for layer in self.layers:
            if layer.truncates:
                layer.epsilon = DENSE_EPSILON
        self.options = self.options._replace(tile_mode='per_tile')

    def state_bytes(self) -> int:
        """Bytes held by every layer cache of this stream."""
        return sum(layer.state.nbytes for layer in self.layers
                   if layer.state is not None)

    def reset_buffers(self) -> None:
        """Zeroes every state; the next frame runs densely again."""
        for layer in self.layers:
            if layer.state is not None:
                layer.state.reset()
        self.frame_index = 0
        self.last_trace = OrderedDict()

    def run_frame(self, frame: FeatureTensor) -> Tuple[FeatureTensor,
                                                       RunStats]:
        """Propagates one frame and returns the dense output and its stats."""
        if not isinstance(frame, FeatureTensor):
            frame = FeatureTensor(frame)
        if frame.shape != self.input_shape:
            raise ShapeException(
                _('frame shape {got} does not match model input {want}').format(
                    got=frame.shape, want=self.input_shape))

        interval = self.options.reset_interval
        if interval and self.frame_index >= interval:
            LOGGER.debug('%s: resetting buffers after %d frames', self.name,
                         self.frame_index)
            self.reset_buffers()

        first_frame = self.frame_index == 0
        stats = RunStats(self.frame_index)
        if self.trace:
            self.last_trace = OrderedDict()

        started = time.perf_counter()
        values = {}
        output = None
        for position, layer in enumerate(self.layers):
            inputs = [values[name] for name in layer.inputs]
            if layer.kind == 'output':
                delta, mask = inputs[0]
                output = dense_accumulate(delta, mask, layer.state, stats,
                                          layer.name)
                result = inputs[0]
            else:
                result = self._execute(layer, inputs, frame, first_frame,
                                       stats)
            values[layer.name] = result
            if layer.state is not None:
                stats.layer(layer.name,
                            layer.kind).state_bytes = layer.state.nbytes

            if self.trace:
                self.last_trace[layer.name] = TraceEntry(
                    layer.kind, [mask for _delta, mask in inputs], result[1])
            for name in self._last_use.get(position, ()):
                del values[name]

        stats.wall_time = time.perf_counter() - started
        self.frame_index += 1

        if LOGGER.isEnabledFor(logging.DEBUG):
            for layer in stats.conv_layers():
                LOGGER.debug('%s: %d skipped, %d very sparse, %d dense tiles',
                             layer.name, layer.tiles_skipped,
                             layer.tiles_very_sparse, layer.tiles_dense)

        return output, stats

    def _execute(self, layer: LayerRecord, inputs: list, frame: FeatureTensor,
                 first_frame: bool,
                 stats: RunStats) -> Tuple[FeatureTensor, UpdateMask]:
        poison = self.options.poison
        kind = layer.kind

        if kind == 'input':
            return delta_generate(frame, layer.state, layer.epsilon,
                                  layer.get('dilation', 0), first_frame,
                                  poison, stats, layer.name)

        delta, mask = inputs[0]
        if kind == 'conv':
            return sparse_conv2d(delta, mask, layer.conv, layer.tiles,
                                 first_frame, stats, layer.name, self.options,
                                 self._pool())
        if kind in ('batchnorm', 'affine'):
            return sparse_affine(delta, mask, layer.scale, layer.shift,
                                 first_frame, poison, stats, layer.name)
        if kind == 'activation':
            return activate_truncate(delta, mask, layer.state, layer.epsilon,
                                     layer.get('fn'),
                                     layer.get('negative_slope', 0.01),
                                     first_frame, poison, stats, layer.name)
        if kind in ('maxpool', 'avgpool'):
            return sparse_pool(delta, mask, layer.state, kind[:3],
                               layer.get('kernel'), layer.get('stride'),
                               layer.get('padding', 0), first_frame, poison,
                               stats, layer.name)
        if kind == 'globalavgpool':
            return sparse_pool(delta, mask, kind='global_avg', poison=poison,
                               stats=stats, name=layer.name)
        if kind == 'upsample':
            return sparse_upsample(delta, mask, layer.get('factor'),
                                   layer.get('mode', 'nearest'), poison,
                                   stats, layer.name)
        if kind == 'add':
            for position, (other, other_mask) in enumerate(inputs[1:], 2):
                delta, mask = sparse_add(
                    delta, mask, other, other_mask, poison,
                    stats if position == len(inputs) else None, layer.name)
            return delta, mask
        if kind == 'concat':
            return sparse_concat(inputs, poison, stats, layer.name)

        raise ManifestValidationException(
            _('unknown layer type {kind}').format(kind=kind))

    def _pool(self) -> ThreadPoolExecutor:
        if self.options.threads <= 1:
            return None
        if self._executor is None:
            self._executor = ThreadPoolExecutor(
                max_workers=self.options.threads)
        return self._executor

    def close(self) -> None:
        if self._executor is not None:
            self._executor.shutdown()
            self._executor = None

    def __enter__(self) -> 'ModelGraph':
        return self

    def __exit__(self, *_exc) -> None:
        self.close()


def _last_uses(layers: List[LayerRecord]) -> Dict[int, List[str]]:
    """Maps a layer position to the values that are dead once it ran."""
    last = {}
    for position, layer in enumerate(layers):
        for name in layer.inputs:
            last[name] = position
    uses = {}
    for name, position in last.items():
        uses.setdefault(position, []).append(name)
    return uses


def _topological_order(records: List[LayerRecord]) -> List[LayerRecord]:
    """Kahn's algorithm; ready layers run in manifest order."""
    by_name = {record.name: record for record in records}
    for record in records:
        for name in record.inputs:
            if name not in by_name:
                raise ManifestValidationException(
                    _('layer {layer} references unknown layer {name}').format(
                        layer=record.name, name=name))

    waiting = {record.name: len(set(record.inputs)) for record in records}
    consumers = {record.name: [] for record in records}
    for record in records:
        for name in set(record.inputs):
            consumers[name].append(record.name)

    ordered, done = [], set()
    while len(ordered) < len(records):
        ready = [
            r for r in records if r.name not in done and not waiting[r.name]
        ]
        if not ready:
            raise ManifestValidationException(_('layer graph has a cycle'))
        record = ready[0]
        ordered.append(record)
        done.add(record.name)
        for name in consumers[record.name]:
            waiting[name] -= 1
    return ordered


def _check_structure(ordered: List[LayerRecord]) -> None:
    inputs = [r for r in ordered if r.kind == 'input']
    outputs = [r for r in ordered if r.kind == 'output']
    if len(inputs) != 1 or inputs[0].inputs:
        raise ManifestValidationException(
            _('a model needs exactly one input layer without inputs'))
    if len(outputs) != 1 or ordered[-1] is not outputs[0]:
        raise ManifestValidationException(
            _('a model needs exactly one output layer, consumed by nothing'))

    consumed = {name for record in ordered for name in record.inputs}
    for record in ordered:
        if record.kind != 'output' and record.name not in consumed:
            raise ManifestValidationException(
                _('layer {name} is never consumed').format(name=record.name))

        count = len(record.inputs)
        if record.kind == 'add' and count < 2:
            raise ManifestValidationException(
                _('add layer {name} needs at least two inputs').format(
                    name=record.name))
        if record.kind == 'concat' and count < 1:
            raise ManifestValidationException(
                _('concat layer {name} needs inputs').format(
                    name=record.name))
        if record.kind not in ('input', 'add', 'concat') and count != 1:
            raise ManifestValidationException(
                _('layer {name} takes exactly one input').format(
                    name=record.name))


def _channel_blob(record: LayerRecord, blob: np.ndarray, field: str,
                  channels: int) -> np.ndarray:
    values = blob_slice(blob, record.entry[field])
    if values.size != channels:
        raise ManifestValidationException(
            _('layer {name}: {field} holds {got} values for {want} '
              'channels').format(name=record.name,
                                 field=field,
                                 got=values.size,
                                 want=channels))
    return values.astype(np.float32)


def _conv_params(record: LayerRecord, blob: np.ndarray,
                 in_channels: int) -> ConvParams:
    kernel = record.get('kernel')
    kernel_h, kernel_w = kernel if isinstance(kernel, list) else (kernel,
                                                                   kernel)
    groups = record.get('groups', 1)
    out_channels = record.get('out_channels')
    if in_channels % groups:
        raise ShapeException(
            f'{in_channels} input channels cannot be split into {groups} '
            'groups')

    weights = blob_slice(blob, record.entry['weight'])
    expected = out_channels * kernel_h * kernel_w * (in_channels // groups)
    if weights.size != expected:
        raise ShapeException(
            f'weight holds {weights.size} values, expected {expected}')

    bias = None
    if 'bias' in record.entry:
        bias = _channel_blob(record, blob, 'bias', out_channels)

    return ConvParams(weights.reshape(out_channels, kernel_h, kernel_w,
                                      in_channels // groups),
                      bias,
                      stride=record.get('stride', 1),
                      dilation=record.get('dilation', 1),
                      padding=record.get('padding', 0),
                      groups=groups,
                      in_channels=in_channels)


def _infer(record: LayerRecord, shapes: List[tuple], input_shape: tuple,
           blob: np.ndarray) -> tuple:
    """Output shape of one layer; also materializes its parameters."""
    kind = record.kind
    if kind == 'input':
        return input_shape

    batch, height, width, channels = shapes[0]
    if kind == 'conv':
        record.conv = _conv_params(record, blob, channels)
        tile = record.get('tile')
        record.tiles = (TileSpec(*tile) if tile else TileSpec.default_for(
            record.conv.geometry))
        out_h, out_w = conv_output_shape(height, width, record.conv.geometry)
        return (batch, out_h, out_w, record.conv.out_channels)
    if kind == 'batchnorm':
        record.scale, record.shift = batchnorm_affine(
            *(_channel_blob(record, blob, field, channels)
              for field in ('gamma', 'beta', 'mean', 'var')),
            eps=record.get('eps', 1e-5))
        return shapes[0]
    if kind == 'affine':
        record.scale = _channel_blob(record, blob, 'scale', channels)
        record.shift = _channel_blob(record, blob, 'shift', channels)
        return shapes[0]
    if kind in ('activation', 'output'):
        return shapes[0]
    if kind in ('maxpool', 'avgpool'):
        kernel = record.get('kernel')
        padding = record.get('padding', 0)
        if padding * 2 > kernel:
            raise ShapeException(
                f'padding {padding} too large for window {kernel}')
        geometry = ConvGeometry(kernel, kernel,
                                record.get('stride') or kernel, 1, padding)
        out_h, out_w = conv_output_shape(height, width, geometry)
        return (batch, out_h, out_w, channels)
    if kind == 'globalavgpool':
        return (batch, 1, 1, channels)
    if kind == 'upsample':
        factor = record.get('factor')
        return (batch, height * factor, width * factor, channels)
    if kind == 'add':
        for shape in shapes[1:]:
            if shape != shapes[0]:
                raise ShapeException(
                    f'cannot add tensors shaped {shapes[0]} and {shape}')
        return shapes[0]
    if kind == 'concat':
        for shape in shapes[1:]:
            if shape[:3] != shapes[0][:3]:
                raise ShapeException(
                    f'cannot concatenate spatial shapes {shapes[0][:3]} and '
                    f'{shape[:3]}')
        return shapes[0][:3] + (sum(shape[3] for shape in shapes), )

    raise ShapeException(f'unknown layer type {kind}')


def _fold_batchnorms(ordered: List[LayerRecord],
                     blob: np.ndarray) -> List[LayerRecord]:
    """Folds every batch norm whose only input is a convolution that feeds
    nothing else. Consumers of a folded batch norm read the convolution.
    """
    consumers = {}
    for record in ordered:
        for name in record.inputs:
            consumers.setdefault(name, []).append(record)

    by_name = {record.name: record for record in ordered}
    aliases, kept = {}, []
    for record in ordered:
        if record.kind == 'batchnorm':
            source = by_name[record.inputs[0]]
            if source.kind == 'conv' and len(consumers[source.name]) == 1:
                entry = record.entry
                gamma, beta, mean, var = (blob_slice(blob, entry[field])
                                          for field in ('gamma', 'beta',
                                                        'mean', 'var'))
                source.conv = fold_batchnorm(source.conv, gamma, beta, mean,
                                             var, entry.get('eps', 1e-5))
                aliases[record.name] = source.name
                LOGGER.debug('folded batch norm %s into %s', record.name,
                             source.name)
                continue
        kept.append(record)

    for record in kept:
        record.inputs = [aliases.get(name, name) for name in record.inputs]
    return kept


def _allocate_state(record: LayerRecord, in_shape: tuple) -> None:
    if record.kind in ('input', 'maxpool'):
        record.state = LayerState(in_shape)
    elif record.kind == 'activation':
        record.state = LayerState(in_shape, truncation=True)
    elif record.kind == 'output':
        record.state = LayerState(record.shape)


def build_graph(manifest: dict,
                blob: np.ndarray,
                options: EngineOptions = None,
                fold: bool = True) -> ModelGraph:
    """Builds a graph from an already validated manifest and its blob.

    With fold=False batch norms stay separate affine layers, which is what a
    test comparing folded and unfolded execution needs.
    """
    records, previous = [], None
    for entry in manifest['layers']:
        inputs = entry.get('inputs')
        if inputs is None:
            inputs = [] if previous is None or entry['type'] == 'input' else [
                previous
            ]
        records.append(LayerRecord(entry, list(inputs)))
        previous = entry['name']

    ordered = _topological_order(records)
    _check_structure(ordered)

    shapes = {}
    input_shape = tuple(manifest['input_shape'])
    for record in ordered:
        try:
            record.shape = _infer(record,
                                  [shapes[name] for name in record.inputs],
                                  input_shape, blob)
        except ShapeException as error:
            raise ManifestValidationException(
                _('layer {name}: {error}').format(name=record.name,
                                                   error=error)) from error
        shapes[record.name] = record.shape

    if fold:
        ordered = _fold_batchnorms(ordered, blob)

    for record in ordered:
        in_shape = shapes[record.inputs[0]] if record.inputs else input_shape
        _allocate_state(record, in_shape)

    return ModelGraph(manifest['name'], input_shape, ordered, options,
                      manifest)


def load_model(manifest_path: str,
               options: EngineOptions = None,
               fold: bool = True) -> ModelGraph:
    """Loads a manifest and its weights into a ready-to-run graph."""
    manifest, blob = load_manifest(manifest_path)
    graph = build_graph(manifest, blob, options, fold)
    LOGGER.debug('loaded %s: %d layers, input %s', graph.name,
                  len(graph.layers), graph.input_shape)
    return graph


def run_frame(graph: ModelGraph,
              frame: FeatureTensor) -> Tuple[FeatureTensor, RunStats]:
    return graph.run_frame(frame)


def reset_buffers(graph: ModelGraph) -> None:
    graph.reset_buffers()
