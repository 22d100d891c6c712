import sys
import os
sys.path.append(os.getcwd())

import copy

import numpy as np
import pytest

from delta_infer.graph.model import build_graph, load_model, DENSE_EPSILON
from delta_infer.graph.model import run_frame, reset_buffers
from delta_infer.graph.schema import ManifestValidationException
from delta_infer.oracle import dense_run_frame
from delta_infer.stats import recount_conv
from delta_infer.synthetic import ManifestBuilder, random_graph, random_video
from delta_infer.synthetic import static_video, moving_square_video
from delta_infer.tensor.core import FeatureTensor, ShapeException
from delta_infer.tensor.core import NonFiniteInputException
from delta_infer.utilities import max_relative_deviation


def relative(output, reference):
    return max_relative_deviation(output.data, reference.data)


def test_first_frame_equals_dense(small_graph):
    frame = FeatureTensor(np.random.RandomState(0).standard_normal(
        (1, 12, 12, 2)))
    output, stats = run_frame(small_graph, frame)
    assert relative(output, dense_run_frame(small_graph, frame)) < 1e-5
    assert small_graph.frame_index == 1
    assert stats.frame_index == 0
    assert list(stats.layers) == ['input', 'conv1', 'relu1', 'conv2', 'output']


def test_static_video_skips_everything(stack_graph):
    video = static_video(4, (1, 32, 32, 1))
    outputs = [stack_graph.run_frame(frame) for frame in video]
    first = outputs[0][0]
    for output, stats in outputs[1:]:
        assert np.array_equal(output.data, first.data)
        assert stats.tiles_processed == 0
        assert stats.mac_performed == 0
        assert stats.tiles_total > 0


def test_reset_replays_the_first_frame(stack_graph):
    video = random_video(3, (1, 32, 32, 1), seed=2)
    first, _ = stack_graph.run_frame(video[0])
    for frame in video[1:]:
        stack_graph.run_frame(frame)

    reset_buffers(stack_graph)
    reset_buffers(stack_graph)
    assert stack_graph.frame_index == 0
    again, _ = stack_graph.run_frame(video[0])
    assert np.array_equal(first.data, again.data)


def test_reset_interval(options):
    manifest, blob = random_graph(4, seed=1)
    video = random_video(5, tuple(manifest['input_shape']), seed=1)
    indices = []
    with build_graph(manifest, blob,
                     options._replace(reset_interval=2)) as graph:
        for frame in video:
            _output, stats = graph.run_frame(frame)
            indices.append(stats.frame_index)
    assert indices == [0, 1, 0, 1, 0]


def test_zero_threshold_replay_matches_dense(options):
    manifest, blob = random_graph(8, seed=11)
    with build_graph(manifest, blob, options) as graph:
        for frame in random_video(5, graph.input_shape, 0.2, seed=11):
            output, _stats = graph.run_frame(frame)
            assert relative(output, dense_run_frame(graph, frame)) < 1e-4


def test_poisoned_run_is_clean(poison_options):
    manifest, blob = random_graph(8, seed=12)
    with build_graph(manifest, blob, poison_options) as graph:
        for frame in random_video(4, graph.input_shape, 0.1, seed=12):
            output, _stats = graph.run_frame(frame)
            assert not np.isnan(output.data).any()


def test_moving_square_replay(options):
    builder = ManifestBuilder('square', (1, 32, 32, 1), seed=6)
    builder.conv('conv1', 4)
    builder.activation('relu1')
    builder.pool('pool1', 'maxpool')
    builder.conv('conv2', 4)
    builder.activation('relu2', 'leaky_relu')
    builder.upsample('up1', 2, 'bilinear')
    builder.conv('conv3', 2, kernel=1)
    video = moving_square_video(30, (1, 32, 32, 1), size=6, speed=1,
                                value=1.0, background=0.2)
    worst = 0.0
    with build_graph(*builder.build(), options) as graph:
        for frame in video:
            output, stats = graph.run_frame(frame)
            worst = max(worst,
                        relative(output, dense_run_frame(graph, frame)))
    assert worst < 1e-4
    assert stats.tile_fraction < 1.0


def test_trace_allows_recounting(stack_graph):
    stack_graph.trace = True
    video = moving_square_video(3, (1, 32, 32, 1), size=4)
    for frame in video:
        _output, stats = stack_graph.run_frame(frame)

    for layer in stats.conv_layers():
        record = stack_graph.layer(layer.name)
        entry = stack_graph.last_trace[layer.name]
        assert entry.kind == 'conv'
        recount = recount_conv(entry.input_masks[0], record.conv.geometry,
                               record.tiles, record.conv.in_per_group,
                               record.conv.out_channels)
        assert recount.tiles_dense == layer.tiles_dense
        assert recount.tiles_very_sparse == layer.tiles_very_sparse
        assert recount.mac_performed == layer.mac_performed


def test_dense_mode_processes_every_tile(stack_graph):
    stack_graph.set_dense_mode()
    assert set(stack_graph.epsilons().values()) == {DENSE_EPSILON}
    assert stack_graph.options.tile_mode == 'per_tile'

    video = static_video(3, (1, 32, 32, 1))
    for frame in video:
        output, stats = stack_graph.run_frame(frame)
        assert stats.mac_performed == stats.mac_dense_equivalent
    assert relative(output, dense_run_frame(stack_graph, video[0])) < 1e-4


def test_epsilons(stack_graph):
    names = [layer.name for layer in stack_graph.truncation_layers()]
    assert names == ['relu0', 'relu1', 'relu2', 'relu3']
    assert list(stack_graph.epsilons()) == ['input'] + names

    stack_graph.set_epsilons({'relu0': 0.5, 'input': 0.1})
    assert stack_graph.layer('relu0').epsilon == 0.5
    with pytest.raises(ValueError):
        stack_graph.set_epsilon('conv0', 0.5)
    with pytest.raises(ValueError):
        stack_graph.set_epsilon('relu0', float('nan'))


def test_state_bytes_count_every_cache(options):
    builder = ManifestBuilder('two', (1, 8, 8, 2), seed=4)
    builder.conv('conv1', 4, kernel=3)
    builder.activation('relu1', 'relu')
    with build_graph(*builder.build(), options) as graph:
        _output, stats = graph.run_frame(static_video(1, (1, 8, 8, 2))[0])

    # float32 8x8 maps: input 2 channels, relu accumulated and truncated
    # over 4 channels, output accumulator over 4 channels
    expected = {'input': 8 * 8 * 2 * 4, 'relu1': 2 * 8 * 8 * 4 * 4,
                'output': 8 * 8 * 4 * 4}
    for name, layer in stats.layers.items():
        assert layer.state_bytes == expected.get(name, 0), name
    assert stats.state_bytes == 3584
    assert graph.state_bytes() == 3584
    assert stats.to_dict()['state_bytes'] == 3584


def test_frame_errors(small_graph):
    with pytest.raises(ShapeException):
        small_graph.run_frame(FeatureTensor(np.zeros((1, 8, 8, 2))))
    with pytest.raises(NonFiniteInputException):
        small_graph.run_frame(FeatureTensor(np.full((1, 12, 12, 2), np.inf)))


def test_threads_do_not_change_results(options):
    manifest, blob = random_graph(6, seed=3)
    video = random_video(3, tuple(manifest['input_shape']), 0.3, seed=3)
    threaded_options = options._replace(threads=3)
    with build_graph(manifest, blob, options) as serial, \
            build_graph(manifest, blob, threaded_options) as threaded:
        assert threaded._pool() is not None
        for frame in video:
            a, _ = serial.run_frame(frame)
            b, _ = threaded.run_frame(frame)
            assert np.array_equal(a.data, b.data)
    assert threaded._executor is None


def test_load_model(model_dir, options):
    graph = load_model(model_dir, options)
    assert graph.name == 'saved'
    assert graph.output_shape == (1, 16, 16, 2)


def test_topological_order_follows_references(options):
    builder = ManifestBuilder('branch', (1, 8, 8, 2), seed=1)
    builder.conv('left', 2)
    builder.conv('right', 2, inputs=['input'])
    builder.add('sum', ['left', 'right'])
    manifest, blob = builder.build()

    # listed out of order on purpose
    layers = manifest['layers']
    manifest['layers'] = [layers[0], layers[3], layers[1], layers[2],
                          layers[4]]
    graph = build_graph(manifest, blob, options)
    assert [layer.name for layer in graph.layers] == [
        'input', 'left', 'right', 'sum', 'output'
    ]


def broken(change):
    builder = ManifestBuilder('broken', (1, 8, 8, 2), seed=1)
    builder.conv('conv1', 2)
    builder.activation('relu1')
    manifest, blob = builder.build()
    manifest = copy.deepcopy(manifest)
    change(manifest['layers'])
    return manifest, blob


@pytest.mark.parametrize('change', [
    lambda layers: layers[1].update(inputs=['nowhere']),
    lambda layers: layers[1].update(inputs=['relu1']),
    lambda layers: layers.append({'name': 'out2', 'type': 'output',
                                  'inputs': ['relu1']}),
    lambda layers: layers.insert(0, {'name': 'in2', 'type': 'input'}),
    lambda layers: layers.insert(3, {'name': 'dangling', 'type': 'activation',
                                     'fn': 'relu', 'inputs': ['conv1']}),
    lambda layers: layers.insert(3, {'name': 'lonely', 'type': 'add',
                                     'inputs': ['relu1']}),
    lambda layers: layers[1].update(out_channels=5),
    lambda layers: layers[1].update(kernel=[9, 9], padding=0),
])
def test_broken_graphs_are_rejected(change, options):
    manifest, blob = broken(change)
    with pytest.raises(ManifestValidationException):
        build_graph(manifest, blob, options)
