import sys
import os
sys.path.append(os.getcwd())

import pytest

from delta_infer.graph.model import build_graph
from delta_infer.graph.schema import SchemaValidationException
from delta_infer.reports import ReportSchema, bench_report, compare_report
from delta_infer.reports import drift_slope, read_report, run_report
from delta_infer.reports import strip_timing, tune_report, validate_report
from delta_infer.reports import write_report
from delta_infer.synthetic import conv_stack, moving_square_video
from delta_infer.tuner import Tuner, TuneConfig
from delta_infer.version import VERSION


def stats_for(options, frames=3):
    video = moving_square_video(frames, (1, 16, 16, 1), size=4)
    with build_graph(*conv_stack(2, (1, 16, 16, 1), channels=4),
                     options) as graph:
        return [graph.run_frame(frame)[1] for frame in video]


def test_run_report(options):
    frames = stats_for(options)
    report = run_report('conv-stack', frames)
    validate_report(report)

    assert report['command'] == 'run'
    assert report['version'] == VERSION
    assert report['frames'] == 3
    assert len(report['per_frame']) == 3
    aggregate = report['aggregate']
    assert aggregate['mac_performed'] == sum(f.mac_performed for f in frames)
    assert aggregate['mac_counter'] == aggregate['mac_performed']
    assert 0 < aggregate['tile_fraction'] <= 1
    assert [layer['name'] for layer in report['layers']] == [
        'input', 'conv0', 'relu0', 'conv1', 'relu1', 'output'
    ]
    assert aggregate['state_bytes'] == frames[0].state_bytes > 0
    assert report['layers'][2]['state_bytes'] == 2 * 16 * 16 * 4 * 4


def test_compare_report():
    report = compare_report('toy', [0.0, 1e-6, 2e-6], [0.0, 1e-7, 1e-7])
    validate_report(report)
    assert report['max_relative_deviation'] == 2e-6
    assert report['drift_slope'] == pytest.approx(1e-6)
    assert report['per_frame'][1]['mean_relative_deviation'] == 1e-7


def test_drift_slope():
    assert drift_slope([]) == 0.0
    assert drift_slope([3.0]) == 0.0
    assert drift_slope([1.0, 1.0, 1.0]) == pytest.approx(0.0)
    assert drift_slope([0.0, 2.0, 4.0, 6.0]) == pytest.approx(2.0)


def test_bench_report():
    report = bench_report('toy', 10, 2, 3, 5.0, 20.0)
    validate_report(report)
    assert report['speedup'] == 4.0
    assert 'dense_mode_fps' not in report

    report = bench_report('toy', 10, 2, 3, 5.0, 20.0, dense_mode_fps=10.0)
    validate_report(report)
    assert report['dense_mode_speedup'] == 2.0
    assert 'state_bytes' not in report

    report = bench_report('toy', 10, 2, 3, 5.0, 20.0, state_bytes=4096)
    validate_report(report)
    assert report['state_bytes'] == 4096
    assert bench_report('toy', 1, 0, 1, 0.0, 1.0)['speedup'] == 0.0


def test_tune_report(options):
    with build_graph(*conv_stack(2, (1, 16, 16, 1), channels=4),
                     options) as graph:
        tuner = Tuner(graph,
                      TuneConfig(start_epsilon=0.01, max_epsilon=0.04),
                      sequences=[moving_square_video(3, (1, 16, 16, 1),
                                                     size=4)])
        tuner.tune()
        report = tune_report(graph.name, tuner.report())
    validate_report(report)
    assert report['model'] == 'conv-stack'
    assert report['config']['max_epsilon'] == 0.04
    assert [layer['name'] for layer in report['layers']] == ['relu0', 'relu1']


def test_malformed_reports():
    with pytest.raises(SchemaValidationException):
        validate_report({'command': 'run', 'model': 'x'})
    with pytest.raises(SchemaValidationException):
        validate_report({'command': 'launch', 'model': 'x', 'version': '1',
                         'created': 'now'})

    report = compare_report('toy', [0.0], [0.0])
    report['per_frame'][0]['frame'] = 'first'
    problems = ReportSchema(report).problems()
    assert problems == ['field per_frame failed validation']


def test_strip_timing(options):
    first = run_report('toy', stats_for(options))
    second = run_report('toy', stats_for(options))
    assert 'created' not in strip_timing(first)
    assert 'wall_time' not in strip_timing(first)['per_frame'][0]
    assert strip_timing(first) == strip_timing(second)


def test_write_and_read(tmp_path):
    path = str(tmp_path / 'report.json')
    report = bench_report('toy', 4, 1, 1, 2.0, 3.0)
    write_report(path, report)
    assert read_report(path) == report

    with pytest.raises(SchemaValidationException):
        write_report(path, {'command': 'bench'})
