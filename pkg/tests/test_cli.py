import sys
import os
sys.path.append(os.getcwd())

import numpy as np
import pytest
from click.testing import CliRunner

from delta_infer.cli import cli
from delta_infer.graph.manifest import load_manifest
from delta_infer.graph.model import load_model
from delta_infer.ingest import write_frames
from delta_infer.reports import read_report, validate_report
from delta_infer.synthetic import moving_square_video
from delta_infer.tensor.container import read_tensor
from delta_infer.version import VERSION


@pytest.fixture
def video_path(tmp_path):
    path = str(tmp_path / 'video.dct')
    write_frames(path, moving_square_video(4, (1, 16, 16, 1), size=4))
    return path


def invoke(*args):
    return CliRunner().invoke(cli, [str(arg) for arg in args])


def test_version():
    result = invoke('--version')
    assert result.exit_code == 0
    assert VERSION in result.output


def test_run(tmp_path, model_dir, video_path):
    out = tmp_path / 'out'
    result = invoke('run', '--model', model_dir, '--frames', video_path,
                    '--out', out)
    assert result.exit_code == 0, result.output
    assert '4 frames' in result.output

    outputs = sorted(name for name in os.listdir(str(out))
                     if name.endswith('.dct'))
    assert outputs == [f'frame_{i:05d}.dct' for i in range(4)]
    assert read_tensor(str(out / outputs[0])).shape == (1, 16, 16, 2)

    report = read_report(str(out / 'report.json'))
    validate_report(report)
    assert report['command'] == 'run'
    assert report['model'] == 'saved'
    assert report['frames'] == 4


def test_run_dense_gives_the_same_outputs(tmp_path, model_dir, video_path):
    for name, extra in (('delta', []), ('dense', ['--dense'])):
        result = invoke('run', '--model', model_dir, '--frames', video_path,
                        '--out', tmp_path / name, *extra)
        assert result.exit_code == 0, result.output

    delta = read_tensor(str(tmp_path / 'delta' / 'frame_00003.dct'))
    dense = read_tensor(str(tmp_path / 'dense' / 'frame_00003.dct'))
    assert np.allclose(delta.data, dense.data, atol=1e-4)
    report = read_report(str(tmp_path / 'dense' / 'report.json'))
    assert report['aggregate']['mac_fraction'] == 1.0


def test_compare(tmp_path, model_dir, video_path):
    out = str(tmp_path / 'compare.json')
    result = invoke('compare', '--model', model_dir, '--frames', video_path,
                    '--out', out, '--threads', 2)
    assert result.exit_code == 0, result.output
    assert 'max relative deviation' in result.output

    report = read_report(out)
    assert report['frames'] == 4
    assert report['max_relative_deviation'] < 1e-4


def test_tune(tmp_path, model_dir, video_path):
    out = str(tmp_path / 'tuned.json')
    result = invoke('tune', '--model', model_dir, '--frames', video_path,
                    '--frames', video_path, '--budget', 0.05,
                    '--max-epsilon', 0.5, '--out', out)
    assert result.exit_code == 0, result.output
    assert 'relu1:' in result.output

    report = read_report(str(tmp_path / 'tuned.tune.json'))
    validate_report(report)
    assert report['loss_increase'] <= 0.05

    tuned, _blob = load_manifest(out)
    graph = load_model(out)
    chosen = {layer['name']: layer['epsilon'] for layer in report['layers']}
    assert {name: graph.epsilons()[name] for name in chosen} == chosen
    assert tuned['weights'] == 'weights.bin'


def test_tune_rejects_a_negative_budget(tmp_path, model_dir, video_path):
    result = invoke('tune', '--model', model_dir, '--frames', video_path,
                    '--budget', -1, '--out', tmp_path / 'tuned.json')
    assert result.exit_code == 2


def test_bench(tmp_path, model_dir, video_path):
    out = str(tmp_path / 'bench.json')
    result = invoke('bench', '--model', model_dir, '--frames', video_path,
                    '--warmup', 1, '--repetitions', 2, '--out', out)
    assert result.exit_code == 0, result.output
    assert 'speedup' in result.output

    report = read_report(out)
    validate_report(report)
    assert report['repetitions'] == 2
    assert report['dense_fps'] > 0
    assert report['delta_fps'] > 0
    assert report['dense_mode_fps'] > 0
    # input 1 channel, two relus over 4 channels, output over 2 channels
    assert report['state_bytes'] == (16 * 16 * 4) * (1 + 2 * 4 * 2 + 2)

    result = invoke('bench', '--model', model_dir, '--frames', video_path,
                    '--warmup', 4)
    assert result.exit_code == 2


@pytest.mark.parametrize('extra', [[], ['--dense']])
def test_stats_recount_agrees(model_dir, video_path, extra):
    result = invoke('stats', '--model', model_dir, '--frames', video_path,
                    *extra)
    assert result.exit_code == 0, result.output
    assert 'MISMATCH' not in result.output
    assert result.output.count(' ok') == 4 * 3


def test_errors_exit_with_a_message(tmp_path, model_dir):
    small = str(tmp_path / 'small.dct')
    write_frames(small, moving_square_video(2, (1, 8, 8, 1), size=2))
    result = invoke('run', '--model', model_dir, '--frames', small, '--out',
                    tmp_path / 'out')
    assert result.exit_code == 1
    assert 'does not match' in result.output

    broken = tmp_path / 'broken.json'
    broken.write_text('{"name": "broken"}')
    result = invoke('compare', '--model', broken, '--frames', small)
    assert result.exit_code == 1
    assert 'required field' in result.output

    result = invoke('run', '--model', tmp_path / 'missing.json', '--frames',
                    small, '--out', tmp_path / 'out')
    assert result.exit_code == 2
