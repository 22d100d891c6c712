"""The delta-infer command line."""
import os
import time
from contextlib import contextmanager
import click
from delta_infer.config import engine_options
from delta_infer.graph.manifest import with_epsilons, write_manifest
from delta_infer.graph.model import ModelGraph, load_model
from delta_infer.graph.schema import SchemaValidationException
from delta_infer.ingest import ingest_frames
from delta_infer.layers.state import MissingStateException
from delta_infer.logging import logging
from delta_infer.oracle import dense_run_frame
from delta_infer.reports import run_report, compare_report, bench_report
from delta_infer.reports import tune_report, write_report
from delta_infer.stats import recount_conv
from delta_infer.tensor.container import ContainerFormatException, write_tensor
from delta_infer.tensor.core import ShapeException, NonFiniteInputException
from delta_infer.translation import _
from delta_infer.tuner import Tuner, TuneConfig, TuningException
from delta_infer.utilities import max_relative_deviation
from delta_infer.utilities import mean_relative_deviation
from delta_infer.version import VERSION, NAME

LOGGER = logging.getLogger('delta_infer')

FAILURES = (ShapeException, NonFiniteInputException, ContainerFormatException,
            SchemaValidationException, MissingStateException,
            TuningException, OSError, ValueError)


@contextmanager
def reported_failures():
    """Turns engine errors into a message and exit code 1."""
    try:
        yield
    except FAILURES as error:
        raise click.ClickException(str(error)) from error


def engine_flags(command):
    """Options shared by every command that runs the engine."""
    options = [
        click.option('--model', 'model_path', required=True,
                     type=click.Path(exists=True, dir_okay=False),
                     help=_('Model manifest (JSON).')),
        click.option('--threads', type=click.IntRange(min=1), default=None,
                     envvar='DELTA_INFER_THREADS',
                     help=_('Tile worker threads; 1 is fully serial.')),
        click.option('--reset-interval', type=click.IntRange(min=0),
                     default=None,
                     help=_('Frames between buffer resets, 0 disables.')),
        click.option('--poison-debug', is_flag=True, default=None,
                     help=_('Fill stale tensor regions with NaN.')),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def open_model(model_path: str, threads: int, reset_interval: int,
               poison_debug: bool, dense: bool = False) -> ModelGraph:
    options = engine_options(threads=threads,
                             reset_interval=reset_interval,
                             poison=poison_debug or None)
    graph = load_model(model_path, options)
    if dense:
        graph.set_dense_mode()
    return graph


@click.group()
@click.version_option(VERSION, prog_name=NAME)
def cli():
    """Sparse delta inference for fixed-camera video."""


@cli.command()
@engine_flags
@click.option('--frames', 'frames_path', required=True,
              type=click.Path(exists=True),
              help=_('.dct container or directory of PNM images.'))
@click.option('--out', 'out_dir', required=True,
              type=click.Path(file_okay=False),
              help=_('Directory for outputs and the report.'))
@click.option('--dense', is_flag=True,
              help=_('Negative thresholds: reprocess every pixel.'))
def run(model_path, threads, reset_interval, poison_debug, frames_path,
        out_dir, dense):
    """Runs delta inference and writes every output frame and a report."""
    with reported_failures():
        frames = ingest_frames(frames_path)
        os.makedirs(out_dir, exist_ok=True)

        stats = []
        with open_model(model_path, threads, reset_interval, poison_debug,
                        dense) as graph:
            if graph.options.poison:
                LOGGER.warning(
                    _('NaN poisoning is on, outputs are checked but slower'))
            for index, frame in enumerate(frames):
                output, frame_stats = graph.run_frame(frame)
                write_tensor(os.path.join(out_dir, f'frame_{index:05d}.dct'),
                             output)
                stats.append(frame_stats)
                LOGGER.info('frame %d: %.1f%% tiles, %.1f%% MACs', index,
                            100 * frame_stats.tile_fraction,
                            100 * frame_stats.mac_fraction)

            report = run_report(graph.name, stats)
        write_report(os.path.join(out_dir, 'report.json'), report)

    aggregate = report['aggregate']
    click.echo(
        _('{frames} frames, {tiles:.1%} of tiles processed, {macs:.1%} of '
          'MACs').format(frames=len(frames),
                         tiles=aggregate['tile_fraction'],
                         macs=aggregate['mac_fraction']))


@cli.command()
@engine_flags
@click.option('--frames', 'frames_path', required=True,
              type=click.Path(exists=True))
@click.option('--out', 'out_path', type=click.Path(dir_okay=False),
              default=None, help=_('Where to write the report.'))
@click.option('--dense', is_flag=True)
def compare(model_path, threads, reset_interval, poison_debug, frames_path,
            out_path, dense):
    """Runs delta and dense inference side by side and reports how far the
    delta output strays from the dense one, frame by frame.
    """
    with reported_failures():
        frames = ingest_frames(frames_path)
        worst, mean = [], []
        with open_model(model_path, threads, reset_interval, poison_debug,
                        dense) as graph:
            for frame in frames:
                output, _stats = graph.run_frame(frame)
                reference = dense_run_frame(graph, frame)
                worst.append(max_relative_deviation(output.data,
                                                    reference.data))
                mean.append(mean_relative_deviation(output.data,
                                                    reference.data))
            report = compare_report(graph.name, worst, mean)
        if out_path:
            write_report(out_path, report)

    click.echo(
        _('max relative deviation {worst:.3g}, drift slope {slope:.3g} per '
          'frame').format(worst=report['max_relative_deviation'],
                          slope=report['drift_slope']))


@cli.command()
@engine_flags
@click.option('--frames', 'frames_paths', required=True, multiple=True,
              type=click.Path(exists=True),
              help=_('Calibration sequence; repeat for more.'))
@click.option('--budget', type=click.FloatRange(min=0), default=0.03,
              show_default=True, help=_('Total allowed loss increase.'))
@click.option('--start-epsilon', type=float, default=1e-4, show_default=True)
@click.option('--max-epsilon', type=float, default=10.0, show_default=True)
@click.option('--out', 'out_path', required=True,
              type=click.Path(dir_okay=False),
              help=_('Where to write the tuned manifest.'))
def tune(model_path, threads, reset_interval, poison_debug, frames_paths,
         budget, start_epsilon, max_epsilon, out_path):
    """Tunes truncation thresholds and writes a tuned copy of the manifest
    plus a tuning report next to it.
    """
    with reported_failures():
        config = TuneConfig(total_budget=budget,
                            start_epsilon=start_epsilon,
                            max_epsilon=max_epsilon,
                            calibration=frames_paths)
        with open_model(model_path, threads, reset_interval,
                        poison_debug) as graph:
            tuner = Tuner(graph, config)
            epsilons = tuner.tune()
            report = tune_report(graph.name, tuner.report())

        blob_path = os.path.join(os.path.dirname(os.path.abspath(model_path)),
                                 graph.manifest['weights'])
        write_manifest(out_path, with_epsilons(graph.manifest, epsilons),
                       blob_path)
        write_report(os.path.splitext(out_path)[0] + '.tune.json', report)

    for name, epsilon in epsilons.items():
        click.echo(f'{name}: {epsilon:.6g}')
    click.echo(
        _('loss increase {increase:.3g} of budget {budget:.3g}').format(
            increase=report['loss_increase'], budget=budget))


def _time_frames(step, frames: list, warmup: int, repetitions: int,
                 before=None) -> float:
    """Frames per second of step over the sequence, warm-up excluded."""
    elapsed, timed = 0.0, 0
    for _repetition in range(repetitions):
        if before is not None:
            before()
        for index, frame in enumerate(frames):
            started = time.perf_counter()
            step(frame)
            if index >= warmup:
                elapsed += time.perf_counter() - started
                timed += 1
    return timed / elapsed if elapsed else 0.0


@cli.command()
@engine_flags
@click.option('--frames', 'frames_path', required=True,
              type=click.Path(exists=True))
@click.option('--repetitions', type=click.IntRange(min=1), default=1,
              show_default=True)
@click.option('--warmup', type=click.IntRange(min=0), default=1,
              show_default=True, help=_('Leading frames left untimed.'))
@click.option('--out', 'out_path', type=click.Path(dir_okay=False),
              default=None)
def bench(model_path, threads, reset_interval, poison_debug, frames_path,
          repetitions, warmup, out_path):
    """Times the dense reference, the engine in dense mode and the delta
    engine over the same frames.
    """
    with reported_failures():
        frames = ingest_frames(frames_path)
        if warmup >= len(frames):
            raise click.BadParameter(_('warm-up covers every frame'),
                                     param_hint='--warmup')

        with open_model(model_path, threads, reset_interval,
                        poison_debug) as graph:
            if graph.options.poison:
                LOGGER.warning(_('NaN poisoning is on, timings are off'))
            dense_fps = _time_frames(lambda f: dense_run_frame(graph, f),
                                     frames, warmup, repetitions)
            delta_fps = _time_frames(graph.run_frame, frames, warmup,
                                     repetitions, graph.reset_buffers)
            graph.set_dense_mode()
            dense_mode_fps = _time_frames(graph.run_frame, frames, warmup,
                                          repetitions, graph.reset_buffers)
            report = bench_report(graph.name, len(frames), warmup,
                                  repetitions, dense_fps, delta_fps,
                                  dense_mode_fps, graph.state_bytes())
        if out_path:
            write_report(out_path, report)

    click.echo(
        _('dense {dense:.1f} fps, delta {delta:.1f} fps, speedup '
          '{speedup:.2f}x').format(dense=dense_fps,
                                   delta=delta_fps,
                                   speedup=report['speedup']))


@cli.command()
@engine_flags
@click.option('--frames', 'frames_path', required=True,
              type=click.Path(exists=True))
@click.option('--dense', is_flag=True)
def stats(model_path, threads, reset_interval, poison_debug, frames_path,
          dense):
    """Prints per-layer dispatch counters and checks every convolution
    against a recount from its input mask alone.
    """
    mismatches = 0
    with reported_failures():
        frames = ingest_frames(frames_path)
        with open_model(model_path, threads, reset_interval, poison_debug,
                        dense) as graph:
            graph.trace = True
            for index, frame in enumerate(frames):
                _output, frame_stats = graph.run_frame(frame)
                mismatches += _recount_frame(graph, frame_stats, index)

    if mismatches:
        raise click.ClickException(
            _('{count} layer counts differ from the recount').format(
                count=mismatches))


def _recount_frame(graph: ModelGraph, frame_stats, index: int) -> int:
    mismatches = 0
    for layer in frame_stats.layers.values():
        line = (f'{index:5d} {layer.name:<16} {layer.kind:<12} '
                f'{layer.tiles_skipped:6d} {layer.tiles_very_sparse:6d} '
                f'{layer.tiles_dense:6d} {layer.mask_density:8.3f}')
        record = graph.layer(layer.name)
        if record.kind == 'conv':
            entry = graph.last_trace[layer.name]
            recount = recount_conv(entry.input_masks[0],
                                   record.conv.geometry, record.tiles,
                                   record.conv.in_per_group,
                                   record.conv.out_channels,
                                   graph.options.very_sparse_max,
                                   graph.options.tile_mode,
                                   record.conv.depthwise)
            same = ((recount.tiles_skipped, recount.tiles_very_sparse,
                     recount.tiles_dense, recount.mac_performed) ==
                    (layer.tiles_skipped, layer.tiles_very_sparse,
                     layer.tiles_dense, layer.mac_performed))
            line += '  ok' if same else '  MISMATCH'
            mismatches += not same
        click.echo(line)
    return mismatches


def main():
    cli()  # pylint: disable=no-value-for-parameter
