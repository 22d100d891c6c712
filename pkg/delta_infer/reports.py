"""JSON reports written by the command line tools.

Every report carries the command that produced it, the model name and a
creation timestamp. Fields measuring time (created, wall_time, the fps
figures) are the only ones that differ between two identical runs.
"""
from typing import List
import numpy as np
import pendulum
import ujson
from delta_infer.graph.fields import Field
from delta_infer.graph.schema import Schema, SchemaValidationException
from delta_infer.graph.validation import validate_list_of_loose_structs
from delta_infer.graph.validation import validate_loose_struct
from delta_infer.stats import RunStats, summarize
from delta_infer.version import VERSION

TIMING_FIELDS = ('created', 'wall_time', 'dense_fps', 'delta_fps',
                 'dense_mode_fps', 'speedup', 'dense_mode_speedup')

NUMBER = (int, float)

LAYER_ENTRY = {
    'name': str,
    'kind': str,
    'tiles_skipped': int,
    'tiles_very_sparse': int,
    'tiles_dense': int,
    'mac_performed': int,
    'mac_dense_equivalent': int,
    'bytes_touched_estimate': int,
    'state_bytes': int,
    'mask_density': NUMBER,
}

COMMON_FIELDS = {
    'command': Field((str, ), True, (None, )),
    'model': Field((str, ), True, (None, )),
    'version': Field((str, ), True, (None, )),
    # iso8601 in UTC
    'created': Field((str, ), True, (None, )),
}

REPORT_FIELDS = {
    'run': {
        'frames': Field((int, ), True, (None, )),
        'layers': Field((list, ), True,
                        (validate_list_of_loose_structs(LAYER_ENTRY), )),
        'aggregate': Field((dict, ), True, (validate_loose_struct({
            'tile_fraction': NUMBER,
            'mac_fraction': NUMBER,
            'mac_performed': int,
            'mac_dense_equivalent': int,
            'mac_counter': int,
            'state_bytes': int,
        }), )),
        'per_frame': Field((list, ), True, (validate_list_of_loose_structs({
            'frame': int,
            'wall_time': NUMBER,
            'tile_fraction': NUMBER,
            'mac_fraction': NUMBER,
        }), )),
    },
    'compare': {
        'frames': Field((int, ), True, (None, )),
        'per_frame': Field((list, ), True, (validate_list_of_loose_structs({
            'frame': int,
            'max_relative_deviation': NUMBER,
            'mean_relative_deviation': NUMBER,
        }), )),
        'drift_slope': Field((float, int), True, (None, None)),
        'max_relative_deviation': Field((float, int), True, (None, None)),
    },
    'bench': {
        'frames': Field((int, ), True, (None, )),
        'warmup': Field((int, ), True, (None, )),
        'repetitions': Field((int, ), True, (None, )),
        'dense_fps': Field((float, int), True, (None, None)),
        'delta_fps': Field((float, int), True, (None, None)),
        'speedup': Field((float, int), True, (None, None)),
        'dense_mode_fps': Field((float, int), False, (None, None)),
        'dense_mode_speedup': Field((float, int), False, (None, None)),
        'state_bytes': Field((int, ), False, (None, )),
    },
    'tune': {
        'config': Field((dict, ), True, (None, )),
        'baseline_loss': Field((float, int), True, (None, None)),
        'final_loss': Field((float, int), True, (None, None)),
        'loss_increase': Field((float, int), True, (None, None)),
        'layers': Field((list, ), True, (validate_list_of_loose_structs({
            'name': str,
            'epsilon': NUMBER,
            'trajectory': list,
        }), )),
    },
}


class ReportSchema(Schema):
    """A schema for one report; the fieldset follows the report's command."""

    def __init__(self, json_to_load: dict = None) -> None:
        fields = dict(COMMON_FIELDS)
        fields.update(REPORT_FIELDS.get((json_to_load or {}).get('command'),
                                        {}))
        super().__init__(fields=fields, json_to_load=json_to_load)

    def problems(self) -> List[str]:
        found = super().problems()
        command = self.representation.get('command')
        if command not in REPORT_FIELDS:
            found.append(f'unknown report command {command}')
        return found


def _header(command: str, model: str) -> dict:
    return {
        'command': command,
        'model': model,
        'version': VERSION,
        'created': pendulum.now('UTC').to_iso8601_string(),
    }


def run_report(model: str, frames: List[RunStats]) -> dict:
    """Per-layer totals, aggregate figures and a per-frame breakdown."""
    layers = summarize(frames)
    mac_performed = sum(l.mac_performed for l in layers.values())
    mac_dense = sum(l.mac_dense_equivalent for l in layers.values())
    tiles_total = sum(l.tiles_total for l in layers.values())
    tiles_processed = sum(l.tiles_processed for l in layers.values())

    report = _header('run', model)
    report.update({
        'frames': len(frames),
        'layers': [layer.to_dict() for layer in layers.values()],
        'aggregate': {
            'tiles_total': tiles_total,
            'tiles_processed': tiles_processed,
            'tile_fraction': tiles_processed / tiles_total
            if tiles_total else 0.0,
            'mac_performed': mac_performed,
            'mac_dense_equivalent': mac_dense,
            'mac_fraction': mac_performed / mac_dense if mac_dense else 0.0,
            'mac_counter': sum(frame.mac_counter for frame in frames),
            'bytes_touched_estimate':
            sum(l.bytes_touched_estimate for l in layers.values()),
            'state_bytes': sum(l.state_bytes for l in layers.values()),
            'wall_time': sum(frame.wall_time for frame in frames),
        },
        'per_frame': [{
            'frame': position,
            'wall_time': frame.wall_time,
            'tile_fraction': frame.tile_fraction,
            'mac_fraction': frame.mac_fraction,
            'mac_performed': frame.mac_performed,
            'mac_dense_equivalent': frame.mac_dense_equivalent,
        } for position, frame in enumerate(frames)],
    })
    return report


def drift_slope(deviations: List[float]) -> float:
    """Least-squares slope of deviation against frame number."""
    if len(deviations) < 2:
        return 0.0
    slope, _intercept = np.polyfit(np.arange(len(deviations)),
                                   np.asarray(deviations, dtype=np.float64),
                                   1)
    return float(slope)


def compare_report(model: str, max_deviations: List[float],
                   mean_deviations: List[float]) -> dict:
    report = _header('compare', model)
    report.update({
        'frames': len(max_deviations),
        'per_frame': [{
            'frame': position,
            'max_relative_deviation': float(worst),
            'mean_relative_deviation': float(mean),
        } for position, (worst, mean) in enumerate(
            zip(max_deviations, mean_deviations))],
        'drift_slope': drift_slope(max_deviations),
        'max_relative_deviation': float(max(max_deviations, default=0.0)),
    })
    return report


def bench_report(model: str,
                 frames: int,
                 warmup: int,
                 repetitions: int,
                 dense_fps: float,
                 delta_fps: float,
                 dense_mode_fps: float = None,
                 state_bytes: int = None) -> dict:
    report = _header('bench', model)
    report.update({
        'frames': frames,
        'warmup': warmup,
        'repetitions': repetitions,
        'dense_fps': dense_fps,
        'delta_fps': delta_fps,
        'speedup': delta_fps / dense_fps if dense_fps else 0.0,
    })
    if dense_mode_fps is not None:
        report['dense_mode_fps'] = dense_mode_fps
        report['dense_mode_speedup'] = (delta_fps / dense_mode_fps
                                        if dense_mode_fps else 0.0)
    if state_bytes is not None:
        report['state_bytes'] = state_bytes
    return report


def tune_report(model: str, tuning: dict) -> dict:
    report = _header('tune', model)
    report.update({k: v for k, v in tuning.items() if k != 'model'})
    return report


def validate_report(report: dict) -> None:
    """Raises SchemaValidationException when a report is malformed."""
    found = ReportSchema(report).problems()
    if found:
        raise SchemaValidationException('; '.join(found))


def strip_timing(report: dict) -> dict:
    """A copy without the fields that measure time, for comparing runs."""
    if isinstance(report, dict):
        return {
            key: strip_timing(value)
            for key, value in report.items() if key not in TIMING_FIELDS
        }
    if isinstance(report, list):
        return [strip_timing(value) for value in report]
    return report


def write_report(path: str, report: dict) -> None:
    validate_report(report)
    with open(path, 'w') as handle:
        handle.write(ujson.dumps(report, indent=2))


def read_report(path: str) -> dict:
    with open(path, 'r') as handle:
        return ujson.loads(handle.read())
