"""Per-layer and per-frame counters.

MAC counts are analytic: a dense tile is charged its full window of
multiply-accumulates, a very sparse tile only the (active pixel, kernel tap)
pairs it actually evaluates. Byte counts are estimates of tensor, weight,
state and mask elements read or written, not measured traffic.
"""
from collections import OrderedDict
import numpy as np
from delta_infer.tensor.core import UpdateMask
from delta_infer.tensor.tiles import TileSpec, TileIndex, ConvGeometry
from delta_infer.tensor.tiles import conv_output_shape, input_window
from delta_infer.tensor.tiles import tile_active_count
from delta_infer.tensor.masks import dilate_for_geometry

MODE_SKIP = 'skip'
MODE_VERY_SPARSE = 'very_sparse'
MODE_DENSE = 'dense'


class LayerStats:
    """Counters for one layer over one frame (or summed over several)."""

    def __init__(self, name: str, kind: str) -> None:
        self.name = name
        self.kind = kind
        self.tiles_skipped = 0
        self.tiles_very_sparse = 0
        self.tiles_dense = 0
        self.mac_performed = 0
        self.mac_dense_equivalent = 0
        self.bytes_touched_estimate = 0
        # size of the layer's caches, not a per-frame count
        self.state_bytes = 0
        self.active_pixels = 0
        self.total_pixels = 0
        self.frames = 0

    @property
    def tiles_total(self) -> int:
        return self.tiles_skipped + self.tiles_very_sparse + self.tiles_dense

    @property
    def tiles_processed(self) -> int:
        return self.tiles_very_sparse + self.tiles_dense

    @property
    def mask_density(self) -> float:
        if not self.total_pixels:
            return 0.0
        return self.active_pixels / self.total_pixels

    def record_mask(self, mask: UpdateMask) -> None:
        self.active_pixels += mask.count()
        self.total_pixels += mask.bits.size

    def merge(self, other: 'LayerStats') -> None:
        self.tiles_skipped += other.tiles_skipped
        self.tiles_very_sparse += other.tiles_very_sparse
        self.tiles_dense += other.tiles_dense
        self.mac_performed += other.mac_performed
        self.mac_dense_equivalent += other.mac_dense_equivalent
        self.bytes_touched_estimate += other.bytes_touched_estimate
        self.state_bytes = max(self.state_bytes, other.state_bytes)
        self.active_pixels += other.active_pixels
        self.total_pixels += other.total_pixels
        self.frames += other.frames

    def to_dict(self) -> dict:
        return {
            'name': self.name,
            'kind': self.kind,
            'tiles_skipped': self.tiles_skipped,
            'tiles_very_sparse': self.tiles_very_sparse,
            'tiles_dense': self.tiles_dense,
            'tiles_total': self.tiles_total,
            'mac_performed': self.mac_performed,
            'mac_dense_equivalent': self.mac_dense_equivalent,
            'bytes_touched_estimate': self.bytes_touched_estimate,
            'state_bytes': self.state_bytes,
            'mask_density': self.mask_density,
        }


class RunStats:
    """Stats for one frame: a LayerStats per layer in execution order plus
    the engine-wide MAC counter and the frame's wall time.
    """

    def __init__(self, frame_index: int = 0) -> None:
        self.frame_index = frame_index
        self.layers = OrderedDict()
        self.mac_counter = 0
        self.wall_time = 0.0

    def layer(self, name: str, kind: str) -> LayerStats:
        if name not in self.layers:
            self.layers[name] = LayerStats(name, kind)
        return self.layers[name]

    def count_macs(self, macs: int) -> None:
        self.mac_counter += int(macs)

    def conv_layers(self) -> list:
        return [l for l in self.layers.values() if l.tiles_total]

    @property
    def tiles_total(self) -> int:
        return sum(l.tiles_total for l in self.layers.values())

    @property
    def tiles_processed(self) -> int:
        return sum(l.tiles_processed for l in self.layers.values())

    @property
    def mac_performed(self) -> int:
        return sum(l.mac_performed for l in self.layers.values())

    @property
    def mac_dense_equivalent(self) -> int:
        return sum(l.mac_dense_equivalent for l in self.layers.values())

    @property
    def state_bytes(self) -> int:
        return sum(l.state_bytes for l in self.layers.values())

    @property
    def tile_fraction(self) -> float:
        total = self.tiles_total
        return self.tiles_processed / total if total else 0.0

    @property
    def mac_fraction(self) -> float:
        total = self.mac_dense_equivalent
        return self.mac_performed / total if total else 0.0

    def to_dict(self) -> dict:
        return {
            'frame': self.frame_index,
            'wall_time': self.wall_time,
            'tile_fraction': self.tile_fraction,
            'mac_fraction': self.mac_fraction,
            'mac_performed': self.mac_performed,
            'mac_dense_equivalent': self.mac_dense_equivalent,
            'state_bytes': self.state_bytes,
            'layers': [l.to_dict() for l in self.layers.values()],
        }


def summarize(frames: list) -> OrderedDict:
    """Sums a sequence of RunStats into one LayerStats per layer."""
    totals = OrderedDict()
    for frame in frames:
        for name, layer in frame.layers.items():
            if name not in totals:
                totals[name] = LayerStats(name, layer.kind)
            totals[name].merge(layer)
    return totals


def recount_conv(mask_in: UpdateMask, geometry: ConvGeometry, tiles: TileSpec,
                 in_per_group: int, out_channels: int,
                 very_sparse_max: int = 4, mode: str = 'hybrid',
                 depthwise: bool = False) -> LayerStats:
    """Recomputes a convolution's dispatch counters from its input mask alone.

    This walks every tile with tile_active_count and a per-pixel scan, sharing
    nothing with the engine's vectorized bookkeeping, so it can be used to
    check the engine's numbers.
    """
    stats = LayerStats('recount', 'conv')
    out_h, out_w = conv_output_shape(mask_in.height, mask_in.width, geometry)
    per_tap = in_per_group * out_channels
    taps = geometry.kernel_h * geometry.kernel_w
    stats.mac_dense_equivalent = mask_in.batch * out_h * out_w * taps * per_tap

    for tile in tiles.tiles(mask_in.batch, out_h, out_w):
        out_win = tiles.output_window(tile, out_h, out_w)
        in_win = input_window(out_win, geometry, mask_in.height, mask_in.width)
        active = tile_active_count(mask_in, tile, in_win)

        tile_mode = _recount_mode(active, very_sparse_max, mode, depthwise)
        if tile_mode == MODE_SKIP:
            stats.tiles_skipped += 1
        elif tile_mode == MODE_DENSE:
            stats.tiles_dense += 1
            pixels = ((out_win.bottom - out_win.top) *
                      (out_win.right - out_win.left))
            stats.mac_performed += pixels * taps * per_tap
        else:
            stats.tiles_very_sparse += 1
            stats.mac_performed += _recount_pairs(
                mask_in, tile, in_win, out_win, geometry) * per_tap

    stats.record_mask(dilate_for_geometry(mask_in, geometry))
    return stats


def _recount_mode(active: int, very_sparse_max: int, mode: str,
                  depthwise: bool) -> str:
    if active == 0:
        return MODE_SKIP
    if mode == 'per_tile':
        return MODE_DENSE
    if mode == 'per_pixel' or depthwise or active <= very_sparse_max:
        return MODE_VERY_SPARSE
    return MODE_DENSE


def _recount_pairs(mask_in: UpdateMask, tile: TileIndex, in_win, out_win,
                   geometry: ConvGeometry) -> int:
    """Counts (active pixel, tap) pairs landing on an output of the tile."""
    pairs = 0
    rows, cols = np.nonzero(mask_in.bits[tile.batch, in_win.top:in_win.bottom,
                                         in_win.left:in_win.right])
    for row, col in zip(rows + in_win.top, cols + in_win.left):
        for ky in range(geometry.kernel_h):
            for kx in range(geometry.kernel_w):
                oy = row + geometry.padding - ky * geometry.dilation
                ox = col + geometry.padding - kx * geometry.dilation
                if oy % geometry.stride or ox % geometry.stride:
                    continue
                oy //= geometry.stride
                ox //= geometry.stride
                if (out_win.top <= oy < out_win.bottom
                        and out_win.left <= ox < out_win.right):
                    pairs += 1
    return pairs
