"""Tiled sparse convolution over delta tensors.

Convolution is linear, so the delta of the output is the convolution of the
delta of the input, with inactive pixels treated as zero. Each output tile is
dispatched on the number of active pixels in its input window:

    0                    skip, nothing is read or written except the mask
    1 .. very_sparse_max iterate the gathered list of active pixels and touch
                         only the kernel taps they actually hit
    more                 dense multiply-accumulate over the whole window

Dense tiles are gathered into one stack and processed together, the way
block-sparse convolution gathers active blocks, so the cost scales with the
number of processed tiles rather than the image size.

Both paths accumulate in float32 with one element-wise multiply and one add
per (kernel row, kernel column, input channel), in that order. A skipped term
is an exact zero, so the two paths produce the same bits.
"""
from concurrent.futures import Executor
from typing import Tuple
import numpy as np
from delta_infer.config import EngineOptions
from delta_infer.layers.state import ConvParams
from delta_infer.stats import RunStats
from delta_infer.tensor.core import FeatureTensor, UpdateMask, ShapeException
from delta_infer.tensor.masks import dilate_for_geometry
from delta_infer.tensor.tiles import TileSpec, conv_output_shape
from delta_infer.tensor.tiles import tile_active_counts, tile_input_bounds

DEFAULT_OPTIONS = EngineOptions(threads=1,
                                poison=False,
                                very_sparse_max=4,
                                tile_mode='hybrid',
                                reset_interval=500)


def dispatch_modes(counts: np.ndarray, options: EngineOptions,
                   depthwise: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    """Splits non-empty tiles into (dense, very_sparse) boolean maps."""
    active = counts > 0
    nothing = np.zeros_like(active)

    if options.tile_mode == 'per_tile':
        return active, nothing
    # Depthwise weights are reused too little for a dense tile to pay off,
    # those layers always decide per pixel.
    if options.tile_mode == 'per_pixel' or depthwise:
        return nothing, active

    very_sparse = active & (counts <= options.very_sparse_max)
    return active & ~very_sparse, very_sparse


def sparse_conv2d(delta_in: FeatureTensor,
                  mask_in: UpdateMask,
                  params: ConvParams,
                  tiles: TileSpec = None,
                  first_frame: bool = False,
                  stats: RunStats = None,
                  name: str = 'conv',
                  options: EngineOptions = None,
                  executor: Executor = None) -> Tuple[FeatureTensor,
                                                      UpdateMask]:
    """Convolves a sparse delta tensor.

    Only active output pixels are written. The bias is added only on the
    first frame; afterwards it is already part of every accumulated value
    downstream.
    """
    mask_in.check_annotates(delta_in)
    if delta_in.channels != params.in_channels:
        raise ShapeException(
            f'{name}: input has {delta_in.channels} channels, layer expects '
            f'{params.in_channels}')

    options = options or DEFAULT_OPTIONS
    geometry = params.geometry
    tiles = tiles or TileSpec.default_for(geometry)
    batch, in_h, in_w, _ = delta_in.shape
    out_h, out_w = conv_output_shape(in_h, in_w, geometry)

    mask_out = dilate_for_geometry(mask_in, geometry)
    delta_out = FeatureTensor.empty((batch, out_h, out_w, params.out_channels),
                                    options.poison)

    counts = tile_active_counts(mask_in, tiles, geometry, out_h, out_w)
    dense, very_sparse = dispatch_modes(counts, options, params.depthwise)
    dense_idx = np.argwhere(dense)
    sparse_idx = np.argwhere(very_sparse)

    kernel = _TileKernel(delta_in, mask_in, params, tiles, out_h, out_w,
                         first_frame)
    work = [(kernel.dense, chunk)
            for chunk in _chunks(dense_idx, options.threads)]
    work += [(kernel.very_sparse, chunk)
             for chunk in _chunks(sparse_idx, options.threads)]

    if executor is not None and len(work) > 1:
        tallies = list(executor.map(lambda job: job[0](job[1]), work))
    else:
        tallies = [job(chunk) for job, chunk in work]

    if work:
        window = kernel.canvas[:, :out_h, :out_w]
        delta_out.data[mask_out.bits] = window[mask_out.bits]

    if stats is not None:
        macs, reads = 0, 0
        for tally in tallies:
            macs += tally[0]
            reads += tally[1]

        layer = stats.layer(name, 'conv')
        layer.frames += 1
        layer.tiles_skipped += int(counts.size - dense_idx.shape[0] -
                                   sparse_idx.shape[0])
        layer.tiles_dense += int(dense_idx.shape[0])
        layer.tiles_very_sparse += int(sparse_idx.shape[0])
        layer.mac_performed += macs
        layer.mac_dense_equivalent += (batch * out_h * out_w *
                                       kernel.macs_per_output)
        layer.bytes_touched_estimate += (
            reads + _mask_bytes(tiles, params, out_h, out_w, in_h, in_w,
                                batch) +
            mask_out.count() * params.out_channels * 4)
        layer.record_mask(mask_out)
        stats.count_macs(macs)

    return delta_out, mask_out


def _chunks(indices: np.ndarray, parts: int) -> list:
    if not indices.shape[0]:
        return []
    parts = max(1, min(parts, indices.shape[0]))
    return [chunk for chunk in np.array_split(indices, parts) if chunk.size]


def _mask_bytes(tiles: TileSpec, params: ConvParams, out_h: int, out_w: int,
                in_h: int, in_w: int, batch: int) -> int:
    """Every tile reads the mask over its input window and writes its output
    mask, skipped or not.
    """
    tops, bottoms, lefts, rights = tile_input_bounds(tiles, params.geometry,
                                                     out_h, out_w, in_h, in_w)
    window = int((bottoms - tops).sum()) * int((rights - lefts).sum())
    return batch * (window + out_h * out_w)


class _TileKernel:
    """Holds everything one layer invocation shares between tile workers.

    Workers write disjoint tiles of the canvas, a tile-aligned output buffer
    that is cropped to the real output shape afterwards.
    """

    def __init__(self, delta_in: FeatureTensor, mask_in: UpdateMask,
                 params: ConvParams, tiles: TileSpec, out_h: int, out_w: int,
                 first_frame: bool) -> None:
        self.delta_in = delta_in
        self.mask_in = mask_in
        self.params = params
        self.out_h = out_h
        self.out_w = out_w
        self.first_frame = first_frame
        self.tile_h = tiles.tile_height
        self.tile_w = tiles.tile_width
        self.macs_per_tap = params.in_per_group * params.out_channels
        self.macs_per_output = (params.kernel_h * params.kernel_w *
                                self.macs_per_tap)

        rows, cols = tiles.grid(out_h, out_w)
        self.canvas = np.empty(
            (delta_in.batch, rows * self.tile_h, cols * self.tile_w,
             params.out_channels),
            dtype=np.float32)
        self.bounds = tile_input_bounds(tiles, params.geometry, out_h, out_w,
                                        delta_in.height, delta_in.width)
        self._padded = None

    def padded(self) -> np.ndarray:
        """The input with inactive pixels and padding as explicit zeros, sized
        so that every full tile window fits. Only active pixels are read.
        """
        if self._padded is None:
            geometry = self.params.geometry
            batch, in_h, in_w, channels = self.delta_in.shape
            rows, cols = self.canvas.shape[1:3]
            pad = geometry.padding
            need_h = ((rows - 1) * geometry.stride +
                      geometry.dilation * (geometry.kernel_h - 1) + 1)
            need_w = ((cols - 1) * geometry.stride +
                      geometry.dilation * (geometry.kernel_w - 1) + 1)
            padded = np.zeros((batch, max(in_h + 2 * pad, need_h),
                               max(in_w + 2 * pad, need_w), channels),
                              dtype=np.float32)
            bits = self.mask_in.bits
            padded[:, pad:pad + in_h, pad:pad + in_w][bits] = \
                self.delta_in.data[bits]
            self._padded = padded
        return self._padded

    def _finish(self, acc: np.ndarray, tile_idx: np.ndarray) -> None:
        if self.first_frame and self.params.bias is not None:
            acc += self.params.bias

        b, row, col = tile_idx[:, 0], tile_idx[:, 1], tile_idx[:, 2]
        out_y = row[:, None] * self.tile_h + np.arange(self.tile_h)
        out_x = col[:, None] * self.tile_w + np.arange(self.tile_w)
        self.canvas[b[:, None, None], out_y[:, :, None],
                    out_x[:, None, :]] = acc

    def dense(self, tile_idx: np.ndarray) -> Tuple[int, int]:
        """Unconditional multiply-accumulate over whole tile windows.

        Returns (macs, bytes read) for the tiles in tile_idx.
        """
        params = self.params
        geometry = params.geometry
        step, dil = geometry.stride, geometry.dilation
        th, tw = self.tile_h, self.tile_w
        win_h = (th - 1) * step + dil * (geometry.kernel_h - 1) + 1
        win_w = (tw - 1) * step + dil * (geometry.kernel_w - 1) + 1

        b, row, col = tile_idx[:, 0], tile_idx[:, 1], tile_idx[:, 2]
        in_y = row[:, None] * th * step + np.arange(win_h)
        in_x = col[:, None] * tw * step + np.arange(win_w)
        stack = self.padded()[b[:, None, None], in_y[:, :, None],
                              in_x[:, None, :]]

        acc = np.zeros((tile_idx.shape[0], th, tw, params.out_channels),
                       dtype=np.float32)
        term = np.empty_like(acc)
        for ky in range(geometry.kernel_h):
            for kx in range(geometry.kernel_w):
                slab = stack[:, ky * dil:ky * dil + (th - 1) * step + 1:step,
                             kx * dil:kx * dil + (tw - 1) * step + 1:step]
                for local in range(params.in_per_group):
                    np.multiply(slab[..., params.input_slice(local)],
                                params.weights[:, ky, kx, local],
                                out=term)
                    np.add(acc, term, out=acc)
        self._finish(acc, tile_idx)

        valid_h = np.minimum(th, self.out_h - row * th)
        valid_w = np.minimum(tw, self.out_w - col * tw)
        macs = int((valid_h * valid_w).sum()) * self.macs_per_output

        tops, bottoms, lefts, rights = self.bounds
        area = (bottoms[row] - tops[row]) * (rights[col] - lefts[col])
        reads = (int(area.sum()) * params.in_channels +
                 tile_idx.shape[0] * params.weights.size) * 4
        return macs, reads

    def very_sparse(self, tile_idx: np.ndarray) -> Tuple[int, int]:
        """Iterates the active pixels of each tile's window instead of the
        window itself, and only the kernel taps those pixels reach.

        Returns (macs, bytes read) for the tiles in tile_idx.
        """
        params = self.params
        geometry = params.geometry
        pad, step, dil = geometry.padding, geometry.stride, geometry.dilation
        tops, bottoms, lefts, rights = self.bounds

        owner, pix_b, pix_y, pix_x = [], [], [], []
        for slot, (b, row, col) in enumerate(tile_idx):
            ys, xs = np.nonzero(
                self.mask_in.bits[b, tops[row]:bottoms[row],
                                  lefts[col]:rights[col]])
            owner.append(np.full(ys.shape, slot))
            pix_b.append(np.full(ys.shape, b))
            pix_y.append(ys + tops[row])
            pix_x.append(xs + lefts[col])

        owner = np.concatenate(owner)
        pix_y = np.concatenate(pix_y)
        pix_x = np.concatenate(pix_x)
        values = self.delta_in.data[np.concatenate(pix_b), pix_y, pix_x]
        tile_top = tile_idx[owner, 1] * self.tile_h
        tile_left = tile_idx[owner, 2] * self.tile_w

        acc = np.zeros(
            (tile_idx.shape[0], self.tile_h, self.tile_w, params.out_channels),
            dtype=np.float32)
        pairs, weight_slices = 0, 0
        for ky in range(geometry.kernel_h):
            off_y = pix_y + pad - ky * dil
            out_y = off_y // step
            local_y = out_y - tile_top
            for kx in range(geometry.kernel_w):
                off_x = pix_x + pad - kx * dil
                out_x = off_x // step
                local_x = out_x - tile_left
                hit = ((off_y % step == 0) & (off_x % step == 0) &
                       (out_y >= 0) & (out_y < self.out_h) & (out_x >= 0) &
                       (out_x < self.out_w) & (local_y >= 0) &
                       (local_y < self.tile_h) & (local_x >= 0) &
                       (local_x < self.tile_w))
                if not hit.any():
                    continue

                sel = np.nonzero(hit)[0]
                slots, rows, cols = owner[sel], local_y[sel], local_x[sel]
                picked = values[sel]
                pairs += sel.size
                weight_slices += np.unique(slots).size
                # For one tap, distinct input pixels land on distinct
                # outputs, so the fancy-index add never collides.
                for local in range(params.in_per_group):
                    acc[slots, rows, cols] += (
                        picked[:, params.input_slice(local)] *
                        params.weights[:, ky, kx, local])
        self._finish(acc, tile_idx)

        macs = pairs * self.macs_per_tap
        reads = (owner.size * params.in_channels +
                 weight_slices * self.macs_per_tap) * 4
        return macs, reads
