"""Tile partitioning of convolution outputs.

A tile is a rectangle of output pixels processed as one unit, and the skip
decision is made per tile. Boundary tiles may be partial; everything here
works on the clipped rectangles.
"""
from collections import namedtuple
from typing import Iterator, Tuple
import numpy as np
from delta_infer.tensor.core import UpdateMask, ShapeException
from delta_infer.utilities import divup

# kernel_h/kernel_w - kernel extent in taps
# stride, dilation, padding - the same value on both spatial axes
ConvGeometry = namedtuple('ConvGeometry',
                          'kernel_h kernel_w stride dilation padding')

# Half-open pixel rectangle, rows [top, bottom) and columns [left, right)
Window = namedtuple('Window', 'top bottom left right')

TileIndex = namedtuple('TileIndex', 'batch row col')


def conv_output_size(size: int, kernel: int, stride: int, dilation: int,
                     padding: int) -> int:
    """Standard convolution output extent along one axis."""
    if kernel < 1 or stride < 1 or dilation < 1 or padding < 0:
        raise ShapeException(
            f'invalid convolution geometry: kernel {kernel}, stride {stride},'
            f' dilation {dilation}, padding {padding}')

    span = dilation * (kernel - 1) + 1
    out = (size + 2 * padding - span) // stride + 1
    if out < 1:
        raise ShapeException(
            f'input extent {size} is too small for a kernel spanning {span}'
            f' with padding {padding}')
    return out


def conv_output_shape(height: int, width: int,
                      geometry: ConvGeometry) -> Tuple[int, int]:
    return (
        conv_output_size(height, geometry.kernel_h, geometry.stride,
                         geometry.dilation, geometry.padding),
        conv_output_size(width, geometry.kernel_w, geometry.stride,
                         geometry.dilation, geometry.padding),
    )


class TileSpec:
    """Output tile size for one layer. The grid is derived per output shape by
    ceiling division.
    """

    def __init__(self, tile_height: int, tile_width: int) -> None:
        if tile_height < 1 or tile_width < 1:
            raise ShapeException(
                f'tile dimensions must be positive, got '
                f'{tile_height}x{tile_width}')
        self.tile_height = int(tile_height)
        self.tile_width = int(tile_width)

    @classmethod
    def default_for(cls, geometry: ConvGeometry) -> 'TileSpec':
        """8x8 for pointwise kernels, 6x6 for 3x3 stride 1 and 5x5 for
        anything with a bigger register footprint.
        """
        if geometry.kernel_h == 1 and geometry.kernel_w == 1:
            return cls(8, 8)
        if (geometry.kernel_h, geometry.kernel_w,
                geometry.stride) == (3, 3, 1):
            return cls(6, 6)
        return cls(5, 5)

    def grid(self, out_height: int, out_width: int) -> Tuple[int, int]:
        return (divup(out_height, self.tile_height),
                divup(out_width, self.tile_width))

    def tile_count(self, batch: int, out_height: int, out_width: int) -> int:
        rows, cols = self.grid(out_height, out_width)
        return batch * rows * cols

    def output_window(self, tile: TileIndex, out_height: int,
                      out_width: int) -> Window:
        """The tile's output pixels, clipped at the tensor border."""
        rows, cols = self.grid(out_height, out_width)
        if not (0 <= tile.row < rows and 0 <= tile.col < cols):
            raise ShapeException(f'tile {tile} outside grid {rows}x{cols}')

        top = tile.row * self.tile_height
        left = tile.col * self.tile_width
        return Window(top, min(top + self.tile_height, out_height), left,
                      min(left + self.tile_width, out_width))

    def tiles(self, batch: int, out_height: int,
              out_width: int) -> Iterator[TileIndex]:
        rows, cols = self.grid(out_height, out_width)
        for b in range(batch):
            for row in range(rows):
                for col in range(cols):
                    yield TileIndex(b, row, col)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TileSpec):
            return NotImplemented
        return (self.tile_height, self.tile_width) == (other.tile_height,
                                                       other.tile_width)

    def __repr__(self) -> str:
        return f'TileSpec({self.tile_height}x{self.tile_width})'


def input_window(output: Window, geometry: ConvGeometry, in_height: int,
                 in_width: int) -> Window:
    """The union of the receptive fields of every output pixel in a window,
    clipped to the input. Padding pixels are never part of it.
    """
    span_h = geometry.dilation * (geometry.kernel_h - 1)
    span_w = geometry.dilation * (geometry.kernel_w - 1)
    top = output.top * geometry.stride - geometry.padding
    bottom = (output.bottom - 1) * geometry.stride - geometry.padding + span_h + 1
    left = output.left * geometry.stride - geometry.padding
    right = (output.right - 1) * geometry.stride - geometry.padding + span_w + 1
    top = min(max(top, 0), in_height)
    left = min(max(left, 0), in_width)
    return Window(top, max(min(bottom, in_height), top), left,
                  max(min(right, in_width), left))


def tile_active_count(mask: UpdateMask, tile: TileIndex,
                      window: Window) -> int:
    """Number of active input pixels in a tile's input window."""
    if not 0 <= tile.batch < mask.batch:
        raise ShapeException(f'tile {tile} outside batch of {mask.batch}')
    if window.bottom <= window.top or window.right <= window.left:
        return 0

    top, left = max(window.top, 0), max(window.left, 0)
    region = mask.bits[tile.batch, top:window.bottom, left:window.right]
    return int(np.count_nonzero(region))


def tile_input_bounds(tiles: TileSpec, geometry: ConvGeometry,
                      out_height: int, out_width: int, in_height: int,
                      in_width: int) -> Tuple[np.ndarray, ...]:
    """Clipped input window bounds for every tile row and tile column.

    Returns (tops, bottoms, lefts, rights); row bounds have one entry per tile
    row, column bounds one per tile column.
    """
    rows, cols = tiles.grid(out_height, out_width)
    tops = np.empty(rows, dtype=np.int64)
    bottoms = np.empty(rows, dtype=np.int64)
    lefts = np.empty(cols, dtype=np.int64)
    rights = np.empty(cols, dtype=np.int64)

    for row in range(rows):
        out = tiles.output_window(TileIndex(0, row, 0), out_height, out_width)
        win = input_window(out, geometry, in_height, in_width)
        tops[row], bottoms[row] = win.top, win.bottom
    for col in range(cols):
        out = tiles.output_window(TileIndex(0, 0, col), out_height, out_width)
        win = input_window(out, geometry, in_height, in_width)
        lefts[col], rights[col] = win.left, win.right

    return tops, bottoms, lefts, rights


def tile_active_counts(mask: UpdateMask, tiles: TileSpec,
                       geometry: ConvGeometry, out_height: int,
                       out_width: int) -> np.ndarray:
    """Active counts for every tile at once, shaped (batch, rows, cols).

    Uses a summed-area table over the mask, so the cost does not depend on
    the window size.
    """
    tops, bottoms, lefts, rights = tile_input_bounds(
        tiles, geometry, out_height, out_width, mask.height, mask.width)

    summed = np.zeros((mask.batch, mask.height + 1, mask.width + 1),
                      dtype=np.int64)
    summed[:, 1:, 1:] = mask.bits.cumsum(axis=1).cumsum(axis=2)

    t, b = tops[:, None], bottoms[:, None]
    l, r = lefts[None, :], rights[None, :]
    return (summed[:, b, r] - summed[:, t, r] - summed[:, b, l] +
            summed[:, t, l])
