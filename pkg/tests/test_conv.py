import sys
import os
sys.path.append(os.getcwd())

from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from delta_infer.layers.conv import sparse_conv2d, dispatch_modes
from delta_infer.layers.conv import DEFAULT_OPTIONS
from delta_infer.layers.state import ConvParams
from delta_infer.oracle import dense_conv2d
from delta_infer.stats import RunStats, recount_conv
from delta_infer.tensor.core import FeatureTensor, UpdateMask, ShapeException
from delta_infer.tensor.tiles import TileSpec


def make_params(in_channels=3, out_channels=4, kernel=3, stride=1,
                dilation=1, padding=None, groups=1, bias=True, seed=0):
    rng = np.random.RandomState(seed)
    if padding is None:
        padding = dilation * (kernel - 1) // 2
    weights = rng.standard_normal(
        (out_channels, kernel, kernel, in_channels // groups))
    return ConvParams(weights,
                      rng.standard_normal(out_channels) if bias else None,
                      stride=stride, dilation=dilation, padding=padding,
                      groups=groups, in_channels=in_channels)


def sparse_input(shape, active, seed=0):
    """Random deltas on `active` distinct random pixels, NaN everywhere else so
    any read of an inactive pixel shows up.
    """
    rng = np.random.RandomState(seed)
    batch, height, width, channels = shape
    data = np.full(shape, np.nan, dtype=np.float32)
    bits = np.zeros(shape[:3], dtype=bool)
    picks = rng.choice(batch * height * width, active, replace=False)
    b, y, x = np.unravel_index(picks, shape[:3])
    bits[b, y, x] = True
    data[b, y, x] = rng.standard_normal((active, channels))
    return FeatureTensor(data), UpdateMask(bits)


def run(delta, mask, params, tile_mode, tiles=None, first_frame=False,
        options=None, executor=None, stats=None):
    options = options._replace(tile_mode=tile_mode)
    return sparse_conv2d(delta, mask, params, tiles, first_frame, stats,
                         'conv', options, executor)


def active_values(delta, mask):
    return delta.data[mask.bits]


@pytest.mark.parametrize('active', range(7))
def test_dispatch_paths_are_bit_identical(active, options):
    params = make_params()
    delta, mask = sparse_input((1, 12, 12, 3), active, seed=active)
    tiles = TileSpec(6, 6)

    per_tile, mask_a = run(delta, mask, params, 'per_tile', tiles,
                           options=options)
    per_pixel, mask_b = run(delta, mask, params, 'per_pixel', tiles,
                            options=options)
    hybrid, mask_c = run(delta, mask, params, 'hybrid', tiles,
                         options=options)

    assert mask_a == mask_b == mask_c
    assert mask_a.count() == 0 or not np.isnan(per_tile.data[mask_a.bits]).any()
    assert np.array_equal(active_values(per_tile, mask_a),
                          active_values(per_pixel, mask_b))
    assert np.array_equal(active_values(per_tile, mask_a),
                          active_values(hybrid, mask_c))


@pytest.mark.parametrize('pixels,counts', [(4, (3, 1, 0)), (5, (3, 0, 1))])
def test_hybrid_goes_dense_above_four_active_inputs(pixels, counts, options):
    params = make_params()
    data = np.full((1, 12, 12, 3), np.nan, dtype=np.float32)
    bits = np.zeros((1, 12, 12), dtype=bool)
    rng = np.random.RandomState(pixels)
    # all inside the input window of the top left 6x6 tile only
    for y, x in [(2, 2), (2, 3), (3, 2), (3, 3), (4, 4)][:pixels]:
        bits[0, y, x] = True
        data[0, y, x] = rng.standard_normal(3)
    delta, mask = FeatureTensor(data), UpdateMask(bits)
    tiles = TileSpec(6, 6)

    stats = RunStats()
    hybrid, mask_out = run(delta, mask, params, 'hybrid', tiles,
                           options=options, stats=stats)
    layer = stats.layers['conv']
    assert (layer.tiles_skipped, layer.tiles_very_sparse,
            layer.tiles_dense) == counts

    for mode in ('per_tile', 'per_pixel'):
        other, other_mask = run(delta, mask, params, mode, tiles,
                                options=options)
        assert other_mask == mask_out
        assert np.array_equal(active_values(other, other_mask),
                              active_values(hybrid, mask_out))


@pytest.mark.parametrize('active', [1, 3, 6, 40])
def test_sparse_conv_matches_dense_conv(active, options):
    params = make_params()
    delta, mask = sparse_input((1, 12, 12, 3), active, seed=10 + active)
    out, mask_out = run(delta, mask, params, 'hybrid', options=options)

    reference = dense_conv2d(FeatureTensor(delta.dense_equivalent(mask)),
                             params, with_bias=False)
    assert np.allclose(out.data[mask_out.bits],
                       reference.data[mask_out.bits], atol=1e-5)
    # everything outside the output mask is an exact zero in the reference
    assert not reference.data[~mask_out.bits].any()


@pytest.mark.parametrize('stride,dilation,kernel', [(2, 1, 3), (1, 2, 3),
                                                    (1, 1, 1), (2, 1, 5)])
def test_strided_and_dilated_conv(stride, dilation, kernel, options):
    params = make_params(kernel=kernel, stride=stride, dilation=dilation)
    delta, mask = sparse_input((2, 15, 13, 3), 12, seed=stride + dilation)
    for mode in ('hybrid', 'per_tile', 'per_pixel'):
        out, mask_out = run(delta, mask, params, mode, options=options)
        reference = dense_conv2d(FeatureTensor(delta.dense_equivalent(mask)),
                                 params, with_bias=False)
        assert out.shape == reference.shape
        assert np.allclose(out.data[mask_out.bits],
                           reference.data[mask_out.bits], atol=1e-5)


def test_grouped_and_depthwise_conv(options):
    grouped = make_params(in_channels=4, out_channels=6, groups=2)
    depthwise = make_params(in_channels=4, out_channels=4, groups=4)
    assert depthwise.depthwise and not grouped.depthwise

    delta, mask = sparse_input((1, 10, 10, 4), 30, seed=4)
    dense_delta = FeatureTensor(delta.dense_equivalent(mask))
    for params in (grouped, depthwise):
        stats = RunStats()
        out, mask_out = run(delta, mask, params, 'hybrid', options=options,
                            stats=stats)
        reference = dense_conv2d(dense_delta, params, with_bias=False)
        assert np.allclose(out.data[mask_out.bits],
                           reference.data[mask_out.bits], atol=1e-5)

    # depthwise layers never take the dense tile path in hybrid mode
    assert stats.layers['conv'].tiles_dense == 0


def test_bias_enters_only_on_the_first_frame(options):
    params = make_params()
    delta = FeatureTensor(np.zeros((1, 6, 6, 3)))
    mask = UpdateMask.full((1, 6, 6), True)

    first, _ = run(delta, mask, params, 'hybrid', first_frame=True,
                   options=options)
    later, _ = run(delta, mask, params, 'hybrid', options=options)
    assert np.allclose(first.data, params.bias)
    assert not later.data.any()


def test_single_pixel_stats(options):
    params = make_params(in_channels=2, out_channels=5)
    data = np.zeros((1, 12, 12, 2), dtype=np.float32)
    bits = np.zeros((1, 12, 12), dtype=bool)
    data[0, 2, 2] = 1.0
    bits[0, 2, 2] = True
    stats = RunStats()
    _out, mask_out = run(FeatureTensor(data), UpdateMask(bits), params,
                         'hybrid', TileSpec(6, 6), options=options,
                         stats=stats)

    layer = stats.layers['conv']
    assert mask_out.count() == 9
    assert (layer.tiles_skipped, layer.tiles_very_sparse,
            layer.tiles_dense) == (3, 1, 0)
    assert layer.mac_performed == 9 * 2 * 5
    assert layer.mac_dense_equivalent == 12 * 12 * 9 * 2 * 5
    assert stats.mac_counter == layer.mac_performed
    assert layer.bytes_touched_estimate > 0


@pytest.mark.parametrize('mode', ['hybrid', 'per_tile', 'per_pixel'])
def test_stats_agree_with_recount(mode, options):
    params = make_params(stride=2)
    tiles = TileSpec(5, 5)
    for active in (0, 2, 5, 30, 120):
        delta, mask = sparse_input((2, 20, 20, 3), active, seed=active)
        stats = RunStats()
        run(delta, mask, params, mode, tiles, options=options, stats=stats)
        layer = stats.layers['conv']
        recount = recount_conv(mask, params.geometry, tiles,
                               params.in_per_group, params.out_channels,
                               options.very_sparse_max, mode)
        assert (layer.tiles_skipped, layer.tiles_very_sparse,
                layer.tiles_dense, layer.mac_performed,
                layer.mac_dense_equivalent) == (
                    recount.tiles_skipped, recount.tiles_very_sparse,
                    recount.tiles_dense, recount.mac_performed,
                    recount.mac_dense_equivalent)


def test_threaded_tiles_give_the_same_bits(options):
    params = make_params()
    delta, mask = sparse_input((1, 30, 30, 3), 80, seed=7)
    serial, _ = run(delta, mask, params, 'hybrid', options=options)
    with ThreadPoolExecutor(max_workers=4) as executor:
        threaded, mask_out = run(delta, mask, params, 'hybrid',
                                 options=options._replace(threads=4),
                                 executor=executor)
    assert np.array_equal(serial.data[mask_out.bits],
                          threaded.data[mask_out.bits])


def test_poisoned_output_outside_the_mask(options):
    params = make_params()
    delta, mask = sparse_input((1, 12, 12, 3), 1, seed=2)
    out, mask_out = run(delta, mask, params, 'hybrid',
                        options=options._replace(poison=True))
    assert np.isnan(out.data[~mask_out.bits]).all()
    assert not np.isnan(out.data[mask_out.bits]).any()


def options_for(mode):
    return DEFAULT_OPTIONS._replace(tile_mode=mode)


def test_dispatch_modes():
    counts = np.array([[[0, 1, 4, 5, 9]]])
    dense, sparse = dispatch_modes(counts, options_for('hybrid'))
    assert dense.tolist() == [[[False, False, False, True, True]]]
    assert sparse.tolist() == [[[False, True, True, False, False]]]

    dense, sparse = dispatch_modes(counts, options_for('per_tile'))
    assert not sparse.any() and dense.sum() == 4
    dense, sparse = dispatch_modes(counts, options_for('per_pixel'))
    assert not dense.any() and sparse.sum() == 4
    dense, sparse = dispatch_modes(counts, options_for('hybrid'), True)
    assert not dense.any() and sparse.sum() == 4


def test_channel_mismatch(options):
    params = make_params(in_channels=3)
    delta, mask = sparse_input((1, 6, 6, 2), 1)
    with pytest.raises(ShapeException):
        run(delta, mask, params, 'hybrid', options=options)
