"""Tensors, update masks, tiles and the raw tensor container."""
from delta_infer.tensor.core import FeatureTensor, UpdateMask
from delta_infer.tensor.core import ShapeException, NonFiniteInputException
from delta_infer.tensor.tiles import ConvGeometry, TileSpec, TileIndex, Window
from delta_infer.tensor.tiles import input_window, tile_active_count
from delta_infer.tensor.masks import mask_dilate_conv, mask_dilate_radius
from delta_infer.tensor.masks import mask_union
from delta_infer.tensor.container import read_tensor, write_tensor, ContainerFormatException
