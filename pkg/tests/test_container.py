import sys
import os
sys.path.append(os.getcwd())

import struct

import numpy as np
import pytest

from delta_infer.tensor.container import ContainerFormatException
from delta_infer.tensor.container import encode_tensor, decode_tensor
from delta_infer.tensor.container import encode_mask, decode_mask
from delta_infer.tensor.container import read_tensor, write_tensor
from delta_infer.tensor.container import read_mask, write_mask
from delta_infer.tensor.core import FeatureTensor, UpdateMask


def test_tensor_header_layout():
    tensor = FeatureTensor(np.arange(6).reshape(1, 1, 2, 3))
    raw = encode_tensor(tensor)
    assert raw[:4] == b'DCNT'
    assert struct.unpack('<5I', raw[4:24]) == (1, 1, 1, 2, 3)
    assert len(raw) == 24 + 6 * 4
    assert struct.unpack('<f', raw[24:28]) == (0.0, )
    assert struct.unpack('<f', raw[28:32]) == (1.0, )


def test_tensor_file_keeps_values(tmp_path):
    rng = np.random.RandomState(1)
    tensor = FeatureTensor(rng.standard_normal((2, 3, 4, 5)))
    path = str(tmp_path / 'frame.dct')
    write_tensor(path, tensor)
    loaded = read_tensor(path)
    assert loaded.shape == tensor.shape
    assert np.array_equal(loaded.data, tensor.data)


def test_mask_file_keeps_bits(tmp_path):
    bits = np.zeros((1, 3, 3), dtype=bool)
    bits[0, 1, 2] = True
    path = str(tmp_path / 'mask.dcm')
    write_mask(path, UpdateMask(bits))
    raw = encode_mask(UpdateMask(bits))
    assert raw[:4] == b'DCNM'
    assert len(raw) == 20 + 9
    assert read_mask(path) == UpdateMask(bits)


def test_malformed_tensors_are_rejected():
    raw = encode_tensor(FeatureTensor(np.zeros((1, 2, 2, 1))))
    with pytest.raises(ContainerFormatException):
        decode_tensor(raw[:10])
    with pytest.raises(ContainerFormatException):
        decode_tensor(raw[:-1])
    with pytest.raises(ContainerFormatException):
        decode_tensor(b'XXXX' + raw[4:])
    with pytest.raises(ContainerFormatException):
        decode_tensor(raw[:4] + struct.pack('<I', 2) + raw[8:])


def test_malformed_masks_are_rejected():
    raw = encode_mask(UpdateMask.full((1, 2, 2), True))
    with pytest.raises(ContainerFormatException):
        decode_mask(raw[:-1])
    with pytest.raises(ContainerFormatException):
        decode_mask(raw[:-1] + b'\x02')
    with pytest.raises(ContainerFormatException):
        decode_mask(b'DCNT' + raw[4:])
