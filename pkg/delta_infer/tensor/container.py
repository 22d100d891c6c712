"""Raw tensor and mask containers.

Tensor (.dct):
    b'DCNT', u32 version, u32 batch, u32 height, u32 width, u32 channels,
    then float32 data in batch, row, column, channel order.
Mask (.dcm):
    b'DCNM', u32 version, u32 batch, u32 height, u32 width,
    then one byte (0 or 1) per pixel.

Every integer and float is little-endian.
"""
import struct
import numpy as np
from delta_infer.tensor.core import FeatureTensor, UpdateMask
from delta_infer.translation import _

TENSOR_MAGIC = b'DCNT'
MASK_MAGIC = b'DCNM'
FORMAT_VERSION = 1

_TENSOR_HEADER = struct.Struct('<4s5I')
_MASK_HEADER = struct.Struct('<4s4I')


class ContainerFormatException(ValueError):
    """Raised for truncated, foreign or otherwise malformed containers."""


def encode_tensor(tensor: FeatureTensor) -> bytes:
    header = _TENSOR_HEADER.pack(TENSOR_MAGIC, FORMAT_VERSION, *tensor.shape)
    return header + tensor.data.astype('<f4', copy=False).tobytes()


def decode_tensor(raw: bytes) -> FeatureTensor:
    if len(raw) < _TENSOR_HEADER.size:
        raise ContainerFormatException(_('Tensor container is truncated.'))

    magic, version, *shape = _TENSOR_HEADER.unpack_from(raw)
    if magic != TENSOR_MAGIC:
        raise ContainerFormatException(
            _('Not a tensor container (bad magic bytes).'))
    if version != FORMAT_VERSION:
        raise ContainerFormatException(
            _('Unsupported tensor container version %d.') % version)

    count = int(np.prod(shape))
    payload = raw[_TENSOR_HEADER.size:]
    if len(payload) != count * 4:
        raise ContainerFormatException(
            _('Tensor container holds %d data bytes, expected %d.') %
            (len(payload), count * 4))

    data = np.frombuffer(payload, dtype='<f4').astype(np.float32)
    return FeatureTensor(data.reshape(shape))


def encode_mask(mask: UpdateMask) -> bytes:
    header = _MASK_HEADER.pack(MASK_MAGIC, FORMAT_VERSION, *mask.shape)
    return header + mask.bits.astype(np.uint8).tobytes()


def decode_mask(raw: bytes) -> UpdateMask:
    if len(raw) < _MASK_HEADER.size:
        raise ContainerFormatException(_('Mask container is truncated.'))

    magic, version, *shape = _MASK_HEADER.unpack_from(raw)
    if magic != MASK_MAGIC:
        raise ContainerFormatException(
            _('Not a mask container (bad magic bytes).'))
    if version != FORMAT_VERSION:
        raise ContainerFormatException(
            _('Unsupported mask container version %d.') % version)

    payload = raw[_MASK_HEADER.size:]
    if len(payload) != int(np.prod(shape)):
        raise ContainerFormatException(_('Mask container size mismatch.'))

    bits = np.frombuffer(payload, dtype=np.uint8)
    if np.any(bits > 1):
        raise ContainerFormatException(_('Mask bytes must be 0 or 1.'))
    return UpdateMask(bits.reshape(shape).astype(bool))


def write_tensor(path: str, tensor: FeatureTensor) -> None:
    with open(path, 'wb') as handle:
        handle.write(encode_tensor(tensor))


def read_tensor(path: str) -> FeatureTensor:
    with open(path, 'rb') as handle:
        return decode_tensor(handle.read())


def write_mask(path: str, mask: UpdateMask) -> None:
    with open(path, 'wb') as handle:
        handle.write(encode_mask(mask))


def read_mask(path: str) -> UpdateMask:
    with open(path, 'rb') as handle:
        return decode_mask(handle.read())
