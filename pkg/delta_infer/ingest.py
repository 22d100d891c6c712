"""Frame sources.

A source is either a .dct container whose batch dimension enumerates the
frames, or a directory of 8-bit binary PNM images (P5 grayscale, P6 RGB)
read in file name order. Images are scaled to [0, 1] and then normalized
per channel with (value - mean) / scale.
"""
import os
import re
from typing import List, Sequence, Tuple
import numpy as np
from delta_infer.tensor.container import ContainerFormatException
from delta_infer.tensor.container import read_tensor, write_tensor
from delta_infer.tensor.core import FeatureTensor
from delta_infer.translation import _

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_SCALE = (0.229, 0.224, 0.225)

PNM_SUFFIXES = ('.pgm', '.ppm', '.pnm')

_PNM_TOKEN = re.compile(rb'(?:\s|#[^\n]*\n?)*(\S+)')


def _pnm_header(raw: bytes) -> Tuple[bytes, int, int, int, int]:
    """Returns (magic, width, height, maxval, offset of the pixel data)."""
    tokens, position = [], 0
    while len(tokens) < 4:
        match = _PNM_TOKEN.match(raw, position)
        if match is None:
            raise ContainerFormatException(_('PNM header is truncated.'))
        tokens.append(match.group(1))
        position = match.end()

    # Exactly one whitespace byte separates the header from the raster.
    if position >= len(raw) or not raw[position:position + 1].isspace():
        raise ContainerFormatException(_('PNM header is malformed.'))

    magic = tokens[0]
    try:
        width, height, maxval = (int(token) for token in tokens[1:])
    except ValueError:
        raise ContainerFormatException(
            _('PNM header holds a non-numeric size.')) from None
    return magic, width, height, maxval, position + 1


def decode_pnm(raw: bytes) -> Tuple[np.ndarray, int]:
    """Decodes a binary P5/P6 image into an (height, width, channels) uint8
    array and its maxval.
    """
    magic, width, height, maxval, offset = _pnm_header(raw)
    if magic not in (b'P5', b'P6'):
        raise ContainerFormatException(
            _('Only binary P5 and P6 images are supported.'))
    if width < 1 or height < 1 or not 0 < maxval < 256:
        raise ContainerFormatException(
            _('Only non-empty 8-bit PNM images are supported.'))

    channels = 1 if magic == b'P5' else 3
    size = width * height * channels
    payload = raw[offset:offset + size]
    if len(payload) != size:
        raise ContainerFormatException(_('PNM pixel data is truncated.'))

    pixels = np.frombuffer(payload, dtype=np.uint8)
    if maxval != 255 and np.any(pixels > maxval):
        raise ContainerFormatException(_('PNM pixel exceeds maxval.'))
    image = pixels.reshape(height, width, channels)
    return image, maxval


def encode_pnm(image: np.ndarray) -> bytes:
    """Encodes an (height, width) or (height, width, 1|3) uint8 array."""
    image = np.asarray(image, dtype=np.uint8)
    if image.ndim == 2:
        image = image[:, :, None]
    height, width, channels = image.shape
    magic = {1: b'P5', 3: b'P6'}[channels]
    return (magic + b'\n%d %d\n255\n' % (width, height) + image.tobytes())


def read_pnm(path: str) -> Tuple[np.ndarray, int]:
    with open(path, 'rb') as handle:
        return decode_pnm(handle.read())


def write_pnm(path: str, image: np.ndarray) -> None:
    with open(path, 'wb') as handle:
        handle.write(encode_pnm(image))


def normalize(values: np.ndarray, mean: Sequence[float],
              scale: Sequence[float]) -> np.ndarray:
    """Per-channel (value - mean) / scale. Grayscale images use the mean of
    the per-channel constants.
    """
    channels = values.shape[-1]
    mean = np.asarray(mean, dtype=np.float32)
    scale = np.asarray(scale, dtype=np.float32)
    if channels == 1 and mean.size > 1:
        mean, scale = mean.mean(keepdims=True), scale.mean(keepdims=True)
    if mean.size != channels or scale.size != channels:
        raise ValueError(
            _('normalization constants do not match {channels} channels'
              ).format(channels=channels))
    return ((values - mean) / scale).astype(np.float32)


def list_frames(directory: str) -> List[str]:
    names = sorted(name for name in os.listdir(directory)
                   if name.lower().endswith(PNM_SUFFIXES))
    return [os.path.join(directory, name) for name in names]


def ingest_frames(source: str,
                  mean: Sequence[float] = IMAGENET_MEAN,
                  scale: Sequence[float] = IMAGENET_SCALE,
                  normalized: bool = True) -> List[FeatureTensor]:
    """Reads a frame sequence as a list of (1, H, W, C) tensors.

    Containers are taken as stored; images are scaled into [0, 1] and, when
    normalized is set, normalized with mean and scale.
    """
    if os.path.isdir(source):
        return _ingest_directory(source, mean, scale, normalized)

    stack = read_tensor(source)
    return [FeatureTensor(stack.data[i:i + 1]) for i in range(stack.batch)]


def _ingest_directory(directory: str, mean: Sequence[float],
                      scale: Sequence[float],
                      normalized: bool) -> List[FeatureTensor]:
    paths = list_frames(directory)
    if not paths:
        raise ContainerFormatException(
            _('{directory} holds no PNM frames').format(directory=directory))

    frames, shape = [], None
    for path in paths:
        image, maxval = read_pnm(path)
        if shape is None:
            shape = image.shape
        elif image.shape != shape:
            raise ContainerFormatException(
                _('{path} is shaped {got}, earlier frames are {want}').format(
                    path=path, got=image.shape, want=shape))

        values = image.astype(np.float32) / np.float32(maxval)
        if normalized:
            values = normalize(values, mean, scale)
        frames.append(FeatureTensor(values[None]))
    return frames


def write_frames(path: str, frames: List[FeatureTensor]) -> None:
    """Stacks single-image frames into one multi-frame container."""
    write_tensor(path,
                 FeatureTensor(np.concatenate([f.data for f in frames])))
