"""Dense feature tensors and per-pixel update masks.

Tensors are stored batch, row, column, channel (NHWC) so that all channels
of a pixel sit next to each other. Sparse layers read and write whole pixels,
and with this layout a pixel is one contiguous run of memory.

A pixel whose mask bit is false holds stale values. Nothing may read them.
In debug runs they are poisoned with NaN so an illegal read shows up as a NaN
in the output instead of a silently wrong number.
"""
from typing import Tuple
import numpy as np

Shape = Tuple[int, int, int, int]


class ShapeException(ValueError):
    """Raised when tensors, masks or layer parameters disagree about their
    shapes.
    """


class NonFiniteInputException(ValueError):
    """Raised when a frame handed to the engine contains NaN or inf."""


class FeatureTensor:
    """A dense 4-D float32 buffer holding either deltas or accumulated values.

    data - numpy array shaped (batch, height, width, channels), C-contiguous
    """
    __slots__ = ('data', )

    def __init__(self, data: np.ndarray) -> None:
        data = np.ascontiguousarray(data, dtype=np.float32)
        if data.ndim != 4:
            raise ShapeException(
                f'feature tensors are 4-D (NHWC), got shape {data.shape}')
        self.data = data

    @classmethod
    def zeros(cls, shape: Shape) -> 'FeatureTensor':
        return cls(np.zeros(shape, dtype=np.float32))

    @classmethod
    def empty(cls, shape: Shape, poison: bool = False) -> 'FeatureTensor':
        """An output buffer whose contents are undefined until written.
        Poisoned buffers start out as NaN everywhere.
        """
        if poison:
            return cls(np.full(shape, np.nan, dtype=np.float32))
        return cls(np.empty(shape, dtype=np.float32))

    @property
    def shape(self) -> Shape:
        return self.data.shape

    @property
    def batch(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def channels(self) -> int:
        return self.data.shape[3]

    @property
    def spatial_shape(self) -> Tuple[int, int, int]:
        return self.data.shape[:3]

    def flat(self) -> np.ndarray:
        """The storage as one flat buffer in batch, row, column, channel
        order.
        """
        return self.data.reshape(-1)

    def copy(self) -> 'FeatureTensor':
        return FeatureTensor(self.data.copy())

    def poison_inactive(self, mask: 'UpdateMask') -> None:
        """Overwrites every pixel that the mask marks as stale with NaN."""
        mask.check_annotates(self)
        self.data[~mask.bits] = np.nan

    def dense_equivalent(self, mask: 'UpdateMask') -> np.ndarray:
        """Returns a copy where stale pixels are explicit zeros. Only active
        pixels are read.
        """
        mask.check_annotates(self)
        dense = np.zeros(self.shape, dtype=np.float32)
        dense[mask.bits] = self.data[mask.bits]
        return dense

    def check_finite(self) -> None:
        if not np.all(np.isfinite(self.data)):
            raise NonFiniteInputException('frame contains NaN or inf values')

    def __repr__(self) -> str:
        return f'FeatureTensor(shape={self.shape})'


class UpdateMask:
    """One boolean per (batch, row, col). True means every channel of that
    pixel in the annotated tensor is a valid delta.

    Stored one byte per pixel rather than bit-packed, so tile workers can
    write their own pixels without touching anyone else's byte.
    """
    __slots__ = ('bits', )

    def __init__(self, bits: np.ndarray) -> None:
        bits = np.ascontiguousarray(bits, dtype=bool)
        if bits.ndim != 3:
            raise ShapeException(
                f'update masks are 3-D (NHW), got shape {bits.shape}')
        self.bits = bits

    @classmethod
    def full(cls, shape: Tuple[int, int, int], value: bool) -> 'UpdateMask':
        return cls(np.full(shape, value, dtype=bool))

    @classmethod
    def empty_like(cls, tensor: FeatureTensor) -> 'UpdateMask':
        return cls.full(tensor.spatial_shape, False)

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.bits.shape

    @property
    def batch(self) -> int:
        return self.bits.shape[0]

    @property
    def height(self) -> int:
        return self.bits.shape[1]

    @property
    def width(self) -> int:
        return self.bits.shape[2]

    def count(self) -> int:
        return int(np.count_nonzero(self.bits))

    def any(self) -> bool:
        return bool(self.bits.any())

    def density(self) -> float:
        if self.bits.size == 0:
            return 0.0
        return self.count() / self.bits.size

    def copy(self) -> 'UpdateMask':
        return UpdateMask(self.bits.copy())

    def check_annotates(self, tensor: FeatureTensor) -> None:
        if self.shape != tensor.spatial_shape:
            raise ShapeException(
                f'mask shape {self.shape} does not match tensor '
                f'spatial shape {tensor.spatial_shape}')

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, UpdateMask):
            return NotImplemented
        return self.shape == other.shape and bool(
            np.array_equal(self.bits, other.bits))

    def __repr__(self) -> str:
        return f'UpdateMask(shape={self.shape}, active={self.count()})'
