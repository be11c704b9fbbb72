"""
Tensor container for the PFTN file format.
"""

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from errors import ElementCountMismatchError, UnknownElementTypeError


class ElemType(IntEnum):
    """Element types a PFTN file can hold (value = on-disk type byte)."""

    FLOAT32 = 0
    UINT16 = 1
    UINT8 = 2

    @property
    def dtype(self) -> np.dtype:
        """Little-endian numpy dtype for this element type."""
        return np.dtype(_DTYPES[self])

    @property
    def itemsize(self) -> int:
        return self.dtype.itemsize

    @classmethod
    def from_dtype(cls, dtype) -> "ElemType":
        dtype = np.dtype(dtype)
        for elem_type, name in _DTYPES.items():
            if np.dtype(name) == dtype.newbyteorder("<"):
                return elem_type
        raise UnknownElementTypeError(f"No PFTN element type for dtype {dtype}")


_DTYPES = {
    ElemType.FLOAT32: "<f4",
    ElemType.UINT16: "<u2",
    ElemType.UINT8: "u1",
}


@dataclass(frozen=True, eq=False)
class Tensor:
    """
    An n-dimensional array of rank 1..4 stored in C order.

    Fields:
        dims: Size of every axis (all positive)
        elem_type: One of float32, uint16, uint8
        data: Flat or shaped numpy buffer holding product(dims) elements
    """

    dims: tuple[int, ...]
    elem_type: ElemType
    data: np.ndarray

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        if not 1 <= len(dims) <= 4:
            raise ElementCountMismatchError(f"Tensor rank must be 1..4, got {len(dims)}")
        if any(d < 1 for d in dims):
            raise ElementCountMismatchError(f"Tensor dims must be positive, got {dims}")
        expected = int(np.prod(dims, dtype=np.int64))
        if self.data.size != expected:
            raise ElementCountMismatchError(
                f"dims {dims} need {expected} elements, buffer holds {self.data.size}"
            )

    @property
    def rank(self) -> int:
        return len(self.dims)

    def to_array(self) -> np.ndarray:
        """Return the data as a native-endian array shaped by dims."""
        native = self.elem_type.dtype.newbyteorder("=")
        return np.asarray(self.data, dtype=self.elem_type.dtype).reshape(self.dims).astype(native, copy=False)

    @classmethod
    def from_array(cls, array: np.ndarray, elem_type: ElemType = None) -> "Tensor":
        """Wrap a numpy array, converting to the requested (or inferred) element type."""
        array = np.asarray(array)
        elem_type = ElemType.from_dtype(array.dtype) if elem_type is None else elem_type
        data = np.ascontiguousarray(array, dtype=elem_type.dtype)
        return cls(dims=tuple(array.shape), elem_type=elem_type, data=data)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Tensor):
            return NotImplemented
        return (
            self.dims == other.dims
            and self.elem_type == other.elem_type
            and self.to_array().tobytes() == other.to_array().tobytes()
        )
