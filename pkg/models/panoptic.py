"""
Panoptic map data model: per-pixel class id plus instance id.
"""

from dataclasses import dataclass

import numpy as np

from errors import DimensionMismatchError, InternalError

VOID = -1  # class id of an unassigned pixel
NO_INSTANCE = 0


@dataclass(eq=False)
class PanopticMap:
    """
    H x W grid of (class_id, instance_id) cells.

    class_ids holds VOID (-1) for unassigned pixels. instance_ids is 0 for
    "no instance" and positive only on thing classes; void cells carry
    instance 0.
    """

    class_ids: np.ndarray
    instance_ids: np.ndarray

    def __post_init__(self):
        self.class_ids = np.asarray(self.class_ids, dtype=np.int32)
        self.instance_ids = np.asarray(self.instance_ids, dtype=np.int32)
        if self.class_ids.ndim != 2 or self.class_ids.shape != self.instance_ids.shape:
            raise DimensionMismatchError(
                f"class map {self.class_ids.shape} and instance map {self.instance_ids.shape} must be equal 2-D"
            )

    @property
    def height(self) -> int:
        return self.class_ids.shape[0]

    @property
    def width(self) -> int:
        return self.class_ids.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.class_ids.shape

    @property
    def void_mask(self) -> np.ndarray:
        return self.class_ids == VOID

    @classmethod
    def empty(cls, height: int, width: int) -> "PanopticMap":
        """All-void map."""
        return cls(
            class_ids=np.full((height, width), VOID, dtype=np.int32),
            instance_ids=np.zeros((height, width), dtype=np.int32),
        )

    def copy(self) -> "PanopticMap":
        return PanopticMap(self.class_ids.copy(), self.instance_ids.copy())

    def segments(self) -> list[tuple[int, int]]:
        """Distinct non-void (class_id, instance_id) pairs in raster order of first appearance."""
        keys = self.segment_keys()
        valid = keys >= 0
        flat = keys[valid]
        if flat.size == 0:
            return []
        _, first = np.unique(flat, return_index=True)
        ordered = flat[np.sort(first)]
        return [self.decode_key(int(k)) for k in ordered]

    def segment_keys(self) -> np.ndarray:
        """
        One int64 key per pixel identifying its (class, instance) segment; -1 for void.

        key = class_id * 2^31 + instance_id keeps keys unique for any valid ids.
        """
        keys = self.class_ids.astype(np.int64) * (1 << 31) + self.instance_ids.astype(np.int64)
        keys[self.void_mask] = -1
        return keys

    @staticmethod
    def decode_key(key: int) -> tuple[int, int]:
        return key >> 31, key & ((1 << 31) - 1)

    def check_invariants(self, thing_lookup) -> None:
        """
        Raise InternalError when instance ids sit on void or non-thing cells.

        Args:
            thing_lookup: Callable mapping a class-id array to a boolean "is thing" array
        """
        has_instance = self.instance_ids > 0
        if np.any(has_instance & self.void_mask):
            raise InternalError("Void cells carry an instance id")
        if np.any(has_instance & ~thing_lookup(self.class_ids)):
            raise InternalError("Instance ids found on non-thing classes")
        if np.any(self.instance_ids < 0):
            raise InternalError("Negative instance ids")

    def relabel_instances(self) -> "PanopticMap":
        """
        Canonical form: instance ids renumbered densely from 1 in raster order of
        first appearance. Two maps equal up to instance relabelling have equal
        canonical forms.
        """
        out = self.copy()
        has_instance = self.instance_ids > 0
        if not np.any(has_instance):
            return out
        keys = self.segment_keys()[has_instance]
        _, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
        # rank of each unique key by first appearance
        order = np.argsort(first, kind="stable")
        rank = np.empty_like(order)
        rank[order] = np.arange(1, order.size + 1)
        out.instance_ids[has_instance] = rank[inverse.ravel()]
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, PanopticMap):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.class_ids, other.class_ids)
            and np.array_equal(self.instance_ids, other.instance_ids)
        )

