"""Binary mask helpers: IoU and bounding boxes."""

import numpy as np

from errors import DimensionMismatchError

# (row0, row1, col0, col1), half-open
BBox = tuple[int, int, int, int]
EMPTY_BBOX: BBox = (0, 0, 0, 0)


def iou(a: np.ndarray, b: np.ndarray) -> float:
    """
    Intersection over union of two binary masks.

    Args:
        a: Boolean mask
        b: Boolean mask of the same shape

    Returns:
        |a & b| / |a | b|, or 0.0 when both masks are empty
    """
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"Mask shapes differ: {a.shape} vs {b.shape}")
    union = np.count_nonzero(a | b)
    if union == 0:
        return 0.0
    return np.count_nonzero(a & b) / union


def bbox(mask: np.ndarray) -> BBox:
    """Tight half-open bounding box of a mask; EMPTY_BBOX for empty masks."""
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        return EMPTY_BBOX
    cols = np.flatnonzero(mask.any(axis=0))
    return int(rows[0]), int(rows[-1]) + 1, int(cols[0]), int(cols[-1]) + 1


def bboxes_overlap(a: BBox, b: BBox) -> bool:
    return a[0] < b[1] and b[0] < a[1] and a[2] < b[3] and b[2] < a[3]


def iou_in_box(a: np.ndarray, b: np.ndarray, box_a: BBox, box_b: BBox) -> float:
    """
    IoU restricted to the union of two bounding boxes.

    Equal to iou(a, b) when the boxes are tight; it only avoids scanning
    the whole image. Disjoint boxes short-circuit to 0.
    """
    if not bboxes_overlap(box_a, box_b):
        return 0.0
    r0, r1 = min(box_a[0], box_b[0]), max(box_a[1], box_b[1])
    c0, c1 = min(box_a[2], box_b[2]), max(box_a[3], box_b[3])
    return iou(a[r0:r1, c0:c1], b[r0:r1, c0:c1])
