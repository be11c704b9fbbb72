"""
Data models for instance matching across samples.
"""

from dataclasses import dataclass, field

import numpy as np

from config import config, min_member_count
from errors import ConfigError


@dataclass
class FusionParams:
    """
    Thresholds for thing fusion.

    Defaults: IoU threshold 0.6 and a minimum of 80% of the samples merged
    into an instance before it is kept.
    """

    iou_threshold: float = field(default_factory=lambda: config.FUSION_IOU_THRESHOLD)
    min_member_fraction: float = field(default_factory=lambda: config.FUSION_MIN_MEMBER_FRACTION)

    def __post_init__(self):
        if not 0.0 <= self.iou_threshold <= 1.0:
            raise ConfigError(f"iou_threshold must be in [0, 1], got {self.iou_threshold}")
        if not 0.0 < self.min_member_fraction <= 1.0:
            raise ConfigError(f"min_member_fraction must be in (0, 1], got {self.min_member_fraction}")

    def min_members(self, sample_count: int) -> int:
        return min_member_count(self.min_member_fraction, sample_count)


@dataclass
class InstanceRecord:
    """
    One fused instance (a cluster of proposals from any samples).

    Fields:
        mask: H x W boolean union of all member masks
        member_count: Number of merged proposals, including the founder
        mean_softmax: Running mean of the members' class distributions
        founding_order: Insertion index in the record list
        members: (sample, kept proposal index) of every member
        bbox: (row0, row1, col0, col1) half-open bounds of mask
    """

    mask: np.ndarray
    member_count: int
    mean_softmax: np.ndarray
    founding_order: int
    members: list[tuple[int, int]] = field(default_factory=list)
    bbox: tuple[int, int, int, int] = (0, 0, 0, 0)

    @property
    def area(self) -> int:
        return int(self.mask.sum())

    @property
    def confidence(self) -> float:
        return float(self.mean_softmax.max())

    @property
    def class_id(self) -> int:
        return int(np.argmax(self.mean_softmax))

    def merge(self, mask: np.ndarray, softmax: np.ndarray, bbox: tuple[int, int, int, int], member: tuple[int, int]):
        """Grow the mask by union and fold the member into the running mean."""
        self.mask |= mask
        self.member_count += 1
        self.mean_softmax = self.mean_softmax + (softmax - self.mean_softmax) / self.member_count
        self.members.append(member)
        self.bbox = (
            min(self.bbox[0], bbox[0]), max(self.bbox[1], bbox[1]),
            min(self.bbox[2], bbox[2]), max(self.bbox[3], bbox[3]),
        )
