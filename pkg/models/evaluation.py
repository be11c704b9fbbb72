"""
Panoptic quality statistics, results and uncertainty-sweep curves.
"""

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional


@dataclass
class PQStatClass:
    """Per-class matching counts."""

    tp: int = 0
    fp: int = 0
    fn: int = 0
    iou_sum: float = 0.0

    def __iadd__(self, other: "PQStatClass") -> "PQStatClass":
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn
        self.iou_sum += other.iou_sum
        return self

    @property
    def defined(self) -> bool:
        return (self.tp + self.fp + self.fn) > 0


class PQStats:
    """Per-class TP/FP/FN counts and IoU sums; summable across images."""

    def __init__(self, per_class: Optional[dict[int, PQStatClass]] = None):
        self.per_class: dict[int, PQStatClass] = defaultdict(PQStatClass)
        if per_class:
            for class_id, stat in per_class.items():
                self.per_class[class_id] += stat

    def __getitem__(self, class_id: int) -> PQStatClass:
        return self.per_class[class_id]

    def __iadd__(self, other: "PQStats") -> "PQStats":
        for class_id, stat in other.per_class.items():
            self.per_class[class_id] += stat
        return self

    def __add__(self, other: "PQStats") -> "PQStats":
        out = PQStats(self.per_class)
        out += other
        return out

    def class_ids(self) -> list[int]:
        return sorted(self.per_class)

    def totals(self) -> PQStatClass:
        """Counts summed over every class (micro aggregation)."""
        total = PQStatClass()
        for stat in self.per_class.values():
            total += stat
        return total


@dataclass
class PQClassResult:
    pq: float
    sq: float
    rq: float
    defined: bool
    sq_defined: bool
    tp: int = 0
    fp: int = 0
    fn: int = 0


@dataclass
class PQAggregate:
    """Unweighted mean over the defined classes of a group."""

    pq: float
    sq: float
    rq: float
    n: int


@dataclass
class PQResult:
    per_class: dict[int, PQClassResult]
    all: PQAggregate
    things: PQAggregate
    stuff: PQAggregate
    precision: float = 0.0
    recall: float = 0.0


@dataclass
class SweepPoint:
    threshold: float
    removed_fraction: float
    tpr: float
    fdr: float
    tp: int = 0
    fp: int = 0
    fn: int = 0


@dataclass
class SweepCurve:
    """Points of a TPR-versus-FDR sweep, ordered by ascending threshold."""

    points: list[SweepPoint] = field(default_factory=list)
    label: str = ""

    def thresholds(self) -> list[float]:
        return [p.threshold for p in self.points]

    def tprs(self) -> list[float]:
        return [p.tpr for p in self.points]

    def fdrs(self) -> list[float]:
        return [p.fdr for p in self.points]

    def removed_fractions(self) -> list[float]:
        return [p.removed_fraction for p in self.points]
