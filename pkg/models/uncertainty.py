"""
Uncertainty map and entropy histogram models.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import ElemType, Tensor


@dataclass
class UncertaintyMap:
    """
    Per-pixel uncertainty in nats.

    Fields:
        values: H x W non-negative values
        measure: "predictive_entropy", "mutual_information" or "softmax_entropy"
        num_classes: C, sets the ln C scale used by heatmaps and histograms
        no_prediction: H x W mask of pixels without any prediction; their value
            is 0 but sweeps treat them as maximally uncertain
    """

    values: np.ndarray
    measure: str
    num_classes: int
    no_prediction: np.ndarray = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.no_prediction is None:
            self.no_prediction = np.zeros(self.values.shape, dtype=bool)
        self.no_prediction = np.asarray(self.no_prediction, dtype=bool)

    @property
    def max_value(self) -> float:
        """ln C, the largest entropy a C-class distribution can have."""
        return math.log(self.num_classes)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def effective_values(self) -> np.ndarray:
        """Values with no-prediction pixels raised to ln C."""
        return np.where(self.no_prediction, self.max_value, self.values)

    def to_tensor(self) -> Tensor:
        """Rank-3 float32 tensor: [values, no_prediction flag]."""
        stacked = np.stack([self.values, self.no_prediction.astype(np.float64)]).astype(np.float32)
        return Tensor.from_array(stacked, ElemType.FLOAT32)

    @classmethod
    def from_tensor(cls, tensor: Tensor, measure: str, num_classes: int) -> "UncertaintyMap":
        array = tensor.to_array()
        if array.ndim == 2:
            return cls(values=array, measure=measure, num_classes=num_classes)
        return cls(values=array[0], measure=measure, num_classes=num_classes, no_prediction=array[1] > 0.5)


@dataclass
class EntropyHistogram:
    """Counts of uncertainty values in uniform bins over [0, ln C]."""

    edges: np.ndarray
    counts: np.ndarray
    measure: str = "predictive_entropy"
    total: int = field(init=False)

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        self.total = int(self.counts.sum())

    @property
    def num_bins(self) -> int:
        return int(self.counts.size)

    def rows(self) -> list[tuple[float, float, int]]:
        """(bin_left, bin_right, count) per bin."""
        return [
            (float(self.edges[i]), float(self.edges[i + 1]), int(self.counts[i]))
            for i in range(self.num_bins)
        ]

    def __add__(self, other: "EntropyHistogram") -> "EntropyHistogram":
        if not np.array_equal(self.edges, other.edges):
            raise ValueError("Histograms with different bin edges cannot be added")
        return EntropyHistogram(edges=self.edges, counts=self.counts + other.counts, measure=self.measure)
