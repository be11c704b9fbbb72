"""
Specs for synthetic scenes and ensembles used as a fusion oracle.
"""

from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from errors import ConfigError

from .catalog import ClassCatalog


@dataclass
class SceneSpec:
    """
    A synthetic panoptic scene.

    Stuff classes fill horizontal bands of the image top to bottom; thing
    instances are rectangles or ellipses placed without overlap (unless
    allow_overlap) and at least min_gap pixels apart.
    """

    height: int = 128
    width: int = 128
    num_instances: int = 4
    min_size: int = 24
    max_size: int = 40
    shapes: list[str] = field(default_factory=lambda: ["rectangle", "ellipse"])
    stuff_classes: list[str] = field(default_factory=lambda: ["sky", "building", "road"])
    thing_classes: list[str] = field(default_factory=lambda: [
        "car", "person", "bicycle", "truck", "bus", "dog", "cat", "bird",
    ])
    min_gap: int = 3
    allow_overlap: bool = False
    max_retries: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ConfigError("Scene size must be positive")
        if self.num_instances < 0:
            raise ConfigError("num_instances must be >= 0")
        if not 1 <= self.min_size <= self.max_size:
            raise ConfigError("Instance sizes need 1 <= min_size <= max_size")
        if not self.stuff_classes:
            raise ConfigError("At least one stuff class is required")
        if self.num_instances and not self.thing_classes:
            raise ConfigError("Instances need at least one thing class")
        unknown = set(self.shapes) - {"rectangle", "ellipse"}
        if unknown or not self.shapes:
            raise ConfigError(f"Unknown shapes: {sorted(unknown)}")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SceneSpec":
        try:
            return cls(**data)
        except TypeError as e:
            raise ConfigError(f"Bad scene spec: {e}") from e

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class JitterSpec:
    """
    Per-sample variation applied when turning a scene into an ensemble.

    Fields:
        translation: Max absolute shift (pixels) of an instance mask per axis
        dilation: Max dilation radius (pixels) of an instance mask
        logit_noise: Std-dev of Gaussian noise added to class logits
        dropout: Probability that a sample loses an instance
        seed: Stream seed
    """

    translation: int = 0
    dilation: int = 0
    logit_noise: float = 0.0
    dropout: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.translation < 0 or self.dilation < 0 or self.logit_noise < 0:
            raise ConfigError("Jitter magnitudes must be >= 0")
        if not 0.0 <= self.dropout <= 1.0:
            raise ConfigError("dropout must be in [0, 1]")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "JitterSpec":
        try:
            return cls(**data)
        except TypeError as e:
            raise ConfigError(f"Bad jitter spec: {e}") from e

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class PlantedInstance:
    instance_id: int
    class_id: int
    mask: np.ndarray

    @property
    def area(self) -> int:
        return int(self.mask.sum())


@dataclass
class Correspondence:
    """Which planted instance (or stuff class) proposal n of sample q encodes; -1 for none."""

    sample: int
    proposal: int
    instance_id: int
    class_id: int
    kind: str  # "thing", "stuff" or "background"


@dataclass
class SceneRegistry:
    """
    Everything planted into a synthetic scene.

    Fields:
        instances: Planted thing instances in placement order
        stuff_map: H x W stuff class id of every pixel, including under instances
        catalog: Stuff classes, then thing classes, background last
    """

    instances: list[PlantedInstance]
    stuff_map: np.ndarray
    catalog: ClassCatalog

    @property
    def stuff_ids(self) -> list[int]:
        return [int(c) for c in np.unique(self.stuff_map)]
