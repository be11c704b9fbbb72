"""
Data models for the raw ensemble and the per-sample segmentation stage.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from errors import InvalidManifestError
from .catalog import ClassCatalog

NO_PROPOSAL = -1  # proposal-map value of a pixel no kept proposal owns


@dataclass
class EnsembleManifest:
    """
    Describes one image's ensemble output on disk.

    Paths are resolved relative to the manifest's own directory.
    """

    image_id: str
    Q: int
    N: int
    C: int
    h: int
    w: int
    H: int
    W: int
    logits_path: str
    masks_path: str
    class_catalog_path: str
    base_dir: Path = field(default_factory=Path)

    REQUIRED = ("image_id", "Q", "N", "C", "h", "w", "H", "W",
                "logits_path", "masks_path", "class_catalog_path")

    def __post_init__(self):
        for name in ("Q", "N", "h", "w", "H", "W"):
            if int(getattr(self, name)) < 1:
                raise InvalidManifestError(f"{self.image_id}: {name} must be >= 1, got {getattr(self, name)}")
        if int(self.C) < 2:
            raise InvalidManifestError(
                f"{self.image_id}: C must be >= 2 (background plus at least one class), got {self.C}"
            )

    def resolve(self, relative: str) -> Path:
        path = Path(relative)
        return path if path.is_absolute() else self.base_dir / path

    @property
    def logits_shape(self) -> tuple[int, int, int]:
        return (self.Q, self.N, self.C)

    @property
    def masks_shape(self) -> tuple[int, int, int, int]:
        return (self.Q, self.N, self.h, self.w)

    def to_dict(self) -> dict[str, Any]:
        return {name: getattr(self, name) for name in self.REQUIRED}

    @classmethod
    def from_dict(cls, data: dict[str, Any], base_dir: Path = Path(".")) -> "EnsembleManifest":
        missing = [name for name in cls.REQUIRED if name not in data]
        if missing:
            raise InvalidManifestError(f"Manifest is missing fields: {', '.join(missing)}")
        try:
            return cls(
                image_id=str(data["image_id"]),
                Q=int(data["Q"]), N=int(data["N"]), C=int(data["C"]),
                h=int(data["h"]), w=int(data["w"]), H=int(data["H"]), W=int(data["W"]),
                logits_path=str(data["logits_path"]),
                masks_path=str(data["masks_path"]),
                class_catalog_path=str(data["class_catalog_path"]),
                base_dir=Path(base_dir),
            )
        except (TypeError, ValueError) as e:
            raise InvalidManifestError(f"Manifest field has the wrong type: {e}") from e


@dataclass
class EnsembleBatch:
    """
    Q network samples for one image.

    Fields:
        logits: Q x N x C class logits per proposal
        mask_logits: Q x N x h x w mask logits per proposal
        image_size: Target (H, W)
        catalog: Class catalog shared by all samples
    """

    logits: np.ndarray
    mask_logits: np.ndarray
    image_size: tuple[int, int]
    catalog: ClassCatalog
    image_id: str = "image"

    @property
    def num_samples(self) -> int:
        return self.logits.shape[0]

    @property
    def num_proposals(self) -> int:
        return self.logits.shape[1]

    @property
    def num_classes(self) -> int:
        return self.logits.shape[2]

    def take(self, sample_count: Optional[int]) -> "EnsembleBatch":
        """Batch restricted to the first `sample_count` samples (all when None)."""
        if sample_count is None or sample_count >= self.num_samples:
            return self
        return EnsembleBatch(
            logits=self.logits[:sample_count],
            mask_logits=self.mask_logits[:sample_count],
            image_size=self.image_size,
            catalog=self.catalog,
            image_id=self.image_id,
        )

    def sample(self, index: int) -> "EnsembleBatch":
        """Single-sample batch holding sample `index`."""
        return EnsembleBatch(
            logits=self.logits[index:index + 1],
            mask_logits=self.mask_logits[index:index + 1],
            image_size=self.image_size,
            catalog=self.catalog,
            image_id=self.image_id,
        )


@dataclass
class PerSampleSegmentation:
    """
    Output of the per-sample stage.

    Fields:
        proposal_map: Q x H x W kept-proposal index per pixel, NO_PROPOSAL where none
        kept_softmax: Per sample, a K_q x C array of class probability vectors
        kept_indices: Per sample, the original proposal index (0..N-1) of each kept proposal
        empty_samples: Samples whose proposals were all removed
    """

    proposal_map: np.ndarray
    kept_softmax: list[np.ndarray]
    kept_indices: list[np.ndarray]
    empty_samples: list[int] = field(default_factory=list)

    @property
    def num_samples(self) -> int:
        return self.proposal_map.shape[0]

    @property
    def image_size(self) -> tuple[int, int]:
        return self.proposal_map.shape[1], self.proposal_map.shape[2]

    @property
    def kept_count(self) -> list[int]:
        return [int(s.shape[0]) for s in self.kept_softmax]

    @property
    def num_classes(self) -> int:
        return int(self.kept_softmax[0].shape[1]) if self.kept_softmax else 0

    def sample_labels(self, q: int) -> np.ndarray:
        """Length-K_q argmax class of every kept proposal in sample q."""
        return np.argmax(self.kept_softmax[q], axis=1) if self.kept_count[q] else np.zeros(0, dtype=np.int64)
