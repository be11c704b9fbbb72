"""
Per-sample confidence stack (SC) and its mean over samples (MC).
"""

from dataclasses import dataclass

import numpy as np

from .ensemble import NO_PROPOSAL


@dataclass
class ConfidenceStack:
    """
    Q x H x W x C per-pixel class distributions, kept in factored form.

    Every pixel of sample q points into a table of K_q probability vectors
    (or at NO_PROPOSAL, meaning the zero vector). The dense Q x H x W x C array
    is only built on request; at 640x480 with 15 samples and 20 classes it
    would take hundreds of megabytes.

    Fields:
        proposal_map: Q x H x W row index into tables[q], NO_PROPOSAL for none
        tables: Per sample, a K_q x C array of probability vectors
    """

    proposal_map: np.ndarray
    tables: list[np.ndarray]

    @property
    def num_samples(self) -> int:
        return self.proposal_map.shape[0]

    @property
    def image_size(self) -> tuple[int, int]:
        return self.proposal_map.shape[1], self.proposal_map.shape[2]

    @property
    def num_classes(self) -> int:
        return int(self.tables[0].shape[1])

    def padded_table(self, q: int) -> np.ndarray:
        """tables[q] with a trailing zero row, so NO_PROPOSAL (-1) gathers zeros."""
        table = np.asarray(self.tables[q], dtype=np.float64)
        return np.vstack([table, np.zeros((1, table.shape[1]), dtype=np.float64)])

    def slice(self, q: int) -> np.ndarray:
        """Dense H x W x C distributions of sample q."""
        return self.padded_table(q)[self.proposal_map[q]]

    def covered(self, q: int) -> np.ndarray:
        """H x W mask of pixels owned by some proposal in sample q."""
        return self.proposal_map[q] != NO_PROPOSAL

    def to_dense(self) -> np.ndarray:
        return np.stack([self.slice(q) for q in range(self.num_samples)])

    @classmethod
    def from_dense(cls, sc: np.ndarray) -> "ConfidenceStack":
        """
        Factor a dense Q x H x W x C stack: every pixel becomes its own table row.
        All-zero pixel vectors map to NO_PROPOSAL.
        """
        sc = np.asarray(sc, dtype=np.float64)
        q_count, height, width, num_classes = sc.shape
        proposal_map = np.empty((q_count, height, width), dtype=np.int32)
        tables = []
        for q in range(q_count):
            flat = sc[q].reshape(-1, num_classes)
            rows = np.arange(flat.shape[0], dtype=np.int32)
            rows[~flat.any(axis=1)] = NO_PROPOSAL
            proposal_map[q] = rows.reshape(height, width)
            tables.append(flat)
        return cls(proposal_map=proposal_map, tables=tables)


@dataclass
class MeanConfidence:
    """
    H x W x C mean of the confidence stack over samples.

    Pixel vectors sum to 1 where every sample covered the pixel and to less
    where some did not (uncovered samples contribute zero vectors).
    """

    mc: np.ndarray
    sample_count: int

    @property
    def num_classes(self) -> int:
        return self.mc.shape[2]

    @property
    def image_size(self) -> tuple[int, int]:
        return self.mc.shape[0], self.mc.shape[1]

    @property
    def no_prediction(self) -> np.ndarray:
        """Pixels no sample covered."""
        return ~self.mc.any(axis=2)

    def labels(self) -> np.ndarray:
        """Per-pixel argmax class (lowest index on ties); -1 where no sample covered the pixel."""
        labels = np.argmax(self.mc, axis=2).astype(np.int32)
        labels[self.no_prediction] = -1
        return labels

    def probability_of(self, class_ids: np.ndarray) -> np.ndarray:
        """MC probability of the given per-pixel class; 0 at negative (void) ids."""
        class_ids = np.asarray(class_ids)
        safe = np.where(class_ids >= 0, class_ids, 0)
        probs = np.take_along_axis(self.mc, safe[..., None].astype(np.int64), axis=2)[..., 0]
        return np.where(class_ids >= 0, probs, 0.0)
