"""Shared fixtures and builders for the test suite."""

import numpy as np
import pytest

from models.catalog import ClassCatalog
from models.ensemble import EnsembleBatch
from models.synthetic import JitterSpec, SceneSpec
from services.synth_corrupt import gen_ensemble, gen_scene

HIGH = 6.0
LOW = -6.0


@pytest.fixture
def catalog() -> ClassCatalog:
    """sky=0, road=1 (stuff), car=2, person=3 (things), no_object=4."""
    return ClassCatalog.build(["sky", "road"], ["car", "person"])


def one_hot_logits(class_id: int, num_classes: int, peak: float = 8.0) -> np.ndarray:
    logits = np.zeros(num_classes, dtype=np.float32)
    logits[class_id] = peak
    return logits


def make_batch(samples: list[list[tuple[np.ndarray, int]]], catalog: ClassCatalog,
               image_id: str = "test") -> EnsembleBatch:
    """
    Batch from explicit proposals.

    Args:
        samples: Per sample, a list of (boolean H x W mask, class id) proposals;
            samples with fewer proposals are padded with background proposals
    """
    height, width = samples[0][0][0].shape
    n = max(len(s) for s in samples)
    c = catalog.num_classes
    logits = np.zeros((len(samples), n, c), dtype=np.float32)
    masks = np.full((len(samples), n, height, width), LOW, dtype=np.float32)
    for q, proposals in enumerate(samples):
        for k in range(n):
            if k < len(proposals):
                mask, class_id = proposals[k]
                masks[q, k][mask] = HIGH
                logits[q, k] = one_hot_logits(class_id, c)
            else:
                logits[q, k] = one_hot_logits(catalog.background_id, c)
    return EnsembleBatch(logits=logits, mask_logits=masks, image_size=(height, width),
                         catalog=catalog, image_id=image_id)


def rect(shape: tuple[int, int], top: int, left: int, h: int, w: int) -> np.ndarray:
    mask = np.zeros(shape, dtype=bool)
    mask[top:top + h, left:left + w] = True
    return mask


@pytest.fixture
def synthetic():
    """Factory: (gt, registry, batch, table) for a seeded synthetic scene."""
    def build(seed: int = 0, samples: int = 5, num_instances: int = 4, jitter: JitterSpec = None, **scene):
        spec = SceneSpec(seed=seed, num_instances=num_instances, **scene)
        gt, registry = gen_scene(spec)
        batch, table = gen_ensemble(gt, registry, samples, jitter or JitterSpec(seed=seed))
        return gt, registry, batch, table
    return build


def mask_iou_matrix(masks_a: np.ndarray, masks_b: np.ndarray) -> np.ndarray:
    """Pairwise IoU of two N x H x W / K x H x W boolean stacks; 0 where both masks are empty."""
    flat_a = np.asarray(masks_a, dtype=bool).reshape(len(masks_a), -1).astype(np.float64)
    flat_b = np.asarray(masks_b, dtype=bool).reshape(len(masks_b), -1).astype(np.float64)
    intersection = flat_a @ flat_b.T
    union = flat_a.sum(axis=1)[:, None] + flat_b.sum(axis=1)[None, :] - intersection
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(union > 0, intersection / union, 0.0)


def assignment_cost(cost, pairs) -> float:
    cost = np.asarray(cost, dtype=np.float64)
    return float(sum(cost[r, c] for r, c in pairs))
