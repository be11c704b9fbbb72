"""
Per-sample segmentation: turns each sample's N raw proposals into K kept
proposals and a per-pixel proposal map, plus the single-pass baseline
segmentation the ensemble methods are compared against.
"""

import logging
from typing import Optional

import numpy as np

from config import config
from errors import ConfigError
from models.catalog import ClassCatalog
from models.ensemble import NO_PROPOSAL, EnsembleBatch, PerSampleSegmentation
from models.panoptic import PanopticMap

logger = logging.getLogger(__name__)

# Proposals upscaled at once; bounds peak memory to CHUNK x H x W floats
CHUNK = 16


def softmax(v: np.ndarray, axis: int = -1) -> np.ndarray:
    """
    Numerically stable softmax along `axis`.

    Subtracts the max first, so [1000, 1000] gives [0.5, 0.5] without overflow.
    """
    v = np.asarray(v, dtype=np.float64)
    shifted = v - np.max(v, axis=axis, keepdims=True)
    exp = np.exp(shifted)
    return exp / np.sum(exp, axis=axis, keepdims=True)


def _interpolation_matrix(src: int, dst: int, mode: str) -> np.ndarray:
    """
    dst x src matrix that resamples one axis with pixel-center alignment.

    Source coordinate of output pixel i is (i + 0.5) * src / dst - 0.5,
    clamped to the valid range (corners are not aligned).
    """
    matrix = np.zeros((dst, src), dtype=np.float64)
    rows = np.arange(dst)
    if mode == "nearest":
        idx = np.minimum(np.floor((rows + 0.5) * src / dst).astype(np.int64), src - 1)
        matrix[rows, idx] = 1.0
        return matrix

    coord = np.clip((rows + 0.5) * src / dst - 0.5, 0.0, src - 1)
    lo = np.floor(coord).astype(np.int64)
    hi = np.minimum(lo + 1, src - 1)
    weight = coord - lo
    np.add.at(matrix, (rows, lo), 1.0 - weight)
    np.add.at(matrix, (rows, hi), weight)
    return matrix


def upscale_mask(mask: np.ndarray, target: tuple[int, int], mode: str = None) -> np.ndarray:
    """
    Resize mask logits to the target image size.

    Args:
        mask: h x w grid, or a K x h x w stack
        target: (H, W)
        mode: "bilinear" (default from config) or "nearest"

    Returns:
        H x W (or K x H x W) float64 grid; identity when sizes already match
    """
    mode = mode or config.UPSCALE_MODE
    if mode not in ("bilinear", "nearest"):
        raise ConfigError(f"Unknown upscale mode '{mode}'")
    mask = np.asarray(mask, dtype=np.float64)
    h, w = mask.shape[-2:]
    height, width = target
    if (h, w) == (height, width):
        return mask.copy()
    rows = _interpolation_matrix(h, height, mode)
    cols = _interpolation_matrix(w, width, mode)
    return rows @ mask @ cols.T


def proposal_argmax(mask_logits: np.ndarray, target: tuple[int, int], mode: str = None) -> np.ndarray:
    """
    Per-pixel winning proposal over upscaled mask logits.

    Softmax across proposals is monotonic per pixel, so the argmax of the
    logits is the argmax of the softmax. Ties go to the lowest index.

    Args:
        mask_logits: K x h x w
        target: (H, W)

    Returns:
        H x W int32 index in 0..K-1, NO_PROPOSAL everywhere when K == 0
    """
    height, width = target
    count = mask_logits.shape[0]
    if count == 0:
        return np.full((height, width), NO_PROPOSAL, dtype=np.int32)

    best_value = np.full((height, width), -np.inf)
    best_index = np.zeros((height, width), dtype=np.int32)
    for start in range(0, count, CHUNK):
        chunk = upscale_mask(mask_logits[start:start + CHUNK], target, mode)
        chunk_best = np.argmax(chunk, axis=0)
        chunk_value = np.take_along_axis(chunk, chunk_best[None], axis=0)[0]
        # strictly greater keeps the earlier proposal on ties
        better = chunk_value > best_value
        best_value[better] = chunk_value[better]
        best_index[better] = chunk_best[better] + start
    return best_index


def per_sample_seg(batch: EnsembleBatch, upscale_mode: Optional[str] = None) -> PerSampleSegmentation:
    """
    Reduce every sample's N proposals to its K kept proposals.

    Per sample q:
      1. softmax each proposal's class logits
      2. drop proposals whose argmax class is the background
      3. upscale the kept mask logits to H x W
      4. per pixel, take the argmax over the kept proposals
      5. keep the K class-softmax vectors (full C length)

    A sample with no kept proposal yields an all-NO_PROPOSAL map and is listed
    in `empty_samples`; that is reported, not raised.
    """
    height, width = batch.image_size
    background = batch.catalog.background_id
    q_count = batch.num_samples

    proposal_map = np.empty((q_count, height, width), dtype=np.int32)
    kept_softmax: list[np.ndarray] = []
    kept_indices: list[np.ndarray] = []
    empty_samples: list[int] = []

    for q in range(q_count):
        probs = softmax(batch.logits[q], axis=1)
        labels = np.argmax(probs, axis=1)
        keep = np.flatnonzero(labels != background)

        kept_softmax.append(probs[keep])
        kept_indices.append(keep)
        proposal_map[q] = proposal_argmax(batch.mask_logits[q][keep], (height, width), upscale_mode)

        if keep.size == 0:
            empty_samples.append(q)
            logger.warning(f"{batch.image_id}: sample {q} has no non-background proposals")
        else:
            logger.debug(f"{batch.image_id}: sample {q} keeps {keep.size}/{batch.num_proposals} proposals")

    return PerSampleSegmentation(
        proposal_map=proposal_map,
        kept_softmax=kept_softmax,
        kept_indices=kept_indices,
        empty_samples=empty_samples,
    )


def segmentation_from_proposals(
    proposal_map: np.ndarray,
    labels: np.ndarray,
    catalog: ClassCatalog,
) -> PanopticMap:
    """
    Panoptic map from a proposal map and the class of each proposal.

    Thing proposals get instance ids 1, 2, ... in proposal order (only those
    owning pixels); stuff proposals of the same class share one segment.
    """
    out = PanopticMap.empty(*proposal_map.shape)
    covered = proposal_map != NO_PROPOSAL
    if not np.any(covered) or labels.size == 0:
        return out

    out.class_ids[covered] = labels[proposal_map[covered]]
    next_id = 1
    for k in np.unique(proposal_map[covered]):
        if catalog.is_thing(int(labels[k])):
            out.instance_ids[proposal_map == k] = next_id
            next_id += 1
    return out


def baseline_segmentation(
    batch: EnsembleBatch,
    sample_index: int = 0,
    min_score: Optional[float] = None,
    min_pixels: Optional[int] = None,
    upscale_mode: Optional[str] = None,
) -> PanopticMap:
    """
    Single-pass segmentation of one sample, with the baseline's own pruning.

    Proposals whose best class is background or scores below `min_score` are
    dropped before the per-pixel argmax. Segments (stuff proposals of one class
    count as one segment) with fewer than `min_pixels` pixels are then removed
    and their pixels go to the next best remaining proposal; this repeats
    until no segment is too small. Passing None for both thresholds gives the
    unpruned variant.
    """
    height, width = batch.image_size
    catalog = batch.catalog
    probs = softmax(batch.logits[sample_index], axis=1)
    labels = np.argmax(probs, axis=1)
    scores = probs.max(axis=1)

    keep = labels != catalog.background_id
    if min_score is not None:
        keep &= scores >= min_score
    keep_idx = np.flatnonzero(keep)
    masks = batch.mask_logits[sample_index]

    while True:
        if keep_idx.size == 0:
            logger.info(f"{batch.image_id}: baseline kept no proposals")
            return PanopticMap.empty(height, width)

        owner = proposal_argmax(masks[keep_idx], (height, width), upscale_mode)
        kept_labels = labels[keep_idx]
        if not min_pixels or min_pixels <= 1:
            break

        areas = np.bincount(owner.ravel(), minlength=keep_idx.size)
        segment_area = areas.copy()
        for class_id in np.unique(kept_labels):
            if catalog.is_stuff(int(class_id)):
                same = kept_labels == class_id
                segment_area[same] = areas[same].sum()
        small = segment_area < min_pixels
        if not np.any(small):
            break
        keep_idx = keep_idx[~small]

    return segmentation_from_proposals(owner, kept_labels, catalog)
