"""
Assignment baseline: a rectangular linear assignment solver and the sample
fusion that matches every sample against a growing reference sample.
"""

import logging
from typing import Optional

import numpy as np

from errors import DimensionMismatchError, InternalError
from models.ensemble import NO_PROPOSAL, EnsembleBatch, PerSampleSegmentation
from models.panoptic import PanopticMap
from services.per_sample import segmentation_from_proposals, upscale_mask

logger = logging.getLogger(__name__)

Assignment = list[tuple[int, int]]


# ============================================================================
# Linear assignment
# ============================================================================

def _augment_rows(cost: np.ndarray) -> np.ndarray:
    """
    Shortest augmenting path solver for rows <= cols.

    Adds one row at a time, finding the cheapest path to a free column under
    the reduced costs (Dijkstra with dual potentials u, v), then flips the path.

    Returns:
        col4row: column assigned to each row
    """
    n_rows, n_cols = cost.shape
    u = np.zeros(n_rows)
    v = np.zeros(n_cols)
    col4row = np.full(n_rows, -1, dtype=np.int64)
    row4col = np.full(n_cols, -1, dtype=np.int64)
    path = np.full(n_cols, -1, dtype=np.int64)

    for cur_row in range(n_rows):
        shortest = np.full(n_cols, np.inf)
        visited_rows = np.zeros(n_rows, dtype=bool)
        visited_cols = np.zeros(n_cols, dtype=bool)
        remaining = np.arange(n_cols)[::-1].copy()
        num_remaining = n_cols
        min_val = 0.0
        sink = -1
        i = cur_row

        while sink == -1:
            visited_rows[i] = True
            cols = remaining[:num_remaining]
            reduced = min_val + cost[i, cols] - u[i] - v[cols]
            better = reduced < shortest[cols]
            path[cols[better]] = i
            shortest[cols[better]] = reduced[better]

            values = shortest[cols]
            lowest = values.min()
            if not np.isfinite(lowest):
                raise InternalError("Cost matrix has no feasible assignment")
            candidates = np.flatnonzero(values == lowest)
            free = candidates[row4col[cols[candidates]] == -1]
            index = int(free[0]) if free.size else int(candidates[0])

            min_val = float(lowest)
            j = int(remaining[index])
            if row4col[j] == -1:
                sink = j
            else:
                i = int(row4col[j])
            visited_cols[j] = True
            num_remaining -= 1
            remaining[index] = remaining[num_remaining]

        # dual update
        u[cur_row] += min_val
        others = np.flatnonzero(visited_rows)
        others = others[others != cur_row]
        u[others] += min_val - shortest[col4row[others]]
        v[visited_cols] -= min_val - shortest[visited_cols]

        # flip the augmenting path
        j = sink
        while True:
            i = int(path[j])
            row4col[j] = i
            col4row[i], j = j, int(col4row[i])
            if i == cur_row:
                break

    return col4row


def solve_lap(cost) -> Assignment:
    """
    Minimum-cost assignment of a rectangular cost matrix.

    Matches min(rows, cols) pairs; surplus rows or columns stay unmatched.

    Args:
        cost: rows x cols matrix of finite costs

    Returns:
        (row, col) pairs sorted by row; empty for an empty matrix
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise DimensionMismatchError(f"Cost matrix must be 2-D, got shape {cost.shape}")
    if cost.size == 0:
        return []
    if not np.all(np.isfinite(cost)):
        raise InternalError("Cost matrix contains non-finite entries")

    if cost.shape[0] <= cost.shape[1]:
        col4row = _augment_rows(cost)
        return [(r, int(c)) for r, c in enumerate(col4row)]

    row4col = _augment_rows(cost.T)
    return sorted((int(r), c) for c, r in enumerate(row4col))


# ============================================================================
# Reference-sample fusion
# ============================================================================

def overlap_costs(reference_masks: list[np.ndarray], proposal_map: np.ndarray, count: int) -> np.ndarray:
    """
    1 - IoU between every reference mask and every proposal of one sample.

    The incoming proposals partition the image, so each row's intersections
    come from a single bincount over the reference mask.
    """
    shifted = np.where(proposal_map == NO_PROPOSAL, count, proposal_map)
    areas = np.bincount(shifted.ravel(), minlength=count + 1)[:count]
    costs = np.ones((len(reference_masks), count), dtype=np.float64)
    for r, mask in enumerate(reference_masks):
        inter = np.bincount(shifted[mask], minlength=count + 1)[:count]
        union = mask.sum() + areas - inter
        with np.errstate(divide="ignore", invalid="ignore"):
            costs[r] = 1.0 - np.where(union > 0, inter / union, 0.0)
    return costs


def pick_reference(sample_count: int, reference_seed: Optional[int] = None) -> int:
    """Sample 0, or a seeded random sample when a seed is given."""
    if reference_seed is None:
        return 0
    return int(np.random.default_rng(reference_seed).integers(sample_count))


def _member_logits(batch: EnsembleBatch, pss: PerSampleSegmentation, q: int, k: int, mode: Optional[str]) -> np.ndarray:
    """Upscaled mask logits of kept proposal k of sample q."""
    original = pss.kept_indices[q][k]
    return upscale_mask(batch.mask_logits[q][original], pss.image_size, mode).astype(np.float32)


def _covered_argmax(logit_sum: np.ndarray, masks: list[np.ndarray]) -> np.ndarray:
    """
    Per-pixel argmax of the accumulated logits over the grown masks covering
    the pixel; NO_PROPOSAL where no grown mask does. Ties go to the lowest index.
    """
    best_value = np.full(logit_sum.shape[1:], -np.inf, dtype=np.float32)
    owner = np.full(logit_sum.shape[1:], NO_PROPOSAL, dtype=np.int32)
    for r, mask in enumerate(masks):
        better = mask & (logit_sum[r] > best_value)
        best_value[better] = logit_sum[r][better]
        owner[better] = r
    return owner


def hungarian_fuse(
    pss: PerSampleSegmentation,
    batch: EnsembleBatch,
    reference_seed: Optional[int] = None,
    upscale_mode: Optional[str] = None,
) -> PanopticMap:
    """
    Fuse samples by repeated assignment against a reference sample.

    Every other sample is matched to the reference proposals with 1 - IoU
    costs. A matched pair grows the reference mask by union and adds the
    member's upscaled mask logits and class distribution to the reference's.
    Unmatched incoming proposals are dropped; no thresholds apply.

    Each pixel then goes to the grown proposal with the highest accumulated
    mask logit among those whose grown mask covers it (softmax over proposals
    is monotonic, so this is the baseline's softmax + argmax). A proposal is
    labelled with the argmax of the mean class distribution over the
    reference and its matched members.
    """
    catalog = batch.catalog
    height, width = pss.image_size
    ref = pick_reference(pss.num_samples, reference_seed)
    ref_count = pss.kept_count[ref]
    if ref_count == 0:
        logger.warning(f"{batch.image_id}: reference sample {ref} kept no proposals")
        return PanopticMap.empty(height, width)

    ref_map = pss.proposal_map[ref]
    masks = [ref_map == k for k in range(ref_count)]
    ref_logits = batch.mask_logits[ref][pss.kept_indices[ref]]
    logit_sum = upscale_mask(ref_logits, (height, width), upscale_mode).astype(np.float32)
    softmax_sum = np.asarray(pss.kept_softmax[ref], dtype=np.float64).copy()
    members = np.ones(ref_count, dtype=np.int64)

    for q in range(pss.num_samples):
        if q == ref or pss.kept_count[q] == 0:
            continue
        count = pss.kept_count[q]
        costs = overlap_costs(masks, pss.proposal_map[q], count)
        pairs = solve_lap(costs)
        for r, k in pairs:
            masks[r] |= pss.proposal_map[q] == k
            logit_sum[r] += _member_logits(batch, pss, q, k, upscale_mode)
            softmax_sum[r] += pss.kept_softmax[q][k]
            members[r] += 1
        logger.debug(f"{batch.image_id}: sample {q} matched {len(pairs)}, dropped {count - len(pairs)}")

    labels = np.argmax(softmax_sum / members[:, None], axis=1)
    owner = _covered_argmax(logit_sum, masks)
    owner[(owner != NO_PROPOSAL) & (labels[np.maximum(owner, 0)] == catalog.background_id)] = NO_PROPOSAL
    return segmentation_from_proposals(owner, labels, catalog)
