"""
Thing fusion: sequential clustering of instance proposals across samples,
merge-count thresholding and assembly of the final panoptic map.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from errors import OverlapError
from models.catalog import ClassCatalog
from models.confidence import MeanConfidence
from models.ensemble import NO_PROPOSAL, PerSampleSegmentation
from models.fusion import FusionParams, InstanceRecord
from models.panoptic import NO_INSTANCE, PanopticMap
from utils.mask_utils import bbox, iou_in_box

logger = logging.getLogger(__name__)


@dataclass
class ThingProposal:
    """A kept proposal of one sample, restricted to thing pixels."""

    sample: int
    index: int
    mask: np.ndarray
    softmax: np.ndarray
    bbox: tuple[int, int, int, int]


@dataclass
class ThingClaim:
    """Pixels a surviving record takes over in the final map."""

    record: InstanceRecord
    class_id: int
    mask: np.ndarray


def thing_proposals(
    pss: PerSampleSegmentation,
    softmax_lists: list[np.ndarray],
    thing_pixels: np.ndarray,
    catalog: ClassCatalog,
) -> list[ThingProposal]:
    """
    Instance proposals in sample order.

    A proposal qualifies when its argmax class is a thing and it still owns
    pixels after the proposal map is restricted to `thing_pixels`.
    """
    proposals = []
    for q in range(pss.num_samples):
        table = softmax_lists[q]
        if len(table) == 0:
            continue
        labels = np.argmax(table, axis=1)
        restricted = np.where(thing_pixels, pss.proposal_map[q], NO_PROPOSAL)
        for k in np.unique(restricted):
            if k == NO_PROPOSAL or not catalog.is_thing(int(labels[k])):
                continue
            mask = restricted == k
            proposals.append(ThingProposal(
                sample=q,
                index=int(k),
                mask=mask,
                softmax=np.asarray(table[k], dtype=np.float64),
                bbox=bbox(mask),
            ))
    return proposals


def cluster_proposals(proposals: list[ThingProposal], iou_threshold: float) -> list[InstanceRecord]:
    """
    Sequential clustering: each proposal merges into the single record it
    overlaps best (IoU >= iou_threshold, earliest record on ties) or founds a
    new record.

    Every proposal ends up in exactly one record. Records from the same sample
    are valid merge targets. A merge needs some overlap, so with a threshold
    of 0 disjoint masks still found separate records.
    """
    records: list[InstanceRecord] = []
    for proposal in proposals:
        best_index: Optional[int] = None
        best_iou = -1.0
        for i, record in enumerate(records):
            score = iou_in_box(proposal.mask, record.mask, proposal.bbox, record.bbox)
            if score > 0.0 and score >= iou_threshold and score > best_iou:
                best_index, best_iou = i, score

        member = (proposal.sample, proposal.index)
        if best_index is None:
            records.append(InstanceRecord(
                mask=proposal.mask.copy(),
                member_count=1,
                mean_softmax=proposal.softmax.copy(),
                founding_order=len(records),
                members=[member],
                bbox=proposal.bbox,
            ))
        else:
            records[best_index].merge(proposal.mask, proposal.softmax, proposal.bbox, member)
    return records


def sort_by_mergers(records: list[InstanceRecord]) -> list[InstanceRecord]:
    """
    Order records by member count (descending); ties go to the higher peak
    class probability, then to the earlier record.
    """
    return sorted(records, key=lambda r: (-r.member_count, -r.confidence, r.founding_order))


def claim_pixels(
    s_initial: PanopticMap,
    records: list[InstanceRecord],
    min_members: int,
    catalog: ClassCatalog,
) -> list[ThingClaim]:
    """
    Walk sorted records and let each one with enough members take the pixels
    of its mask nobody has taken yet.

    Records whose mean class is no longer a thing, or whose mask is fully
    taken, produce no claim.
    """
    taken = ~s_initial.void_mask
    claims = []
    for record in records:
        if record.member_count < min_members:
            continue
        class_id = record.class_id
        if not catalog.is_thing(class_id):
            logger.debug(f"Record {record.founding_order} drifted to non-thing class {class_id}, skipped")
            continue
        mask = record.mask & ~taken
        if not mask.any():
            continue
        taken |= mask
        claims.append(ThingClaim(record=record, class_id=class_id, mask=mask))
    return claims


def combine(s_initial: PanopticMap, claims: list[ThingClaim]) -> PanopticMap:
    """
    Overlay thing claims on the stuff map; claims get instance ids 1, 2, ...
    in order.

    Raises:
        OverlapError: A claim touches an assigned pixel or another claim
    """
    s_final = s_initial.copy()
    for instance_id, claim in enumerate(claims, start=1):
        if np.any(claim.mask & ~s_final.void_mask):
            raise OverlapError(f"Thing claim {instance_id} overlaps already assigned pixels")
        s_final.class_ids[claim.mask] = claim.class_id
        s_final.instance_ids[claim.mask] = instance_id
    return s_final


def fuse_things(
    pss: PerSampleSegmentation,
    softmax_lists: list[np.ndarray],
    s_initial: PanopticMap,
    mc: MeanConfidence,
    catalog: ClassCatalog,
    params: Optional[FusionParams] = None,
) -> tuple[PanopticMap, list[InstanceRecord]]:
    """
    Full thing fusion.

    Returns:
        The final map and the sorted record list (all records, kept or not)
    """
    params = params or FusionParams()
    thing_pixels = catalog.thing_mask(mc.labels())
    proposals = thing_proposals(pss, softmax_lists, thing_pixels, catalog)
    records = sort_by_mergers(cluster_proposals(proposals, params.iou_threshold))

    min_members = params.min_members(pss.num_samples)
    claims = claim_pixels(s_initial, records, min_members, catalog)
    s_final = combine(s_initial, claims)
    s_final.check_invariants(catalog.thing_mask)

    logger.info(
        f"Thing fusion: {len(proposals)} proposals -> {len(records)} records, "
        f"{len(claims)} kept (need >= {min_members} members)"
    )
    return s_final, records


def thing_seg(
    pss: PerSampleSegmentation,
    softmax_lists: list[np.ndarray],
    s_initial: PanopticMap,
    mc: MeanConfidence,
    catalog: ClassCatalog,
    params: Optional[FusionParams] = None,
) -> PanopticMap:
    s_final, _ = fuse_things(pss, softmax_lists, s_initial, mc, catalog, params)
    return s_final


def instance_count(panoptic: PanopticMap) -> int:
    return len(np.unique(panoptic.instance_ids[panoptic.instance_ids != NO_INSTANCE]))
