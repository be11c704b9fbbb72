"""
Stuff fusion: per-sample confidence stacks, their mean over samples and the
stuff-only initial segmentation.
"""

import logging

import numpy as np

from models.catalog import ClassCatalog
from models.confidence import ConfidenceStack, MeanConfidence
from models.ensemble import PerSampleSegmentation
from models.panoptic import PanopticMap

logger = logging.getLogger(__name__)


def build_confidence_stack(pss: PerSampleSegmentation) -> ConfidenceStack:
    """
    SC[q, i, j] = class distribution of the proposal owning pixel (i, j) in
    sample q; the zero vector where no proposal owns it.
    """
    return ConfidenceStack(proposal_map=pss.proposal_map, tables=list(pss.kept_softmax))


def mean_confidence(sc: ConfidenceStack) -> MeanConfidence:
    """
    Arithmetic mean of SC over the sample axis.

    Uncovered pixels contribute zero vectors and still count in the
    denominator, so partially covered pixels sum to less than 1.
    """
    height, width = sc.image_size
    total = np.zeros((height, width, sc.num_classes), dtype=np.float64)
    for q in range(sc.num_samples):
        total += sc.slice(q)
    return MeanConfidence(mc=total / sc.num_samples, sample_count=sc.num_samples)


def stuff_labels(mc: MeanConfidence) -> np.ndarray:
    """
    Per-pixel MC argmax, with -1 where no sample predicted anything.

    The background class takes part in the argmax; where it wins, the pixel
    is neither stuff nor thing.
    """
    return mc.labels()


def stuff_seg(pss: PerSampleSegmentation, catalog: ClassCatalog) -> tuple[PanopticMap, ConfidenceStack, MeanConfidence]:
    """
    Initial segmentation holding stuff classes only.

    Returns:
        (S_initial, SC, MC). Pixels whose MC argmax is a stuff class carry that
        class; thing, background and uncovered pixels stay void.
    """
    sc = build_confidence_stack(pss)
    mc = mean_confidence(sc)
    labels = stuff_labels(mc)

    s_initial = PanopticMap.empty(*labels.shape)
    is_stuff = catalog.stuff_mask(labels)
    s_initial.class_ids[is_stuff] = labels[is_stuff]
    logger.debug(f"Stuff pixels: {int(is_stuff.sum())} of {is_stuff.size}")
    return s_initial, sc, mc
