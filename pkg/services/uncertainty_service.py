"""
Uncertainty service: per-pixel entropy measures over confidence stacks,
confidence pruning of fused maps, histogram binning and heatmap export.
"""

import logging
import math
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd
from PIL import Image

from config import MEASURES, config
from errors import ConfigError, DimensionMismatchError
from models.confidence import ConfidenceStack, MeanConfidence
from models.panoptic import NO_INSTANCE, VOID, PanopticMap
from models.uncertainty import EntropyHistogram, UncertaintyMap
from services.stuff_fusion import mean_confidence

logger = logging.getLogger(__name__)


# ============================================================================
# Entropy measures
# ============================================================================

def entropy(p, axis: int = -1) -> np.ndarray:
    """
    Shannon entropy in nats along `axis`, with 0 * ln 0 taken as 0.

    Zero vectors (uncovered pixels) give 0.

    Examples:
        entropy([0.25, 0.75]) -> 0.562335
        entropy([0.25] * 4)   -> ln 4
    """
    p = np.asarray(p, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log(p), 0.0)
    return terms.sum(axis=axis)


def predictive_entropy(mc: MeanConfidence) -> UncertaintyMap:
    """Entropy of the sample-mean distribution at every pixel (total uncertainty)."""
    cap = math.log(mc.num_classes)
    # partially covered pixels have sub-normalized vectors that may exceed ln C
    values = np.minimum(entropy(mc.mc), cap)
    return UncertaintyMap(
        values=values,
        measure="predictive_entropy",
        num_classes=mc.num_classes,
        no_prediction=mc.no_prediction,
    )


def _mean_sample_entropy(sc: ConfidenceStack) -> np.ndarray:
    """(1/Q) sum_q H[p_q] per pixel, via one entropy per proposal row."""
    height, width = sc.image_size
    total = np.zeros((height, width), dtype=np.float64)
    for q in range(sc.num_samples):
        row_entropy = entropy(sc.padded_table(q))
        total += row_entropy[sc.proposal_map[q]]
    return total / sc.num_samples


def mutual_information(sc: ConfidenceStack, mc: MeanConfidence = None) -> UncertaintyMap:
    """
    H[mean_q p_q] - mean_q H[p_q] per pixel (model disagreement).

    Clamped to [0, predictive entropy] so float noise never yields negatives.
    """
    mc = mc or mean_confidence(sc)
    total = predictive_entropy(mc).values
    values = np.clip(total - _mean_sample_entropy(sc), 0.0, total)
    return UncertaintyMap(
        values=values,
        measure="mutual_information",
        num_classes=mc.num_classes,
        no_prediction=mc.no_prediction,
    )


def softmax_entropy_baseline(sc: Union[ConfidenceStack, np.ndarray], sample: int = 0) -> UncertaintyMap:
    """
    Entropy of a single sample's distributions.

    Args:
        sc: A confidence stack (sample `sample` is used) or a dense H x W x C slice
    """
    if isinstance(sc, ConfidenceStack):
        values = entropy(sc.padded_table(sample))[sc.proposal_map[sample]]
        return UncertaintyMap(
            values=values,
            measure="softmax_entropy",
            num_classes=sc.num_classes,
            no_prediction=~sc.covered(sample),
        )

    dense = np.asarray(sc, dtype=np.float64)
    return UncertaintyMap(
        values=entropy(dense),
        measure="softmax_entropy",
        num_classes=dense.shape[-1],
        no_prediction=~dense.any(axis=-1),
    )


def compute_uncertainty(measure: str, sc: ConfidenceStack, mc: MeanConfidence, sample: int = 0) -> UncertaintyMap:
    """Dispatch on measure name."""
    if measure == "predictive_entropy":
        return predictive_entropy(mc)
    if measure == "mutual_information":
        return mutual_information(sc, mc)
    if measure == "softmax_entropy":
        return softmax_entropy_baseline(sc, sample)
    raise ConfigError(f"Unknown uncertainty measure '{measure}', expected one of {MEASURES}")


# ============================================================================
# Pruning
# ============================================================================

def remove_small_segments(panoptic: PanopticMap, min_pixels: int) -> PanopticMap:
    """Void every segment with fewer than `min_pixels` pixels."""
    out = panoptic.copy()
    if min_pixels <= 1:
        return out
    keys = out.segment_keys()
    valid = keys >= 0
    if not np.any(valid):
        return out
    unique, inverse, counts = np.unique(keys[valid], return_inverse=True, return_counts=True)
    small = (counts < min_pixels)[inverse.ravel()]
    if np.any(small):
        rows, cols = np.nonzero(valid)
        out.class_ids[rows[small], cols[small]] = VOID
        out.instance_ids[rows[small], cols[small]] = NO_INSTANCE
        logger.debug(f"Removed {int((counts < min_pixels).sum())} of {unique.size} segments below {min_pixels} px")
    return out


def prune(
    s_final: PanopticMap,
    mc: MeanConfidence,
    min_prob: float = None,
    min_pixels: int = None,
) -> PanopticMap:
    """
    Confidence pruning of a fused map.

    Pixels whose assigned class has MC probability below `min_prob` become
    void, then segments left with fewer than `min_pixels` pixels are removed.
    Applying it twice gives the same map as applying it once.
    """
    min_prob = config.PRUNE_MIN_PROB if min_prob is None else min_prob
    min_pixels = config.PRUNE_MIN_PIXELS if min_pixels is None else min_pixels
    if mc.image_size != s_final.shape:
        raise DimensionMismatchError(f"MC is {mc.image_size}, panoptic map is {s_final.shape}")

    out = s_final.copy()
    weak = ~out.void_mask & (mc.probability_of(out.class_ids) < min_prob)
    out.class_ids[weak] = VOID
    out.instance_ids[weak] = NO_INSTANCE
    out = remove_small_segments(out, min_pixels)
    logger.debug(f"Pruning voided {int(weak.sum())} low-confidence pixels")
    return out


# ============================================================================
# Histograms and heatmaps
# ============================================================================

def bin_entropy(maps: list[UncertaintyMap], n_bins: int = None) -> EntropyHistogram:
    """
    Histogram of uncertainty values over uniform bins spanning [0, ln C].

    The rightmost bin is closed. No-prediction pixels count as ln C. Maps are
    binned one at a time and the counts added, so a dataset never needs to
    fit in one array.
    """
    n_bins = n_bins or config.HIST_BINS
    if n_bins < 1:
        raise ConfigError(f"n_bins must be >= 1, got {n_bins}")
    if not maps:
        raise ConfigError("bin_entropy needs at least one uncertainty map")
    num_classes = {m.num_classes for m in maps}
    if len(num_classes) != 1:
        raise DimensionMismatchError(f"Maps disagree on the class count: {sorted(num_classes)}")

    cap = maps[0].max_value
    histogram = None
    for m in maps:
        counts, edges = np.histogram(np.clip(m.effective_values(), 0.0, cap), bins=n_bins, range=(0.0, cap))
        single = EntropyHistogram(edges=edges, counts=counts, measure=maps[0].measure)
        histogram = single if histogram is None else histogram + single
    return histogram


def heatmap_pixels(u: UncertaintyMap) -> np.ndarray:
    """8-bit gray levels: floor(255 * u / ln C + 0.5), so ln C / 2 maps to 128."""
    scaled = np.floor(255.0 * (u.effective_values() / u.max_value) + 0.5)
    return np.clip(scaled, 0, 255).astype(np.uint8)


def export_heatmap(u: UncertaintyMap, destination) -> Path:
    """Write the map as a grayscale PNG; lighter means more uncertain."""
    destination = Path(destination)
    destination.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(heatmap_pixels(u)).save(destination, format="PNG")
    logger.debug(f"Wrote {u.measure} heatmap to {destination}")
    return destination


def write_histogram_csv(histogram: EntropyHistogram, destination) -> Path:
    """CSV with one (bin_left, bin_right, count) row per bin."""
    destination = Path(destination)
    destination.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(histogram.rows(), columns=["bin_left", "bin_right", "count"])
    frame.to_csv(destination, index=False)
    return destination
