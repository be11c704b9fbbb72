"""
Panoptic quality evaluation and the uncertainty-removal sweep.

Segment matching follows the standard PQ rules: void ground truth is taken
out of the IoU denominator, and an unmatched prediction lying mostly on void
ground truth is not a false positive.
"""

import json
import logging
from dataclasses import asdict
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
from tabulate import tabulate

from config import config
from errors import ConfigError, DimensionMismatchError
from models.catalog import ClassCatalog
from models.evaluation import (
    PQAggregate,
    PQClassResult,
    PQResult,
    PQStatClass,
    PQStats,
    SweepCurve,
    SweepPoint,
)
from models.panoptic import PanopticMap
from models.uncertainty import UncertaintyMap

logger = logging.getLogger(__name__)


# ============================================================================
# Matching
# ============================================================================

def _segment_index(keys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unique segment keys (void excluded) and a per-pixel index, -1 on void."""
    valid = keys >= 0
    unique, inverse = np.unique(keys[valid], return_inverse=True)
    index = np.full(keys.shape, -1, dtype=np.int64)
    index[valid] = inverse.ravel()
    return unique, index


def match_segments(pred: PanopticMap, gt: PanopticMap, iou_threshold: Optional[float] = None) -> PQStats:
    """
    Match predicted and ground-truth segments of one image.

    A same-class pair with IoU > iou_threshold is a true positive. Pairs are
    taken greedily by descending IoU, one-to-one; at the default 0.5 the
    matching is unique anyway, lower thresholds need the greedy rule.

    Args:
        pred: Predicted panoptic map
        gt: Ground-truth panoptic map of the same size
        iou_threshold: Defaults to 0.5

    Returns:
        Per-class TP/FP/FN counts and the IoU sum over true positives
    """
    if pred.shape != gt.shape:
        raise DimensionMismatchError(f"Prediction {pred.shape} and ground truth {gt.shape} differ in size")
    threshold = config.EVAL_IOU_THRESHOLD if iou_threshold is None else iou_threshold

    pred_keys, pred_index = _segment_index(pred.segment_keys())
    gt_keys, gt_index = _segment_index(gt.segment_keys())
    n_pred, n_gt = pred_keys.size, gt_keys.size
    pred_class = (pred_keys >> 31).astype(np.int64)
    gt_class = (gt_keys >> 31).astype(np.int64)

    # row n_gt collects prediction pixels on void ground truth
    gt_row = np.where(gt_index >= 0, gt_index, n_gt)
    pred_flat = pred_index.ravel()
    on_pred = pred_flat >= 0
    counts = np.bincount(
        gt_row.ravel()[on_pred] * max(n_pred, 1) + pred_flat[on_pred],
        minlength=(n_gt + 1) * max(n_pred, 1),
    ).reshape(n_gt + 1, max(n_pred, 1))[:, :n_pred]
    pred_area = counts.sum(axis=0) if n_pred else np.zeros(0, dtype=np.int64)
    void_overlap = counts[n_gt]
    gt_area = np.bincount(gt_index[gt_index >= 0], minlength=n_gt)

    candidates = []
    for g, p in zip(*np.nonzero(counts[:n_gt])):
        if gt_class[g] != pred_class[p]:
            continue
        inter = counts[g, p]
        union = pred_area[p] + gt_area[g] - inter - void_overlap[p]
        score = inter / union if union > 0 else 0.0
        if score > threshold:
            candidates.append((-score, int(g), int(p)))
    candidates.sort()

    stats = PQStats()
    matched_gt, matched_pred = set(), set()
    for neg_score, g, p in candidates:
        if g in matched_gt or p in matched_pred:
            continue
        matched_gt.add(g)
        matched_pred.add(p)
        stat = stats[int(gt_class[g])]
        stat.tp += 1
        stat.iou_sum += -neg_score

    for g in range(n_gt):
        if g not in matched_gt:
            stats[int(gt_class[g])].fn += 1
    for p in range(n_pred):
        if p in matched_pred:
            continue
        if void_overlap[p] / pred_area[p] <= 0.5:
            stats[int(pred_class[p])].fp += 1

    return stats


# ============================================================================
# PQ aggregation
# ============================================================================

def class_result(stat: PQStatClass) -> PQClassResult:
    denom = stat.tp + 0.5 * stat.fp + 0.5 * stat.fn
    if denom == 0:
        return PQClassResult(pq=0.0, sq=0.0, rq=0.0, defined=False, sq_defined=False)
    sq = stat.iou_sum / stat.tp if stat.tp > 0 else 0.0
    rq = stat.tp / denom
    return PQClassResult(
        pq=stat.iou_sum / denom,
        sq=sq,
        rq=rq,
        defined=True,
        sq_defined=stat.tp > 0,
        tp=stat.tp,
        fp=stat.fp,
        fn=stat.fn,
    )


def _aggregate(results: list[PQClassResult]) -> PQAggregate:
    defined = [r for r in results if r.defined]
    if not defined:
        return PQAggregate(pq=0.0, sq=0.0, rq=0.0, n=0)
    n = len(defined)
    return PQAggregate(
        pq=sum(r.pq for r in defined) / n,
        sq=sum(r.sq for r in defined) / n,
        rq=sum(r.rq for r in defined) / n,
        n=n,
    )


def pq(stats: PQStats, catalog: Optional[ClassCatalog] = None) -> PQResult:
    """
    Per-class PQ/SQ/RQ and unweighted means over defined classes.

    A class with no TP, FP or FN is undefined and left out of the means.
    Without a catalog the things/stuff groups stay empty.
    """
    per_class = {class_id: class_result(stats[class_id]) for class_id in stats.class_ids()}
    things = [r for c, r in per_class.items() if catalog is not None and catalog.is_thing(c)]
    stuff = [r for c, r in per_class.items() if catalog is not None and catalog.is_stuff(c)]

    totals = stats.totals()
    precision = totals.tp / (totals.tp + totals.fp) if totals.tp + totals.fp else 0.0
    recall = totals.tp / (totals.tp + totals.fn) if totals.tp + totals.fn else 0.0
    return PQResult(
        per_class=per_class,
        all=_aggregate(list(per_class.values())),
        things=_aggregate(things),
        stuff=_aggregate(stuff),
        precision=precision,
        recall=recall,
    )


def evaluate_dataset(pairs: list[tuple[PanopticMap, PanopticMap]], catalog: ClassCatalog,
                     iou_threshold: Optional[float] = None) -> tuple[PQResult, PQStats]:
    """PQ over (prediction, ground truth) pairs with counts summed across images."""
    stats = PQStats()
    for pred, gt in pairs:
        stats += match_segments(pred, gt, iou_threshold)
    return pq(stats, catalog), stats


# ============================================================================
# Uncertainty sweep
# ============================================================================

def remove_uncertain(gt: PanopticMap, u: UncertaintyMap, threshold: float) -> PanopticMap:
    """GT with every pixel at u >= threshold set to void; no-prediction pixels count as ln C."""
    if u.shape != gt.shape:
        raise DimensionMismatchError(f"Uncertainty map {u.shape} and ground truth {gt.shape} differ in size")
    out = gt.copy()
    removed = u.effective_values() >= threshold
    out.class_ids[removed] = -1
    out.instance_ids[removed] = 0
    return out


def _rates(stats: PQStats) -> tuple[float, float, PQStatClass]:
    totals = stats.totals()
    tpr = totals.tp / (totals.tp + totals.fn) if totals.tp + totals.fn else 0.0
    fdr = totals.fp / (totals.fp + totals.tp) if totals.fp + totals.tp else 0.0
    return tpr, fdr, totals


def sweep_dataset(
    items: list[tuple[PanopticMap, UncertaintyMap, PanopticMap]],
    thresholds: list[float],
    iou_threshold: Optional[float] = None,
    label: str = "",
) -> SweepCurve:
    """
    TPR/FDR over (prediction, uncertainty, ground truth) triples for every
    threshold, counts summed across images. Only the ground truth is modified.

    Points come back in ascending threshold order, so the last one removes
    the fewest pixels.
    """
    iou_threshold = config.SWEEP_IOU_THRESHOLD if iou_threshold is None else iou_threshold
    total_pixels = sum(u.values.size for _, u, _ in items)
    curve = SweepCurve(label=label)
    for threshold in sorted(float(t) for t in thresholds):
        stats = PQStats()
        removed = 0
        for pred, u, gt in items:
            stats += match_segments(pred, remove_uncertain(gt, u, threshold), iou_threshold)
            removed += int(np.count_nonzero(u.effective_values() >= threshold))
        tpr, fdr, totals = _rates(stats)
        curve.points.append(SweepPoint(
            threshold=threshold,
            removed_fraction=removed / total_pixels if total_pixels else 0.0,
            tpr=tpr,
            fdr=fdr,
            tp=totals.tp,
            fp=totals.fp,
            fn=totals.fn,
        ))
    return curve


def uncertainty_sweep(
    pred: PanopticMap,
    u: UncertaintyMap,
    gt: PanopticMap,
    thresholds: list[float],
    iou_threshold: Optional[float] = None,
) -> SweepCurve:
    """Single-image sweep; see sweep_dataset."""
    return sweep_dataset([(pred, u, gt)], thresholds, iou_threshold, label=u.measure)


def threshold_grid(maps: list[UncertaintyMap], points: Optional[int] = None,
                   max_removal: Optional[float] = None) -> list[float]:
    """
    Thresholds at uniform quantiles of the observed uncertainty.

    Removal fractions run from `max_removal` down to 0. Candidates whose ties
    would remove more than `max_removal` are dropped; the last threshold sits
    just above the largest value, so it removes nothing.
    """
    points = points or config.SWEEP_POINTS
    max_removal = config.SWEEP_MAX_REMOVAL if max_removal is None else max_removal
    if points < 1:
        raise ConfigError(f"Sweep needs at least one point, got {points}")
    if not 0.0 <= max_removal <= 1.0:
        raise ConfigError(f"max_removal must be in [0, 1], got {max_removal}")
    if not maps:
        raise ConfigError("threshold_grid needs at least one uncertainty map")

    values = np.concatenate([m.effective_values().ravel() for m in maps])
    top = float(np.nextafter(values.max(), np.inf))
    grid = {top}
    if points > 1:
        for fraction in np.linspace(max_removal, 0.0, points)[:-1]:
            threshold = float(np.quantile(values, 1.0 - fraction))
            if np.mean(values >= threshold) <= max_removal:
                grid.add(threshold)
    return sorted(grid)


# ============================================================================
# Reports
# ============================================================================

def summary_rows(result: PQResult) -> list[list]:
    return [
        [name, agg.pq * 100, agg.sq * 100, agg.rq * 100, agg.n]
        for name, agg in (("All", result.all), ("Things", result.things), ("Stuff", result.stuff))
    ]


def summary_table(result: PQResult) -> str:
    """Pipe table of the All/Things/Stuff aggregates in percent."""
    return tabulate(
        summary_rows(result),
        headers=["", "PQ", "SQ", "RQ", "#categories"],
        tablefmt="pipe",
        floatfmt=".3f",
        stralign="center",
        numalign="center",
    )


def result_to_dict(result: PQResult, catalog: Optional[ClassCatalog] = None) -> dict:
    per_class = {}
    for class_id, r in sorted(result.per_class.items()):
        entry = asdict(r)
        if catalog is not None:
            entry["name"] = catalog.name(class_id)
        per_class[str(class_id)] = entry
    return {
        "per_class": per_class,
        "all": asdict(result.all),
        "things": asdict(result.things),
        "stuff": asdict(result.stuff),
        "precision": result.precision,
        "recall": result.recall,
    }


def write_pq_json(result: PQResult, destination, catalog: Optional[ClassCatalog] = None) -> Path:
    destination = Path(destination)
    destination.parent.mkdir(parents=True, exist_ok=True)
    destination.write_text(json.dumps(result_to_dict(result, catalog), indent=2, sort_keys=True))
    return destination


def write_pq_csv(result: PQResult, destination, catalog: Optional[ClassCatalog] = None) -> Path:
    """One row per class, then All/Things/Stuff aggregate rows."""
    rows = []
    for class_id, r in sorted(result.per_class.items()):
        rows.append({
            "row": "class",
            "class_id": class_id,
            "name": catalog.name(class_id) if catalog is not None else str(class_id),
            "pq": r.pq, "sq": r.sq, "rq": r.rq,
            "tp": r.tp, "fp": r.fp, "fn": r.fn,
            "defined": r.defined, "n": 1 if r.defined else 0,
        })
    for name, agg in (("all", result.all), ("things", result.things), ("stuff", result.stuff)):
        rows.append({
            "row": "aggregate", "class_id": -1, "name": name,
            "pq": agg.pq, "sq": agg.sq, "rq": agg.rq,
            "tp": 0, "fp": 0, "fn": 0,
            "defined": agg.n > 0, "n": agg.n,
        })
    destination = Path(destination)
    destination.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(rows).to_csv(destination, index=False)
    return destination


def write_sweep_csv(curves: list[SweepCurve], destination) -> Path:
    rows = [
        {"label": curve.label, **asdict(point)}
        for curve in curves
        for point in curve.points
    ]
    columns = ["label", "threshold", "removed_fraction", "tpr", "fdr", "tp", "fp", "fn"]
    destination = Path(destination)
    destination.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(rows, columns=columns).to_csv(destination, index=False)
    return destination
