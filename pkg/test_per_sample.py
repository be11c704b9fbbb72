"""
Tests for the per-sample stage: softmax, mask upscaling, proposal maps and
the single-pass baseline.
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from errors import ConfigError
from models.ensemble import NO_PROPOSAL
from models.panoptic import VOID
from services.per_sample import (
    baseline_segmentation,
    per_sample_seg,
    proposal_argmax,
    segmentation_from_proposals,
    softmax,
    upscale_mask,
)
from conftest import HIGH, LOW, make_batch, rect


# ============================================================================
# softmax / upscale_mask
# ============================================================================

def test_softmax_values():
    np.testing.assert_allclose(softmax(np.zeros(4)), [0.25] * 4)
    np.testing.assert_allclose(softmax(np.array([0.0, np.log(3.0)])), [0.25, 0.75])
    np.testing.assert_allclose(softmax(np.array([1000.0, 1000.0])), [0.5, 0.5])


@given(st.lists(st.floats(-50, 50), min_size=2, max_size=12))
@settings(max_examples=50)
def test_softmax_is_a_distribution(values):
    p = softmax(np.array(values))
    assert np.all(p >= 0)
    assert p.sum() == pytest.approx(1.0)


def test_bilinear_upscale_uses_pixel_centres():
    out = upscale_mask(np.array([[0.0, 1.0], [0.0, 1.0]]), (4, 4), "bilinear")
    for row in out:
        np.testing.assert_allclose(row, [0.0, 0.25, 0.75, 1.0])


@pytest.mark.parametrize("mode", ["bilinear", "nearest"])
@pytest.mark.parametrize("source,target", [((1, 1), (5, 7)), ((3, 4), (9, 10)), ((6, 6), (3, 2))])
def test_constant_grid_stays_constant(mode, source, target):
    out = upscale_mask(np.full(source, 2.5), target, mode)
    assert out.shape == target
    np.testing.assert_allclose(out, 2.5)


def test_nearest_duplicates_cells():
    out = upscale_mask(np.array([[1.0, 2.0], [3.0, 4.0]]), (4, 4), "nearest")
    np.testing.assert_array_equal(out[:2, :2], 1.0)
    np.testing.assert_array_equal(out[2:, 2:], 4.0)


def test_upscale_stack_matches_single_masks():
    rng = np.random.default_rng(42)
    stack = rng.normal(size=(3, 4, 5))
    out = upscale_mask(stack, (8, 11))
    for k in range(3):
        np.testing.assert_allclose(out[k], upscale_mask(stack[k], (8, 11)))


def test_unknown_upscale_mode():
    with pytest.raises(ConfigError):
        upscale_mask(np.zeros((2, 2)), (4, 4), "bicubic")


# ============================================================================
# proposal_argmax / per_sample_seg
# ============================================================================

def test_argmax_ties_go_to_lowest_index():
    masks = np.zeros((20, 3, 3))
    masks[17, 0, 0] = 1.0
    owner = proposal_argmax(masks, (3, 3))
    assert owner[0, 0] == 17
    assert np.all(owner.ravel()[1:] == 0)


def test_argmax_without_proposals():
    owner = proposal_argmax(np.zeros((0, 2, 2)), (4, 4))
    assert np.all(owner == NO_PROPOSAL)


def test_argmax_matches_straightforward_scan():
    rng = np.random.default_rng(42)
    masks = rng.normal(size=(37, 5, 6))
    owner = proposal_argmax(masks, (10, 12))
    upscaled = np.stack([upscale_mask(m, (10, 12)) for m in masks])
    np.testing.assert_array_equal(owner, np.argmax(upscaled, axis=0))


def test_background_only_sample_is_empty(catalog):
    batch = make_batch([[(np.ones((4, 4), dtype=bool), catalog.background_id)]], catalog)
    pss = per_sample_seg(batch)
    assert pss.kept_count == [0]
    assert pss.empty_samples == [0]
    assert np.all(pss.proposal_map == NO_PROPOSAL)


def test_single_survivor_owns_every_pixel(catalog):
    shape = (4, 4)
    batch = make_batch([[(np.ones(shape, dtype=bool), catalog.background_id), (np.zeros(shape, dtype=bool), 2)]],
                       catalog)
    pss = per_sample_seg(batch)
    assert pss.kept_count == [1]
    assert pss.kept_indices[0].tolist() == [1]
    assert np.all(pss.proposal_map[0] == 0)
    assert pss.kept_softmax[0].shape == (1, catalog.num_classes)


def test_disjoint_regions_partition_the_image(catalog):
    shape = (6, 6)
    left, right = rect(shape, 0, 0, 6, 3), rect(shape, 0, 3, 6, 3)
    batch = make_batch([[(left, 0), (right, 2), (np.zeros(shape, dtype=bool), catalog.background_id)]], catalog)
    pss = per_sample_seg(batch)
    assert np.all(pss.proposal_map[0][left] == 0)
    assert np.all(pss.proposal_map[0][right] == 1)
    assert pss.sample_labels(0).tolist() == [0, 2]


def test_low_resolution_masks_are_upscaled(catalog):
    masks = np.full((1, 2, 3, 3), LOW, dtype=np.float32)
    masks[0, 0, :, :2] = HIGH
    masks[0, 1, :, 2] = HIGH
    batch = make_batch([[(np.ones((3, 3), dtype=bool), 0), (np.ones((3, 3), dtype=bool), 2)]], catalog)
    batch.mask_logits = masks
    batch.image_size = (9, 9)
    pss = per_sample_seg(batch)
    assert pss.image_size == (9, 9)
    assert np.all(pss.proposal_map[0][:, 0] == 0)
    assert np.all(pss.proposal_map[0][:, -1] == 1)


# ============================================================================
# segmentation_from_proposals / baseline
# ============================================================================

def test_thing_proposals_get_distinct_instances(catalog):
    proposal_map = np.array([[0, 0, 1, 1], [2, 2, 3, NO_PROPOSAL]])
    labels = np.array([0, 2, 2, 0])
    m = segmentation_from_proposals(proposal_map, labels, catalog)
    assert m.class_ids.tolist() == [[0, 0, 2, 2], [2, 2, 0, VOID]]
    assert m.instance_ids.tolist() == [[0, 0, 1, 1], [2, 2, 0, 0]]


def test_baseline_reproduces_clean_proposals(catalog):
    shape = (8, 8)
    car = rect(shape, 2, 2, 3, 3)
    batch = make_batch([[(car, 2), (~car, 0)]], catalog)
    m = baseline_segmentation(batch)
    assert np.all(m.class_ids[car] == 2)
    assert np.all(m.instance_ids[car] == 1)
    assert np.all(m.class_ids[~car] == 0)


def test_baseline_drops_small_segments(catalog):
    shape = (8, 8)
    speck = rect(shape, 0, 0, 1, 2)
    road = np.ones(shape, dtype=bool)
    batch = make_batch([[(road, 1), (speck, 3)]], catalog)
    batch.mask_logits[0, 0][speck] = 0.0  # road stays runner-up under the speck
    pruned = baseline_segmentation(batch, min_pixels=3)
    assert np.all(pruned.class_ids == 1)
    unpruned = baseline_segmentation(batch)
    assert np.all(unpruned.class_ids[speck] == 3)


def test_baseline_score_threshold(catalog):
    shape = (4, 4)
    batch = make_batch([[(np.ones(shape, dtype=bool), 2)]], catalog)
    batch.logits[0, 0] = 0.0  # nearly uniform softmax, car wins with a score near 1/C
    batch.logits[0, 0, 2] = 0.1
    assert np.all(baseline_segmentation(batch, min_score=0.9).void_mask)
    assert np.all(baseline_segmentation(batch).class_ids == 2)
