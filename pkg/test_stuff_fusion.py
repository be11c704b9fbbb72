"""
Tests for the confidence stack, its sample mean and the stuff-only segmentation.
"""

import numpy as np
import pytest

from models.confidence import ConfidenceStack
from models.ensemble import NO_PROPOSAL, PerSampleSegmentation
from models.panoptic import VOID
from services.stuff_fusion import build_confidence_stack, mean_confidence, stuff_labels, stuff_seg


def make_pss(proposal_map, tables) -> PerSampleSegmentation:
    proposal_map = np.asarray(proposal_map, dtype=np.int32)
    tables = [np.asarray(t, dtype=np.float64).reshape(-1, 5) for t in tables]
    return PerSampleSegmentation(
        proposal_map=proposal_map,
        kept_softmax=tables,
        kept_indices=[np.arange(len(t)) for t in tables],
    )


# ============================================================================
# Confidence stack
# ============================================================================

def test_single_proposal_broadcasts():
    s = [0.1, 0.2, 0.3, 0.3, 0.1]
    sc = build_confidence_stack(make_pss(np.zeros((1, 3, 4)), [[s]]))
    dense = sc.to_dense()
    assert dense.shape == (1, 3, 4, 5)
    np.testing.assert_allclose(dense[0], np.broadcast_to(s, (3, 4, 5)))


def test_uncovered_pixel_is_zero_vector():
    proposal_map = np.array([[[0, NO_PROPOSAL]]])
    sc = build_confidence_stack(make_pss(proposal_map, [[[1, 0, 0, 0, 0]]]))
    np.testing.assert_array_equal(sc.slice(0)[0, 1], np.zeros(5))
    assert sc.covered(0).tolist() == [[True, False]]


def test_two_proposals_split_the_image():
    a = [0.7, 0.1, 0.1, 0.05, 0.05]
    b = [0.0, 0.0, 1.0, 0.0, 0.0]
    proposal_map = np.array([[[0, 0, 1, 1]]])
    dense = build_confidence_stack(make_pss(proposal_map, [[a, b]])).slice(0)
    np.testing.assert_allclose(dense[0, :2], [a, a])
    np.testing.assert_allclose(dense[0, 2:], [b, b])


def test_dense_factoring_keeps_values():
    rng = np.random.default_rng(42)
    dense = rng.dirichlet(np.ones(5), size=(2, 3, 3))
    dense[1, 0, 0] = 0.0
    sc = ConfidenceStack.from_dense(dense)
    assert sc.proposal_map[1, 0, 0] == NO_PROPOSAL
    np.testing.assert_allclose(sc.to_dense(), dense)


# ============================================================================
# Mean confidence
# ============================================================================

def test_identical_samples_mean_to_one_slice():
    s = [0.2, 0.5, 0.1, 0.1, 0.1]
    pss = make_pss(np.zeros((4, 2, 2)), [[s]] * 4)
    mc = mean_confidence(build_confidence_stack(pss))
    np.testing.assert_allclose(mc.mc, build_confidence_stack(pss).slice(0))
    assert mc.sample_count == 4


def test_opposite_votes_average():
    pss = make_pss(np.zeros((2, 1, 1)), [[[1, 0, 0, 0, 0]], [[0, 1, 0, 0, 0]]])
    mc = mean_confidence(build_confidence_stack(pss))
    np.testing.assert_allclose(mc.mc[0, 0], [0.5, 0.5, 0, 0, 0])


def test_mean_includes_uncovered_samples():
    proposal_map = np.array([[[0]], [[NO_PROPOSAL]]])
    pss = make_pss(proposal_map, [[[1, 0, 0, 0, 0]], np.zeros((0, 5))])
    mc = mean_confidence(build_confidence_stack(pss))
    np.testing.assert_allclose(mc.mc[0, 0], [0.5, 0, 0, 0, 0])
    assert not mc.no_prediction[0, 0]


def test_mean_sums_at_most_one():
    rng = np.random.default_rng(42)
    tables = [rng.dirichlet(np.ones(5), size=3) for _ in range(6)]
    proposal_map = rng.integers(-1, 3, size=(6, 8, 8))
    mc = mean_confidence(build_confidence_stack(make_pss(proposal_map, tables)))
    sums = mc.mc.sum(axis=2)
    assert np.all(sums <= 1.0 + 1e-12)
    covered_everywhere = np.all(proposal_map != NO_PROPOSAL, axis=0)
    np.testing.assert_allclose(sums[covered_everywhere], 1.0)


# ============================================================================
# Stuff segmentation
# ============================================================================

def test_stuff_labels_are_mc_argmax():
    pss = make_pss([[[0, NO_PROPOSAL]], [[0, NO_PROPOSAL]]], [[[0.1, 0.2, 0.0, 0.0, 0.7]]] * 2)
    labels = stuff_labels(mean_confidence(build_confidence_stack(pss)))
    assert labels.tolist() == [[4, -1]]


def test_majority_stuff_class_wins(catalog):
    votes = [[[0.6, 0.4, 0, 0, 0]], [[0.1, 0.9, 0, 0, 0]], [[0.1, 0.9, 0, 0, 0]]]
    s_initial, _, mc = stuff_seg(make_pss(np.zeros((3, 1, 1)), votes), catalog)
    assert s_initial.class_ids[0, 0] == 1  # road
    assert mc.mc[0, 0, 1] == pytest.approx(2.2 / 3)


def test_unanimous_sky(catalog):
    s_initial, _, _ = stuff_seg(make_pss(np.zeros((3, 2, 2)), [[[1, 0, 0, 0, 0]]] * 3), catalog)
    assert np.all(s_initial.class_ids == 0)
    assert np.all(s_initial.instance_ids == 0)


@pytest.mark.parametrize("vector", [
    [0.1, 0.1, 0.8, 0.0, 0.0],   # car, a thing
    [0.1, 0.1, 0.0, 0.0, 0.8],   # background slot
])
def test_non_stuff_argmax_stays_void(catalog, vector):
    s_initial, _, _ = stuff_seg(make_pss(np.zeros((2, 2, 2)), [[vector]] * 2), catalog)
    assert np.all(s_initial.class_ids == VOID)


def test_uncovered_pixels_stay_void(catalog):
    proposal_map = np.array([[[0, NO_PROPOSAL]]])
    s_initial, _, mc = stuff_seg(make_pss(proposal_map, [[[0, 1, 0, 0, 0]]]), catalog)
    assert s_initial.class_ids.tolist() == [[1, VOID]]
    assert mc.labels().tolist() == [[1, -1]]
