"""
Tests for the linear assignment solver and the reference-sample fusion baseline.
"""

from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linear_sum_assignment

from errors import DimensionMismatchError, InternalError
from models.ensemble import NO_PROPOSAL
from models.synthetic import JitterSpec
from services.assignment import (
    hungarian_fuse,
    overlap_costs,
    pick_reference,
    solve_lap,
)
from services.per_sample import baseline_segmentation, per_sample_seg
from services.stuff_fusion import stuff_seg
from services.thing_fusion import fuse_things, instance_count
from conftest import assignment_cost, make_batch, mask_iou_matrix, rect


def brute_force_cost(cost: np.ndarray) -> float:
    rows, cols = cost.shape
    if rows > cols:
        return brute_force_cost(cost.T)
    return min(sum(cost[r, c] for r, c in enumerate(p)) for p in permutations(range(cols), rows))


def check_assignment(cost: np.ndarray, pairs) -> None:
    rows = [r for r, _ in pairs]
    cols = [c for _, c in pairs]
    assert len(pairs) == min(cost.shape)
    assert len(set(rows)) == len(rows)
    assert len(set(cols)) == len(cols)
    assert rows == sorted(rows)


# ============================================================================
# solve_lap
# ============================================================================

def test_two_by_two():
    cost = [[1, 2], [2, 1]]
    pairs = solve_lap(cost)
    assert pairs == [(0, 0), (1, 1)]
    assert assignment_cost(cost, pairs) == 2


def test_zero_diagonal():
    cost = np.ones((4, 4)) - np.eye(4)
    assert solve_lap(cost) == [(i, i) for i in range(4)]


def test_wide_matrix_leaves_column_unmatched():
    assert solve_lap([[0, 5, 5], [5, 0, 5]]) == [(0, 0), (1, 1)]


def test_tall_matrix_leaves_row_unmatched():
    pairs = solve_lap([[5, 5], [0, 5], [5, 0]])
    assert pairs == [(1, 0), (2, 1)]


def test_empty_matrix():
    assert solve_lap(np.zeros((0, 3))) == []
    assert solve_lap(np.zeros((3, 0))) == []


def test_bad_matrices():
    with pytest.raises(DimensionMismatchError):
        solve_lap(np.zeros(3))
    with pytest.raises(InternalError):
        solve_lap([[0.0, np.nan], [1.0, 2.0]])


@given(
    st.integers(1, 6),
    st.integers(1, 6),
    st.integers(0, 2 ** 32 - 1),
)
@settings(max_examples=80, deadline=None)
def test_matches_brute_force(rows, cols, seed):
    cost = np.random.default_rng(seed).random((rows, cols))
    pairs = solve_lap(cost)
    check_assignment(cost, pairs)
    assert assignment_cost(cost, pairs) == pytest.approx(brute_force_cost(cost))


def test_integer_costs_with_ties_at_seven():
    rng = np.random.default_rng(42)
    for _ in range(5):
        cost = rng.integers(0, 4, size=(7, 7)).astype(float)
        pairs = solve_lap(cost)
        check_assignment(cost, pairs)
        assert assignment_cost(cost, pairs) == pytest.approx(brute_force_cost(cost))


def test_thousand_random_matrices_match_brute_force():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        rows, cols = rng.integers(1, 8, size=2)
        if rng.random() < 0.5:
            cost = rng.integers(0, 5, size=(rows, cols)).astype(float)
        else:
            cost = rng.random((rows, cols))
        pairs = solve_lap(cost)
        check_assignment(cost, pairs)
        assert assignment_cost(cost, pairs) == pytest.approx(brute_force_cost(cost), abs=1e-9)


@pytest.mark.parametrize("shape", [(30, 30), (20, 45), (45, 20)])
def test_agrees_with_scipy(shape):
    rng = np.random.default_rng(42)
    cost = rng.random(shape)
    rows, cols = linear_sum_assignment(cost)
    pairs = solve_lap(cost)
    check_assignment(cost, pairs)
    assert assignment_cost(cost, pairs) == pytest.approx(cost[rows, cols].sum())


# ============================================================================
# Reference-sample fusion
# ============================================================================

def test_overlap_costs_match_mask_iou():
    rng = np.random.default_rng(42)
    proposal_map = rng.integers(-1, 4, size=(9, 9))
    reference = rng.random((3, 9, 9)) > 0.5
    incoming = np.stack([proposal_map == k for k in range(4)])
    expected = 1.0 - mask_iou_matrix(reference, incoming)
    np.testing.assert_allclose(overlap_costs(list(reference), proposal_map, 4), expected)


def test_reference_pick():
    assert pick_reference(15) == 0
    picked = pick_reference(15, reference_seed=7)
    assert 0 <= picked < 15
    assert pick_reference(15, reference_seed=7) == picked


def test_single_sample_equals_baseline(catalog):
    shape = (8, 8)
    car = rect(shape, 1, 1, 3, 3)
    batch = make_batch([[(car, 2), (~car, 0)]], catalog)
    assert hungarian_fuse(per_sample_seg(batch), batch) == baseline_segmentation(batch)


def test_identical_samples_equal_baseline(catalog):
    shape = (8, 8)
    car, person = rect(shape, 1, 1, 3, 3), rect(shape, 5, 5, 2, 3)
    sample = [(car, 2), (person, 3), (~(car | person), 1)]
    batch = make_batch([sample] * 4, catalog)
    fused = hungarian_fuse(per_sample_seg(batch), batch)
    assert fused == baseline_segmentation(batch.sample(0))


def test_spurious_proposal_is_discarded(catalog):
    shape = (10, 10)
    car = rect(shape, 1, 1, 4, 4)
    spurious = rect(shape, 7, 7, 2, 2)
    batch = make_batch([
        [(car, 2), (~car, 1)],
        [(car, 2), (spurious, 3), (~(car | spurious), 1)],
    ], catalog)
    fused = hungarian_fuse(per_sample_seg(batch), batch)
    assert instance_count(fused) == 1
    assert np.all(fused.class_ids[spurious] == 1)
    assert np.all(fused.class_ids[car] == 2)


def test_empty_reference_gives_void(catalog):
    shape = (4, 4)
    batch = make_batch([
        [(np.ones(shape, dtype=bool), catalog.background_id)],
        [(np.ones(shape, dtype=bool), 0)],
    ], catalog)
    pss = per_sample_seg(batch)
    assert pss.proposal_map[0].max() == NO_PROPOSAL
    assert np.all(hungarian_fuse(pss, batch).void_mask)


@pytest.mark.parametrize("seed", range(3))
def test_agrees_with_clustering_without_jitter(synthetic, seed):
    _, _, batch, _ = synthetic(seed=seed, samples=4, jitter=JitterSpec(seed=seed))
    pss = per_sample_seg(batch)
    s_initial, _, mc = stuff_seg(pss, batch.catalog)
    ours, _ = fuse_things(pss, pss.kept_softmax, s_initial, mc, batch.catalog)
    theirs = hungarian_fuse(pss, batch)
    assert theirs.relabel_instances() == ours.relabel_instances()


def test_contested_pixel_goes_to_highest_summed_logit(catalog):
    shape = (4, 8)
    car, person = rect(shape, 0, 0, 4, 4), rect(shape, 0, 4, 4, 4)
    shrunk = rect(shape, 0, 5, 4, 3)
    batch = make_batch([[(car, 2), (person, 3)], [(car, 2), (shrunk, 3)]], catalog)
    # sample 1 leans car at column 4 only just: 0.5 against -0.5
    batch.mask_logits[1, 0, :, 4] = 0.5
    batch.mask_logits[1, 1, :, 4] = -0.5
    pss = per_sample_seg(batch)
    assert np.all(pss.proposal_map[1][:, 4] == 0)

    fused = hungarian_fuse(pss, batch)
    assert np.all(fused.class_ids[:, :4] == 2)
    assert np.all(fused.class_ids[:, 4:] == 3)
    assert instance_count(fused) == 2


def planted_keys(pss, table) -> np.ndarray:
    """Q x H x W planted instance id (things) or 1000 + class id (stuff) owning each pixel; -1 for none."""
    lookup = {
        (c.sample, c.proposal): c.instance_id if c.kind == "thing" else 1000 + c.class_id
        for c in table
    }
    keys = np.full(pss.proposal_map.shape, -1, dtype=np.int64)
    for q in range(pss.num_samples):
        row = np.array([lookup[(q, int(n))] for n in pss.kept_indices[q]] + [-1], dtype=np.int64)
        keys[q] = row[pss.proposal_map[q]]
    return keys


def is_bijection(a: np.ndarray, b: np.ndarray) -> bool:
    pairs = set(zip(a.tolist(), b.tolist()))
    return len(pairs) == len(set(a.tolist())) == len(set(b.tolist()))


@pytest.mark.parametrize("seed", range(100))
def test_agrees_with_clustering_where_samples_agree(synthetic, seed):
    jitter = JitterSpec(translation=1, seed=seed)
    _, _, batch, table = synthetic(seed=seed, samples=5, shapes=["rectangle"], jitter=jitter)
    pss = per_sample_seg(batch)
    s_initial, _, mc = stuff_seg(pss, batch.catalog)
    ours, _ = fuse_things(pss, pss.kept_softmax, s_initial, mc, batch.catalog)
    theirs = hungarian_fuse(pss, batch)

    keys = planted_keys(pss, table)
    agreed = np.all(keys == keys[0], axis=0) & (keys[0] >= 0)
    assert agreed.any()
    np.testing.assert_array_equal(ours.class_ids[agreed], theirs.class_ids[agreed])
    assert is_bijection(ours.segment_keys()[agreed], theirs.segment_keys()[agreed])
