import itertools
import math

import numpy as np
import pytest

from texseg.evaluation import (
    apply_permutation,
    best_permutation_match,
    boundary_sets,
    concentration_experiment,
    consistency_experiment,
    covered_set,
    lemma3_experiment,
    separation_delta,
    theorem2_experiment,
)
from texseg.features import subsample_grid
from texseg.fields import KernelSizeField, MAModel, MAVariant, kernel_covariance
from texseg.mosaic import RegionGeometry, region_mask


def _brute_force_match(est, truth, k):
    """Independent oracle: double loop over permutations and pixels."""
    est = np.asarray(est).ravel()
    truth = np.asarray(truth).ravel()
    best = -1
    for perm in itertools.permutations(range(k)):
        agree = sum(1 for e, t in zip(est, truth) if perm[e] == t)
        best = max(best, agree)
    return best / est.size


# ---------------------------------------------------------------------------
# permutation matching
# ---------------------------------------------------------------------------

def test_match_identical():
    labels = np.array([[0, 1], [1, 0]])
    report = best_permutation_match(labels, labels, k=2)
    assert report.accuracy == 1.0
    assert report.permutation == (0, 1)
    assert report.mismatched_count == 0


def test_match_flipped():
    truth = np.array([[0, 1], [1, 0]])
    report = best_permutation_match(1 - truth, truth, k=2)
    assert report.accuracy == 1.0
    assert report.permutation == (1, 0)


def test_match_half():
    report = best_permutation_match([0, 1, 0, 1], [0, 0, 1, 1], k=2)
    assert report.accuracy == 0.5
    assert report.error_rate == 0.5
    assert report.mismatched_count == 2


def test_match_brute_force_100_instances():
    rng = np.random.default_rng(0)
    for case in range(100):
        k = int(rng.integers(2, 5))
        size = int(rng.integers(4, 40))
        est = rng.integers(0, k, size)
        truth = rng.integers(0, k, size)
        report = best_permutation_match(est, truth, k=k)
        assert report.accuracy == pytest.approx(_brute_force_match(est, truth, k)), case


def test_match_permutation_invariance():
    rng = np.random.default_rng(1)
    truth = rng.integers(0, 3, (8, 8))
    est = rng.integers(0, 3, (8, 8))
    base = best_permutation_match(est, truth, k=3)
    for perm in itertools.permutations(range(3)):
        relabeled = apply_permutation(est, perm)
        again = best_permutation_match(relabeled, truth, k=3)
        assert again.accuracy == base.accuracy


def test_match_accuracy_error_sum_and_count():
    rng = np.random.default_rng(2)
    est = rng.integers(0, 2, 100)
    truth = rng.integers(0, 2, 100)
    report = best_permutation_match(est, truth, k=2)
    assert report.accuracy + report.error_rate == pytest.approx(1.0, abs=1e-12)
    assert report.mismatched_count == round(report.error_rate * report.total)


def test_match_k_cap():
    with pytest.raises(ValueError, match="assignment-solver"):
        best_permutation_match(np.arange(9), np.arange(9), k=9)


def test_match_shape_mismatch():
    with pytest.raises(ValueError, match="shape"):
        best_permutation_match(np.zeros((2, 2), int), np.zeros((3, 2), int))


# ---------------------------------------------------------------------------
# boundary sets
# ---------------------------------------------------------------------------

def _brute_force_boundary(mask, m):
    rows, cols = mask.shape
    classes = np.empty((rows, cols), dtype=np.int8)
    for r in range(rows):
        for c in range(cols):
            window = mask[max(0, r - m):r + m + 1, max(0, c - m):c + m + 1]
            if np.all(window == 0):
                classes[r, c] = 0
            elif np.all(window == 1):
                classes[r, c] = 1
            else:
                classes[r, c] = 2
    return classes


def test_boundary_vsplit_10x10():
    # patch meets both regions only in the 2m columns astride the split
    mask = region_mask(RegionGeometry("vsplit"), 10, 10)
    report, classes = boundary_sets(mask, 1)
    assert report.boundary_count == 20
    assert report.h0_count == 40 and report.h1_count == 40
    assert np.array_equal(np.unique(np.nonzero(classes == 2)[1]), [4, 5])


def test_boundary_m0_empty():
    mask = region_mask(RegionGeometry("vsplit"), 8, 8)
    report, _ = boundary_sets(mask, 0)
    assert report.boundary_count == 0


def test_boundary_counts_sum():
    for kind in ("vsplit", "hsplit", "disk"):
        mask = region_mask(RegionGeometry(kind), 17, 13)
        report, _ = boundary_sets(mask, 2)
        assert report.h0_count + report.h1_count + report.boundary_count == 17 * 13


def test_boundary_matches_brute_force():
    rng = np.random.default_rng(5)
    for _ in range(5):
        rows = int(rng.integers(4, 33))
        cols = int(rng.integers(4, 33))
        mask = (rng.random((rows, cols)) < 0.5).astype(int)
        for m in (1, 2, 3):
            _, classes = boundary_sets(mask, m)
            assert np.array_equal(classes, _brute_force_boundary(mask, m)), (rows, cols, m)


def test_boundary_rejects_multi_region():
    with pytest.raises(ValueError, match="two-region"):
        boundary_sets(np.array([[0, 1], [2, 0]]), 1)


# ---------------------------------------------------------------------------
# separation
# ---------------------------------------------------------------------------

def test_delta_zero_for_same_model():
    model = MAModel(MAVariant.VERT, 2)
    assert separation_delta(model, model, 3) == 0.0


def test_delta_model3_vs_model4():
    got = separation_delta(MAModel(MAVariant.VERT, 2), MAModel(MAVariant.HORIZ, 2), 2)
    assert got == pytest.approx(0.8)


def test_delta_symmetric():
    a = MAModel(MAVariant.DIAG, 2)
    b = MAModel(MAVariant.VERT, 3)
    assert separation_delta(a, b, 4) == separation_delta(b, a, 4)


def test_delta_kernel_oracle():
    sizes0 = KernelSizeField.constant(np.eye(2), 8, 8)
    sizes1 = KernelSizeField.constant(4 * np.eye(2), 8, 8)
    got = separation_delta(sizes0, sizes1, 2, scale=1.0)
    want = max(
        abs(kernel_covariance(np.eye(2), np.eye(2), lag, (0, 0), 1.0)
            - kernel_covariance(4 * np.eye(2), 4 * np.eye(2), lag, (0, 0), 1.0))
        for lag in itertools.product(range(-2, 3), repeat=2))
    assert got == pytest.approx(want)


def test_delta_no_oracle_for_images():
    with pytest.raises(ValueError, match="oracle"):
        separation_delta(np.zeros((4, 4)), np.zeros((4, 4)), 2)


# ---------------------------------------------------------------------------
# experiments (smoke scale; the acceptance suite runs the full settings)
# ---------------------------------------------------------------------------

def test_concentration_huge_a_all_zero():
    rows = concentration_experiment(MAModel(MAVariant.VERT, 2), [16, 25], 10.0, 5, 0)
    assert [r[2] for r in rows] == [0.0, 0.0]


def test_concentration_single_replicate_binary():
    rows = concentration_experiment(MAModel(MAVariant.VERT, 2), [16], 0.3, 1, 0)
    assert rows[0][2] in (0.0, 1.0)


def test_concentration_row_shape():
    rows = concentration_experiment(MAModel(MAVariant.VERT, 2), [16, 36], 0.3, 4, 3)
    assert [(r[0], r[1]) for r in rows] == [(16, 4), (36, 6)]


def test_consistency_degenerate_flagged():
    model = MAModel(MAVariant.DIAG, 2)
    rows = consistency_experiment(model, model, [16], 2, 3)
    n, m, err, env, env_fit, degenerate = rows[0]
    assert degenerate
    assert math.isnan(env) and math.isnan(env_fit)
    assert 0.0 <= err <= 1.0


def test_consistency_envelope_and_fit():
    rows = consistency_experiment(MAModel(MAVariant.DIAG, 2), MAModel(MAVariant.ANTIDIAG, 2),
                                  [16, 25], 2, 5)
    for n, m, err, env, env_fit, degenerate in rows:
        assert not degenerate
        assert 0.0 <= err <= 1.0
        assert env == pytest.approx(math.log(n) ** 1.5 / (0.8**2 * n))
        assert env_fit > 0


def test_covered_set_matches_window_scan():
    truth = region_mask(RegionGeometry("vsplit"), 20, 20)
    grid = subsample_grid(20, 2)
    covered = covered_set(truth, grid, 2)
    expect = np.zeros((20, 20), dtype=bool)
    for r, c in grid:
        window = truth[max(0, r - 2):r + 3, max(0, c - 2):c + 3]
        if window.min() == window.max():
            expect[max(0, r - 2):r + 3, max(0, c - 2):c + 3] = True
    assert np.array_equal(covered, expect)
    assert covered.sum() > 0


def test_theorem2_smoke_and_fraction_range():
    sizes0 = KernelSizeField.constant(np.eye(2), 21, 21)
    sizes1 = KernelSizeField.constant(9 * np.eye(2), 21, 21)
    report = theorem2_experiment(sizes0, sizes1, 21, 1.5, 1, replicates=2, m=3, scale=3.0)
    assert not report.degenerate
    assert all(0.0 <= f <= 1.0 for f in report.fractions)
    assert report.covered_pixels > 0
    assert report.mean_fraction == pytest.approx(np.mean(report.fractions))


def test_theorem2_degenerate_flag():
    sizes = KernelSizeField.constant(np.eye(2), 21, 21)
    report = theorem2_experiment(sizes, sizes, 21, 1.5, 0, replicates=1, m=3)
    assert report.degenerate


def test_theorem2_deterministic():
    sizes0 = KernelSizeField.constant(np.eye(2), 21, 21)
    sizes1 = KernelSizeField.constant(4 * np.eye(2), 21, 21)
    a = theorem2_experiment(sizes0, sizes1, 21, 1.5, 5, replicates=2, m=3, scale=2.0)
    b = theorem2_experiment(sizes0, sizes1, 21, 1.5, 5, replicates=2, m=3, scale=2.0)
    assert a.fractions == b.fractions


def test_two_region_fraction_agrees_with_permutation_match():
    from texseg.evaluation import _two_region_match_fraction

    rng = np.random.default_rng(9)
    for _ in range(50):
        n_est = int(rng.integers(1, 7))
        est = rng.integers(0, n_est, 60)
        truth = rng.integers(0, 2, 60)
        got = _two_region_match_fraction(est, truth)
        k = max(n_est, 2)
        want = best_permutation_match(est, truth, k=k).accuracy
        assert got == pytest.approx(want)


def test_lemma3_rows_finite():
    rows = lemma3_experiment([16], 2, pairs=15)
    n, m, max_ratio, median_ratio, pairs = rows[0]
    assert (n, m, pairs) == (16, 4, 15)
    assert np.isfinite(max_ratio) and max_ratio > 0
    assert median_ratio <= max_ratio
