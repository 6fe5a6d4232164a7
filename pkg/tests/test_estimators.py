import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import balanced_block_sizes, gm_objective, grid_refine_median

from heavymean.constants import psi
from heavymean.estimators import (
    CenterMethod,
    ConvergenceError,
    EstimatorConfig,
    StateError,
    block_slices,
    geometric_median,
    gmom,
    gmom_block_count,
    naive_center,
    sample_mean,
    stitch_n0,
    stitched_estimate,
    stitched_init,
    stitched_update,
    stream_estimate,
    stream_init,
    stream_update,
    truncated_mean,
    truncated_mean_path,
    weiszfeld_iterates,
)
from heavymean.space import SpaceSpec

E1, E2, E3 = SpaceSpec.euclidean(1), SpaceSpec.euclidean(2), SpaceSpec.euclidean(3)


def test_sample_mean_examples():
    np.testing.assert_array_equal(sample_mean([[1.0, 0.0], [3.0, 0.0]]), [2.0, 0.0])
    np.testing.assert_array_equal(sample_mean([[0.1, -7.0]]), [0.1, -7.0])
    with pytest.raises(ValueError):
        sample_mean(np.zeros((0, 2)))


def test_sample_mean_gaussian_band():
    hits = 0
    for seed in range(100):
        x = np.random.default_rng(seed).standard_normal((1000, 3))
        hits += bool(np.all(np.abs(sample_mean(x)) < 0.15))
    assert hits >= 99


def test_geometric_median_symmetric_set():
    P = [[0, 0], [2, 0], [1, 1], [1, -1]]
    np.testing.assert_allclose(geometric_median(P, E2), [1.0, 0.0], atol=1e-8)


def test_geometric_median_collinear_is_median():
    P = [[0.0, 0.0], [1.0, 0.0], [10.0, 0.0]]
    np.testing.assert_allclose(geometric_median(P, E2), [1.0, 0.0], atol=1e-8)
    np.testing.assert_allclose(geometric_median([[0.0], [1.0], [10.0]], E1), [1.0], atol=1e-8)


@pytest.mark.parametrize("seed", range(10))
def test_geometric_median_matches_grid_oracle(seed):
    P = np.random.default_rng(seed).uniform(-1, 1, (5, 2))
    np.testing.assert_allclose(geometric_median(P, E2), grid_refine_median(P), atol=1e-4)


@pytest.mark.parametrize("alpha", [3.0, 4.0])
def test_geometric_median_lp_matches_grid_oracle(alpha):
    sp = SpaceSpec.lp(alpha, 2)
    for seed in range(5):
        P = np.random.default_rng(100 + seed).uniform(-1, 1, (6, 2))
        y = geometric_median(P, sp)
        ref = grid_refine_median(P, alpha)
        assert gm_objective(P, y, alpha) <= gm_objective(P, ref, alpha) + 1e-8
        np.testing.assert_allclose(y, ref, atol=1e-4)


def test_geometric_median_at_heavy_vertex():
    # three copies of the origin outweigh two far points: the median is the vertex
    P = [[0, 0], [0, 0], [0, 0], [5, 1], [4, -3]]
    np.testing.assert_allclose(geometric_median(P, E2), [0.0, 0.0], atol=1e-12)


def test_geometric_median_leaves_a_non_optimal_vertex():
    P = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.5, 0.5]])
    P[4] = [0.1, 0.1]  # the coordinatewise start is not the answer
    y = geometric_median(P, E2)
    np.testing.assert_allclose(y, grid_refine_median(P), atol=1e-4)


def test_weiszfeld_objective_never_increases():
    P = np.random.default_rng(7).standard_normal((30, 3))
    vals = [gm_objective(P, y) for y in weiszfeld_iterates(P, E3)]
    assert np.all(np.diff(vals) <= 1e-12 * vals[0])


def test_weiszfeld_reports_best_iterate_on_budget_exhaustion():
    P = np.random.default_rng(1).standard_normal((40, 3))
    with pytest.raises(ConvergenceError) as info:
        geometric_median(P, E3, tol=1e-15, max_iter=2)
    assert info.value.best.shape == (3,)


def test_gmom_block_count_examples():
    assert gmom_block_count(1e-4) == 32
    assert gmom_block_count(0.5) == 3
    assert gmom_block_count(math.exp(-psi(7 / 18, 0.1)) * (1 - 1e-12)) == 2
    for d in np.geomspace(1e-12, 0.9, 50):
        assert gmom_block_count(d) <= 3.5 * math.log(1 / d) + 1


def test_block_sizes():
    sizes = [s.stop - s.start for s in block_slices(90, 32)]
    assert sorted(sizes, reverse=True) == balanced_block_sizes(90, 32)
    assert sizes.count(3) == 26 and sizes.count(2) == 6
    with pytest.raises(ValueError):
        block_slices(3, 4)


def test_gmom_extremes():
    P = np.random.default_rng(2).standard_normal((12, 2))
    np.testing.assert_array_equal(gmom(P, 1, E2), sample_mean(P))
    np.testing.assert_allclose(gmom(P, 12, E2), geometric_median(P, E2), atol=1e-12)


def test_truncated_mean_example():
    cfg = EstimatorConfig(0.1, 0)
    assert truncated_mean([0.0, 1.0, 100.0], cfg, E1)[0] == pytest.approx(11 / 3, rel=1e-15)


def test_truncation_inactive_gives_tail_mean():
    X = np.random.default_rng(4).uniform(-1, 1, (40, 2))
    cfg = EstimatorConfig(0.01, 10)
    np.testing.assert_allclose(truncated_mean(X, cfg, E2), X[10:].mean(axis=0), rtol=1e-13)


def test_huge_lambda_returns_center():
    X = np.random.default_rng(5).standard_normal((40, 2))
    cfg = EstimatorConfig(1e12, 10)
    np.testing.assert_allclose(truncated_mean(X, cfg, E2), X[:10].mean(axis=0), atol=1e-11)


def test_truncated_mean_needs_more_than_k():
    with pytest.raises(ValueError):
        truncated_mean(np.zeros((5, 1)), EstimatorConfig(1.0, 5), E1)


def test_gmom_center_needs_enough_samples():
    cfg = EstimatorConfig(1.0, 10, CenterMethod.GMOM, 1e-4)
    with pytest.raises(ValueError):
        naive_center(np.zeros((10, 2)), cfg, E2)


def test_k_zero_means_zero_center():
    assert EstimatorConfig(1.0, 0, CenterMethod.GMOM).center_method is CenterMethod.ZERO


def test_path_rows_match_prefix_calls():
    X = np.random.default_rng(6).standard_cauchy((60, 2))
    cfg = EstimatorConfig(0.3, 7)
    path, center = truncated_mean_path(X, cfg, E2)
    np.testing.assert_array_equal(center, X[:7].mean(axis=0))
    for n in range(8, 61):
        np.testing.assert_array_equal(path[n - 8], truncated_mean(X[:n], cfg, E2))


def test_stream_needs_samples_past_k():
    cfg = EstimatorConfig(0.5, 3)
    st_ = stream_init(E2, cfg)
    for x in np.ones((3, 2)):
        stream_update(st_, x)
    with pytest.raises(StateError):
        stream_estimate(st_)


@pytest.mark.parametrize("center", [CenterMethod.SAMPLE_MEAN, CenterMethod.GMOM])
def test_stream_interleaved_prefixes(center):
    X = np.random.default_rng(8).standard_t(1.5, (120, 3))
    k = 40
    cfg = EstimatorConfig(0.2, k, center, 1e-4)
    st_ = stream_init(E3, cfg)
    for n, x in enumerate(X, 1):
        stream_update(st_, x)
        if n in (k + 1, k + 5, k + 50, 120):
            np.testing.assert_array_equal(stream_estimate(st_), truncated_mean(X[:n], cfg, E3))


def test_snapshot_is_independent():
    cfg = EstimatorConfig(0.5, 0)
    st_ = stream_init(E1, cfg)
    stream_update(st_, [1.0])
    snap = st_.snapshot()
    stream_update(st_, [5.0])
    assert snap.count == 1 and stream_estimate(snap)[0] == 1.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([CenterMethod.SAMPLE_MEAN, CenterMethod.GMOM]),
       st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_translation_equivariance(seed, center, s0, s1):
    X = np.random.default_rng(seed).standard_t(1.7, (80, 2))
    shift = np.array([s0, s1])
    cfg = EstimatorConfig(0.4, 40, center, 1e-4)
    a = truncated_mean(X + shift, cfg, E2)
    b = truncated_mean(X, cfg, E2) + shift
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-9)


# --- stitched estimator ------------------------------------------------------


def lam_of(j):
    return 2.0 ** (-j / 2)


def test_stitch_n0_linear_schedule():
    assert stitch_n0() == 2
    assert stitch_n0(lambda j: 2 ** (j - 1)) == 2
    # k(j) = 3j: the condition 6j <= m first holds for the rest of time at m = 24
    assert stitch_n0(lambda j: 3 * j) == 24
    # k(j) = 2^j never satisfies it inside its epoch
    assert stitch_n0(lambda j: 2**j) == 2**63


def test_stitched_constant_stream():
    st_ = stitched_init(E2, lam_of)
    c = np.array([0.25, -3.0])
    for n in range(1, 300):
        stitched_update(st_, c)
        if n >= 2:
            np.testing.assert_array_equal(stitched_estimate(st_), c)


def test_stitched_matches_batch_within_and_across_epochs():
    X = np.random.default_rng(9).standard_t(1.5, (260, 2))
    st_ = stitched_init(E2, lam_of)
    for n, x in enumerate(X, 1):
        stitched_update(st_, x)
        if n < 2:
            with pytest.raises(StateError):
                stitched_estimate(st_)
            continue
        j = n.bit_length() - 1
        ref = truncated_mean(X[:n], EstimatorConfig(lam_of(j), j), E2)
        np.testing.assert_array_equal(stitched_estimate(st_), ref)


def test_stitched_late_center_schedule():
    # k(j) = 3j exceeds the epoch start for small j; the epoch opens once n > k(j)
    sched = lambda j: 3 * j
    n0 = stitch_n0(sched)
    X = np.random.default_rng(10).standard_normal((200, 1))
    st_ = stitched_init(E1, lam_of, sched, CenterMethod.SAMPLE_MEAN)
    for n, x in enumerate(X, 1):
        stitched_update(st_, x)
        if n >= n0:
            j = n.bit_length() - 1
            ref = truncated_mean(X[:n], EstimatorConfig(lam_of(j), sched(j)), E1)
            np.testing.assert_array_equal(stitched_estimate(st_), ref)


@pytest.mark.parametrize("center", [CenterMethod.SAMPLE_MEAN, CenterMethod.GMOM])
def test_estimate_stays_in_ball_around_center(center):
    rng = np.random.default_rng(14)
    for _ in range(20):
        X = rng.standard_cauchy((100, 3))
        cfg = EstimatorConfig(float(rng.uniform(0.1, 5)), 40, center)
        est = truncated_mean(X, cfg, E3)
        Z = naive_center(X[:40], cfg, E3)
        assert np.linalg.norm(est - Z) <= (1 / cfg.lam) * (1 + 1e-12)


def test_single_block_gmom_is_permutation_invariant():
    X = np.random.default_rng(15).standard_normal((64, 2))
    perm = np.random.default_rng(16).permutation(64)
    np.testing.assert_allclose(gmom(X[perm], 1, E2), gmom(X, 1, E2), rtol=1e-15)
