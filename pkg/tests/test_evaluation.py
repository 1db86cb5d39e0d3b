import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_force_dtw
from wivelo.evaluation import (
    EmptyInput,
    EvalError,
    LengthMismatch,
    dtw_error,
    percentile,
    resample,
    summarize,
    trajectory_error,
)

coords = st.floats(-5, 5, allow_nan=False)


def sequences(n_min=2, n_max=12):
    return st.integers(n_min, n_max).flatmap(
        lambda n: st.tuples(*(st.lists(st.tuples(coords, coords), min_size=n, max_size=n) for _ in range(2))))


def _distinct_steps(a):
    a = np.asarray(a)
    return np.all(np.hypot(*np.diff(a, axis=0).T) > 1e-6)


@settings(max_examples=100)
@given(sequences())
def test_dtw_symmetric_nonnegative(ab):
    a, b = ab
    d = dtw_error(a, b)
    assert d >= 0
    assert d == pytest.approx(dtw_error(b, a), abs=1e-12)
    assert dtw_error(a, a) == 0.0


@settings(max_examples=100)
@given(sequences())
def test_dtw_zero_only_for_identical(ab):
    a, b = ab
    if _distinct_steps(a) and _distinct_steps(b) and not np.array_equal(a, b):
        assert dtw_error(a, b) > 0


@settings(max_examples=60)
@given(sequences(), st.floats(0, 2 * math.pi), coords, coords)
def test_dtw_rigid_motion_invariance(ab, theta, dx, dy):
    a, b = (np.asarray(x) for x in ab)
    R = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    assert dtw_error(a @ R.T + (dx, dy), b @ R.T + (dx, dy)) == pytest.approx(dtw_error(a, b), abs=1e-9)


@settings(max_examples=60)
@given(sequences(2, 9), st.integers(9, 40))
def test_wide_band_equals_unconstrained(ab, w):
    a, b = ab
    assert dtw_error(a, b, window=w) == dtw_error(a, b, window=len(a))


def test_band_dtw_matches_brute_force_on_small_grids():
    rng = np.random.default_rng(3)
    pairs = [(rng.uniform(0, 3, (7, 2)), rng.uniform(0, 3, (7, 2))) for _ in range(20)]
    for w in (1, 2, 6):
        want = brute_force_dtw(pairs, 7, window=w)
        got = [dtw_error(a, b, window=w) for a, b in pairs]
        np.testing.assert_allclose(got, want, rtol=1e-12)


def test_translation_gives_offset_exactly():
    a = np.column_stack([np.arange(10.0), np.zeros(10)])
    assert dtw_error(a, a + (0.0, 0.375)) == 0.375


def test_dtw_validation():
    with pytest.raises(LengthMismatch):
        dtw_error(np.zeros((3, 2)), np.zeros((4, 2)))
    with pytest.raises(EmptyInput):
        dtw_error(np.zeros((0, 2)), np.zeros((0, 2)))
    with pytest.raises(EvalError):
        dtw_error(np.zeros((3, 2)), np.zeros((3, 2)), window=0)


def test_resample_is_uniform_in_arc_length():
    r = resample([(0, 0), (1, 0), (1, 3)], 9)
    steps = np.hypot(*np.diff(r, axis=0).T)
    np.testing.assert_allclose(steps, 0.5)
    np.testing.assert_array_equal(resample([(2, 1)], 4), [[2, 1]] * 4)


def test_trajectory_error_ignores_vertex_density():
    coarse = [(0, 0), (2, 0)]
    fine = [(0, 0), (0.5, 0), (1.3, 0), (2, 0)]
    assert trajectory_error(coarse, fine) == pytest.approx(0.0, abs=1e-12)


def test_percentile_linear_interpolation():
    assert percentile([0, 10], 90) == 9.0
    assert percentile([3, 1, 2], 50) == 2.0


@settings(max_examples=50)
@given(st.lists(st.floats(0, 10), min_size=1, max_size=40))
def test_summary_cdf_monotone(errors):
    rep = summarize(errors)
    assert np.all(np.diff(rep.cdf[:, 0]) >= 0)
    assert np.all(np.diff(rep.cdf[:, 1]) > 0)
    assert rep.median == percentile(errors, 50)


def test_summary_groups_and_table():
    rep = summarize([0.1, 0.2, 0.4, 0.8], {"scene": ["a", "a", "b", "b"]})
    assert rep.groups["scene=a"]["count"] == 2
    assert rep.groups["scene=b"]["median"] == pytest.approx(0.6)
    lines = rep.table().splitlines()
    assert lines[0].split("\t") == ["group", "count", "median_m", "p90_m"]
    assert len(lines) == 4
    with pytest.raises(EvalError):
        summarize([-1.0])
    with pytest.raises(EvalError):
        summarize([1.0, 2.0], {"scene": ["a"]})
