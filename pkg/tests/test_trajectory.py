import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import exhaustive_min_cost
from wivelo.geometry import STATIONARY, DegenerateMesh, Point2, Trend, build_mesh, path_length
from wivelo.trajectory import (
    EmdMatrix,
    EmptyMatrix,
    advance,
    clamp_to_area,
    clamp_to_side,
    ellipse_velocity,
    exhaustive_arrivals,
    nearest_buildable,
    recover,
    refine_arrivals,
    sequence_cost,
)

PERIOD = 128.0


@st.composite
def matrices(draw, k_max=5, c_max=8):
    K = draw(st.integers(1, k_max))
    C = draw(st.integers(1, c_max))
    vals = draw(st.lists(st.integers(0, 64), min_size=K * C, max_size=K * C))
    grid = np.sort(draw(st.lists(st.integers(1, 128), min_size=C, max_size=C, unique=True)))
    # Dyadic entries keep every sum exact.
    return EmdMatrix(np.array(vals, float).reshape(K, C) / 16, np.array(grid, float))


@settings(max_examples=150)
@given(matrices(), st.sampled_from([0.0, 0.5, 1.0, 2.0]))
def test_dp_equals_exhaustive_minimum(m, w):
    choice = refine_arrivals(m, w, PERIOD)
    assert sequence_cost(m.values, m.grid, choice, w, PERIOD) == exhaustive_min_cost(m.values, m.grid, w, PERIOD)


def test_package_exhaustive_helper_agrees():
    rng = np.random.default_rng(0)
    m = EmdMatrix(rng.integers(0, 9, (3, 4)) / 8, np.array([8.0, 16.0, 32.0, 64.0]))
    seq, cost = exhaustive_arrivals(m, 1.0, PERIOD)
    assert cost == exhaustive_min_cost(m.values, m.grid, 1.0, PERIOD)
    assert sequence_cost(m.values, m.grid, seq, 1.0, PERIOD) == cost


@settings(max_examples=80)
@given(matrices(), st.floats(0, 4), st.floats(0, 4))
def test_dp_cost_monotone_in_weight(m, w1, w2):
    lo, hi = sorted((w1, w2))
    c_lo = sequence_cost(m.values, m.grid, refine_arrivals(m, lo, PERIOD), lo, PERIOD)
    c_hi = sequence_cost(m.values, m.grid, refine_arrivals(m, hi, PERIOD), hi, PERIOD)
    assert c_lo <= c_hi + 1e-12


@settings(max_examples=80)
@given(matrices(), st.sampled_from([0.0, 0.5, 1.0, 2.0]), st.sampled_from([0.25, 2.0, 8.0]))
def test_dp_argmin_invariant_under_joint_scaling(m, w, c):
    scaled = EmdMatrix(c * m.values, m.grid)
    np.testing.assert_array_equal(refine_arrivals(scaled, c * w, PERIOD), refine_arrivals(m, w, PERIOD))


def test_dp_zero_weight_is_rowwise_argmin():
    rng = np.random.default_rng(1)
    m = EmdMatrix(rng.uniform(0, 1, (6, 10)), np.arange(1, 11.0))
    np.testing.assert_array_equal(refine_arrivals(m, 0.0), np.argmin(m.values, axis=1))


def test_dp_penalty_smooths_an_outlier():
    v = np.array([[0, 1, 1], [1, 1, 0.9], [0, 1, 1]], float)
    m = EmdMatrix(v, np.array([10.0, 60.0, 120.0]))
    assert refine_arrivals(m, 0.0, PERIOD).tolist() == [0, 2, 0]
    assert refine_arrivals(m, 1.0, PERIOD).tolist() == [0, 0, 0]


def test_matrix_validation():
    with pytest.raises(EmptyMatrix):
        EmdMatrix(np.zeros((0, 3)), np.arange(3.0))
    with pytest.raises(ValueError):
        EmdMatrix(-np.ones((2, 3)), np.arange(3.0))
    with pytest.raises(ValueError):
        EmdMatrix(np.ones((2, 3)), np.arange(4.0))
    with pytest.raises(ValueError):
        refine_arrivals(EmdMatrix(np.ones((2, 3)), np.arange(3.0)), -1.0)


def test_normalized_rows_have_unit_mean():
    m = EmdMatrix(np.array([[1.0, 3.0], [0.0, 0.0]]), np.array([1.0, 2.0])).normalized()
    np.testing.assert_allclose(m.values, [[0.5, 1.5], [0.0, 0.0]])


def test_recover_full_period_steps_land_on_landmarks(layout):
    trends = [(1, 1), (1, 0), (0, -1), (-1, -1), (0, 0)]
    T = 0.128
    traj = recover(trends, (0.3, 1.6), layout, T, intervals=[T] * len(trends), model="landmark")
    assert len(traj) == len(trends) + 1
    spacing = 0.0
    for k, t in enumerate(trends):
        cur = Point2(*traj.points[k])
        mesh = build_mesh(layout, cur)
        want = cur if t == (0, 0) else mesh.landmark(*t)
        np.testing.assert_allclose(traj.points[k + 1], want, atol=1e-12)
        spacing += math.dist(cur, want)
    assert math.dist(traj.points[0], traj.points[-1]) <= spacing + 1e-12
    assert np.all(np.diff(traj.times) > 0)
    assert traj.speeds[-1] == 0.0


def test_ellipse_velocity_satisfies_rate_equations(layout):
    p = Point2(0.4, 1.8)
    mesh = build_mesh(layout, p)
    trends, dts = (Trend.OUTWARD, Trend.INWARD), (0.09, 0.11)
    v = np.array(ellipse_velocity(layout, mesh, p, trends, dts))
    for r, (t, dt) in enumerate(zip(trends, dts)):
        focus = layout.antennas[mesh.aux_antenna[r][int(t) + 1]]
        h = 1e-7
        rate = (path_length(p + tuple(h * v), layout.tx, focus) - path_length(p, layout.tx, focus)) / h
        assert rate == pytest.approx(mesh.enclosure[r][int(t) + 1] / dt, rel=1e-5)


def test_ellipse_velocity_on_receiver_keeps_its_reference_length(layout):
    p = Point2(-0.5, 2.2)
    mesh = build_mesh(layout, p)
    v = np.array(ellipse_velocity(layout, mesh, p, (Trend.OUTWARD, Trend.ON), (0.1, 0.128)))
    ref = layout.antennas[layout.reference_index(1)]
    h = 1e-7
    assert abs(path_length(p + tuple(h * v), layout.tx, ref) - path_length(p, layout.tx, ref)) / h < 1e-6


def test_advance_caps_speed_and_handles_stationary(layout):
    vel, lm, _ = advance(layout, (0.3, 1.6), (0, 0), 0.1, 0.128)
    assert lm is STATIONARY and vel == (0.0, 0.0)
    vel, _, _ = advance(layout, (0.3, 1.6), (1, 1), 0.001, 0.128, max_speed=2.0)
    assert math.hypot(*vel) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        advance(layout, (0.3, 1.6), (1, 1), 0.1, 0.128, model="teleport")


def test_clamps(layout):
    assert clamp_to_area(Point2(5, -1), (-1, 0, 1, 2)) == Point2(1, 0)
    assert clamp_to_area(Point2(5, -1)) == Point2(5, -1)
    q = clamp_to_side(Point2(0.0, -2.0), layout)
    assert layout.monitor_half_plane.signed_distance(q) == pytest.approx(0.15)


def test_nearest_buildable_moves_off_the_blind_band(layout):
    p = Point2(0.9, 0.12)
    with pytest.raises(DegenerateMesh):
        build_mesh(layout, p)
    q = nearest_buildable(p, layout)
    build_mesh(layout, q)
    assert q.x == pytest.approx(p.x) and q.y > p.y


def test_recover_policies(layout):
    with pytest.raises(ValueError):
        recover([(1, 1)], (0.3, 1.6), layout, 0.128, [0.1], on_degenerate="ignore")
    with pytest.raises(DegenerateMesh, match="step 0"):
        recover([(1, 1)], (0.9, 0.12), layout, 0.128, [0.1], on_degenerate="raise")
