import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import transport_emd
from wivelo.speed import (
    EmptyCandidates,
    LengthMismatch,
    NonpositiveInterval,
    emd,
    emd_rows,
    search_arrival,
    speed_from,
)

ints = st.integers(-16, 16)


def vectors(n_max=6):
    return st.integers(1, n_max).flatmap(
        lambda n: st.tuples(*(st.lists(ints, min_size=n, max_size=n) for _ in range(3))))


@settings(max_examples=150)
@given(vectors())
def test_emd_equals_exhaustive_transport(vs):
    u, v, _ = vs
    assert emd(u, v) == transport_emd(u, v)


@settings(max_examples=20)
@given(vectors(8))
def test_emd_metric_against_oracle_n8(vs):
    u, v, w = vs
    assert emd(u, v) == transport_emd(u, v)
    assert emd(u, w) <= emd(u, v) + emd(v, w) + 1e-12


@settings(max_examples=200)
@given(vectors(8))
def test_emd_metric_axioms(vs):
    u, v, w = vs
    assert emd(u, v) == emd(v, u) >= 0
    assert (emd(u, v) == 0) == (sorted(u) == sorted(v))
    assert emd(u, w) <= emd(u, v) + emd(v, w) + 1e-12


@settings(max_examples=100)
@given(vectors(8), st.randoms(use_true_random=False), st.integers(-50, 50))
def test_emd_permutation_and_shift_invariance(vs, rnd, c):
    u, v, _ = vs
    perm = list(range(len(u)))
    rnd.shuffle(perm)
    assert emd([u[i] for i in perm], [v[i] for i in perm]) == emd(u, v)
    assert emd(np.add(u, c), np.add(v, c)) == emd(u, v)


def test_emd_rejects_unequal_sizes():
    with pytest.raises(LengthMismatch):
        emd([1, 2], [1])
    with pytest.raises(LengthMismatch):
        emd([], [])
    with pytest.raises(LengthMismatch):
        emd_rows([1, 2], np.zeros((3, 3)))


def test_search_concatenates_both_receivers():
    ref = (np.array([1, 2]), np.array([3, 4]))
    streams = (np.array([[0, 0], [1, 2], [1, 2]]), np.array([[0, 0], [3, 4], [3, 4]]))
    s = search_arrival(ref, streams, [0.01, 0.02, 0.03])
    np.testing.assert_allclose(s.emd_curve, [2.5, 0.0, 0.0])
    assert s.chosen == 1  # first minimum on ties
    assert s.arrival == 0.02


@settings(max_examples=60)
@given(st.lists(ints, min_size=4, max_size=4), st.lists(st.lists(ints, min_size=4, max_size=4), min_size=1, max_size=12),
       st.integers(1, 64))
def test_search_choice_invariant_under_scaling(ref, rows, scale):
    cand = np.arange(1, len(rows) + 1) / 1000
    a = search_arrival([np.array(ref)], [np.array(rows)], cand)
    b = search_arrival([scale * np.array(ref)], [scale * np.array(rows)], cand)
    assert len(a.emd_curve) == len(cand)
    assert a.chosen == b.chosen == int(np.argmin(a.emd_curve))


def test_search_validation():
    with pytest.raises(EmptyCandidates):
        search_arrival([np.zeros(2)], [np.zeros((0, 2))], [])
    with pytest.raises(LengthMismatch):
        search_arrival([np.zeros(2)], [np.zeros((3, 2))], [1, 2])


def test_low_confidence_flat_curve():
    s = search_arrival([np.zeros(3)], [np.zeros((4, 3))], [1, 2, 3, 4])
    assert s.low_confidence


def test_speed_from():
    assert speed_from((0, 0), (0.3, 0.4), 1.0, 1.5) == pytest.approx(1.0)
    with pytest.raises(NonpositiveInterval):
        speed_from((0, 0), (1, 0), 1.0, 1.0)
