import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from collective_emission.errors import InvalidArgument, ResourceLimit
from collective_emission.geometry import build_chain, build_ring
from collective_emission.states import (
    CollectiveSpec, DenseState, Term, bond_dimension_bound, build_collective_state, fidelity,
    gate_qubits, mps_from_dense, schmidt_rank, schmidt_report, spin_wave_pair_spec, vacuum)

TWO_PI = 2 * np.pi


def single(n_a, n_b=0, k_a=(0, 0, 0), k_b=(0, 0, 0)):
    return CollectiveSpec((Term(1.0, n_a, n_b, tuple(k_a), tuple(k_b)),))


def test_two_site_w_state():
    s = build_collective_state(single(1), build_chain(2, 0.3))
    t = s.tensor()
    assert t[1, 0] == pytest.approx(1 / np.sqrt(2))
    assert t[0, 1] == pytest.approx(1 / np.sqrt(2))
    assert np.sum(np.abs(s.amplitudes) ** 2) == pytest.approx(1.0)


def test_finite_size_raw_norm():
    s = build_collective_state(single(2), build_chain(4, 0.3))
    assert s.raw_norm**2 == pytest.approx(3 / 4, abs=1e-14)


def test_distinct_ring_momenta_are_orthogonal():
    n, d0 = 6, 0.3
    geom = build_ring(n, d0)
    states = [build_collective_state(single(1, k_a=(TWO_PI * m / (n * d0), 0, 0)), geom)
              for m in range(n)]
    for i in range(n):
        for j in range(n):
            expected = 1.0 if i == j else 0.0
            assert fidelity(states[i], states[j]) == pytest.approx(expected, abs=1e-14)


def test_spec_validation():
    with pytest.raises(InvalidArgument):
        CollectiveSpec((Term(0.5, 1, 0),))
    with pytest.raises(InvalidArgument):
        CollectiveSpec(())
    with pytest.raises(InvalidArgument):
        build_collective_state(single(3, 2), build_chain(4, 0.3))
    with pytest.raises(ResourceLimit):
        build_collective_state(single(1), build_chain(13, 0.3))


def test_hard_core_constraint():
    s = build_collective_state(single(1, 1), build_chain(3, 0.3)).tensor()
    for i in range(3):
        assert s[(i,) * 3] == 0
    # no site ever holds both species: every nonzero configuration has one a and one b
    for idx in zip(*np.nonzero(np.abs(s) > 1e-14)):
        assert sorted(idx) == [0, 1, 2]


# --- Schmidt structure -----------------------------------------------------------


def test_product_state_rank_one():
    s = DenseState(5, vacuum(5).ravel())
    assert [schmidt_rank(s, c) for c in range(1, 5)] == [1, 1, 1, 1]


def test_w_state_rank_two():
    s = build_collective_state(single(1, k_a=(0.7, 0, 0)), build_chain(7, 0.3))
    assert [schmidt_rank(s, c) for c in range(1, 7)] == [2] * 6


def test_cut_range_checked():
    s = build_collective_state(single(1), build_chain(4, 0.3))
    with pytest.raises(InvalidArgument):
        schmidt_rank(s, 0)
    with pytest.raises(InvalidArgument):
        schmidt_rank(s, 4)


@pytest.mark.parametrize("n", [6, 8, 9])
def test_single_term_rank_counts_excitations_left_of_cut(n):
    # the left block can hold j excitations with max(0, n_a-(n-l)) <= j <= min(n_a, l)
    geom = build_chain(n, 0.3)
    for n_a in range(1, n):
        s = build_collective_state(single(n_a, k_a=(1.3, 0, 0)), geom)
        for cut in range(1, n):
            expected = min(n_a, n - n_a, cut, n - cut) + 1
            assert schmidt_rank(s, cut) == expected, (n_a, cut)
            if n_a <= n // 2:
                assert expected == min(n_a, cut, n - cut) + 1


def test_spin_wave_pair_has_rank_at_most_eight():
    geom = build_chain(8, 0.25)
    s = build_collective_state(spin_wave_pair_spec((TWO_PI * 0.9, 0, 0), (-TWO_PI * 0.7, 0, 0)),
                               geom)
    rep = schmidt_report(s, bound=bond_dimension_bound(2, 1, 1))
    assert rep.bound == 8
    assert 1 <= rep.max_rank <= 8
    assert rep.max_rank == max(r for _, r in rep.cut_ranks)
    d = rep.to_dict()
    assert set(d) == {"cuts", "max_rank", "bound"}
    assert d["cuts"][0] == {"position": 1, "rank": rep.cut_ranks[0][1]}


def test_bond_dimension_bound_examples():
    assert bond_dimension_bound(1, 1, 0) == 2
    assert bond_dimension_bound(2, 1, 1) == 8
    with pytest.raises(InvalidArgument):
        bond_dimension_bound(0, 1, 1)


def test_gate_width():
    assert gate_qubits(8) == 4
    assert gate_qubits(2) == 2
    assert gate_qubits(7) == 3


@st.composite
def random_specs(draw):
    n = draw(st.integers(3, 7))
    m = draw(st.integers(1, 3))
    n_a = draw(st.integers(0, 2))
    n_b = draw(st.integers(0, 2))
    if n_a + n_b == 0:
        n_a = 1
    n_b = min(n_b, n - n_a)
    mom = st.tuples(st.floats(-7, 7), st.floats(-7, 7), st.floats(-7, 7))
    amps = np.array([complex(draw(st.floats(0.1, 1)), draw(st.floats(-1, 1))) for _ in range(m)])
    amps /= np.linalg.norm(amps)
    terms = tuple(Term(complex(a), n_a, n_b, draw(mom), draw(mom)) for a in amps)
    return n, CollectiveSpec(terms)


@settings(max_examples=50, deadline=None)
@given(random_specs())
def test_measured_rank_never_exceeds_bound(case):
    n, spec = case
    geom = build_chain(n, 0.31)
    try:
        s = build_collective_state(spec, geom)
    except InvalidArgument:
        return  # terms cancelled exactly
    t = spec.terms[0]
    rep = schmidt_report(s)
    assert rep.max_rank <= bond_dimension_bound(spec.M, t.n_a, t.n_b)
    assert all(r >= 1 for _, r in rep.cut_ranks)


# --- MPS ---------------------------------------------------------------------------


def test_mps_round_trip_and_bonds():
    geom = build_chain(8, 0.25)
    s = build_collective_state(spin_wave_pair_spec((TWO_PI * 0.9, 0, 0), (-TWO_PI * 0.7, 0, 0)),
                               geom)
    mps = mps_from_dense(s)
    assert np.linalg.norm(mps.to_dense() - s.amplitudes) < 1e-10
    assert mps.bond_dims == [schmidt_rank(s, c) for c in range(1, 8)]
    assert mps.max_bond <= 8


@settings(max_examples=25, deadline=None)
@given(random_specs())
def test_mps_round_trip_property(case):
    n, spec = case
    try:
        s = build_collective_state(spec, build_chain(n, 0.29))
    except InvalidArgument:
        return
    mps = mps_from_dense(s)
    assert np.linalg.norm(mps.to_dense() - s.amplitudes) < 1e-10


# --- fidelity and phases -------------------------------------------------------------


def test_fidelity_examples():
    s = build_collective_state(single(1, k_a=(1.0, 0, 0)), build_chain(4, 0.3))
    assert fidelity(s, s) == pytest.approx(1.0)
    a = DenseState(2, np.array([1, 0, 0, 0, 0, 0, 0, 0, 0], complex))
    b = DenseState(2, np.array([0, 1, 0, 0, 0, 0, 0, 0, 0], complex))
    assert fidelity(a, b) == 0.0
    phased = DenseState(4, np.exp(1.234j) * s.amplitudes)
    assert fidelity(s, phased) == pytest.approx(1.0)
    with pytest.raises(InvalidArgument):
        fidelity(a, s)


@settings(max_examples=20, deadline=None)
@given(shift=st.tuples(*[st.floats(-5, 5)] * 3))
def test_translation_is_a_global_phase(shift):
    geom = build_chain(5, 0.3)
    spec = spin_wave_pair_spec((2.0, 0.5, 0), (-1.0, 0, 0.3), 0.4)
    a = build_collective_state(spec, geom)
    b = build_collective_state(spec, geom.translated(shift))
    assert fidelity(a, b) == pytest.approx(1.0, abs=1e-12)
