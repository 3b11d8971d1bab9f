import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from collective_emission.errors import ConvergenceFailure, InvalidArgument
from collective_emission.geometry import (
    AtomGeometry, FluctuationModel, TrapParams, average_spacing, build_chain, build_lattice,
    build_ring, coulomb_chain_with_spacing, coulomb_forces, load_geometry, sample_positions,
    save_geometry, solve_coulomb_chain)


def test_single_site_lattice_sits_at_origin():
    g = build_lattice((1, 1, 1), 1.0)
    assert g.n_atoms == 1
    np.testing.assert_array_equal(g.positions, [[0.0, 0.0, 0.0]])


def test_two_site_lattice_is_centred():
    g = build_lattice((2, 1, 1), 0.5)
    np.testing.assert_allclose(g.positions, [[-0.25, 0, 0], [0.25, 0, 0]])


def test_cubic_lattice_mean_and_min_distance():
    g = build_lattice((3, 3, 3), 0.2)
    assert g.n_atoms == 27
    np.testing.assert_allclose(g.positions.mean(axis=0), 0.0, atol=1e-15)
    d = g.pair_distances()
    assert np.min(d[~np.eye(27, dtype=bool)]) == pytest.approx(0.2)


@pytest.mark.parametrize("dims,d0", [((0, 1, 1), 1.0), ((2, 2, 2), 0.0), ((2, 2, 2), -1.0),
                                     ((2, 2), 1.0)])
def test_lattice_rejects_bad_input(dims, d0):
    with pytest.raises(InvalidArgument):
        build_lattice(dims, d0)


def test_positions_must_be_distinct():
    with pytest.raises(InvalidArgument):
        AtomGeometry(np.zeros((2, 3)), (2, 1, 1))


@settings(max_examples=40, deadline=None)
@given(st.tuples(st.integers(1, 5), st.integers(1, 5), st.integers(1, 5)),
       st.floats(0.01, 3.0))
def test_lattice_is_centred_product_grid(dims, d0):
    g = build_lattice(dims, d0)
    assert g.n_atoms == np.prod(dims)
    np.testing.assert_allclose(g.positions.mean(axis=0), 0.0, atol=1e-12 * max(dims) * d0)
    for axis, n in enumerate(dims):
        levels = np.unique(np.round(g.positions[:, axis] / d0, 9))
        assert len(levels) == n
        np.testing.assert_allclose(np.diff(levels), 1.0, atol=1e-9)


def test_ring_distances_are_chords_and_circulant():
    g = build_ring(8, 0.3)
    d = g.pair_distances()
    radius = 8 * 0.3 / (2 * np.pi)
    assert d[0, 1] == pytest.approx(2 * radius * np.sin(np.pi / 8))
    for shift in range(8):
        np.testing.assert_allclose(np.roll(np.roll(d, shift, 0), shift, 1), d, atol=1e-14)


# --- Coulomb chain --------------------------------------------------------


def test_coulomb_single_ion():
    np.testing.assert_array_equal(solve_coulomb_chain(TrapParams(1)).positions[:, 0], [0.0])


def test_coulomb_two_ions_force_balance():
    u = solve_coulomb_chain(TrapParams(2)).positions[:, 0]
    np.testing.assert_allclose(u, [-(0.25 ** (1 / 3)), 0.25 ** (1 / 3)], atol=1e-10)


def test_coulomb_three_ions_force_balance():
    u = solve_coulomb_chain(TrapParams(3)).positions[:, 0]
    np.testing.assert_allclose(u, [-(1.25 ** (1 / 3)), 0.0, 1.25 ** (1 / 3)], atol=1e-10)


@pytest.mark.parametrize("n", [2, 5, 10, 17, 30, 50])
def test_coulomb_chain_invariants(n):
    u = solve_coulomb_chain(TrapParams(n)).positions[:, 0]
    assert np.all(np.diff(u) > 0)
    np.testing.assert_allclose(u, -u[::-1], atol=1e-10)
    # independent residual: gradient of the potential evaluated directly
    diff = u[:, None] - u[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        pair = np.where(np.eye(n, dtype=bool), 0.0, np.sign(diff) / diff**2)
    residual = u - pair.sum(axis=1)
    assert np.max(np.abs(residual)) <= 1e-10
    assert np.max(np.abs(coulomb_forces(u))) <= 1e-10


@pytest.mark.parametrize("n", [5, 12, 30])
def test_coulomb_gaps_smallest_at_centre(n):
    gaps = np.diff(solve_coulomb_chain(TrapParams(n)).positions[:, 0])
    centre = (len(gaps) - 1) / 2
    assert abs(np.argmin(gaps) - centre) <= 0.5
    assert np.argmax(gaps) in (0, len(gaps) - 1)


def test_coulomb_reports_failure_when_iterations_run_out():
    with pytest.raises(ConvergenceFailure) as info:
        solve_coulomb_chain(TrapParams(30, tolerance=1e-10, max_iter=1))
    assert info.value.residual > 1e-10


def test_length_scale_converts_units():
    base = solve_coulomb_chain(TrapParams(4)).positions
    scaled = solve_coulomb_chain(TrapParams(4, length_scale=2.5)).positions
    np.testing.assert_allclose(scaled, 2.5 * base, rtol=1e-12)


def test_trap_params_validation():
    with pytest.raises(InvalidArgument):
        TrapParams(0)
    with pytest.raises(InvalidArgument):
        TrapParams(3, tolerance=0.0)


# --- spacing ---------------------------------------------------------------


def test_average_spacing_examples():
    two = AtomGeometry(np.array([[-0.25, 0, 0], [0.25, 0, 0]]), (2, 1, 1))
    assert average_spacing(two) == pytest.approx(0.5)
    assert average_spacing(build_chain(10, 0.7)) == pytest.approx(0.7)
    ions = coulomb_chain_with_spacing(30, 0.4)
    assert abs(average_spacing(ions) - 0.4) < 1e-12
    with pytest.raises(InvalidArgument):
        average_spacing(build_chain(1, 1.0))


# --- sampling ----------------------------------------------------------------


def test_fixed_and_zero_width_samples_equal_reference():
    g = build_lattice((2, 2, 1), 0.3)
    for model in (FluctuationModel.fixed(), FluctuationModel.thermal(0.0)):
        s = sample_positions(g, model, seed=7, n_samples=5)
        np.testing.assert_array_equal(s, np.broadcast_to(g.positions, s.shape))


def test_box_samples_have_uniform_moments():
    g = build_chain(3, 0.5)
    box = np.array([1.0, 1.0, 1.0])
    s = sample_positions(g, FluctuationModel.uniform_box(box), seed=3, n_samples=100_000)
    flat = s.reshape(-1, 3)
    m = len(flat)
    sigma_mean = np.sqrt(1 / 12 / m)
    assert np.all(np.abs(flat.mean(axis=0)) < 4 * sigma_mean)
    # variance of the sample variance for a uniform law: (mu4 - sigma^4) / m
    sigma_var = np.sqrt((1 / 80 - 1 / 144) / m)
    assert np.all(np.abs(flat.var(axis=0) - 1 / 12) < 3 * sigma_var)


def test_thermal_sample_spread_matches_xi():
    g = build_chain(4, 1.0)
    xi = np.array([0.1, 0.2, 0.05])
    s = sample_positions(g, FluctuationModel.thermal(xi), seed=11, n_samples=50_000)
    np.testing.assert_allclose((s - g.positions).reshape(-1, 3).std(axis=0), xi, rtol=0.01)


def test_sampling_is_reproducible_and_prefix_stable():
    g = build_chain(5, 0.3)
    model = FluctuationModel.thermal(0.05)
    a = sample_positions(g, model, seed=42, n_samples=3000)
    b = sample_positions(g, model, seed=42, n_samples=3000)
    np.testing.assert_array_equal(a, b)
    # a shorter request is a prefix of the longer stream
    np.testing.assert_array_equal(sample_positions(g, model, seed=42, n_samples=1500), a[:1500])
    c = sample_positions(g, model, seed=43, n_samples=3000)
    assert not np.array_equal(a, c)


def test_fluctuation_model_validation():
    with pytest.raises(InvalidArgument):
        FluctuationModel.thermal((-0.1, 0, 0))
    with pytest.raises(InvalidArgument):
        FluctuationModel.uniform_box((1.0, 0.0, 1.0))
    with pytest.raises(InvalidArgument):
        FluctuationModel("gaussian")


def test_geometry_text_round_trip(tmp_path):
    g = build_lattice((2, 3, 1), 0.37)
    path = tmp_path / "geom.txt"
    save_geometry(g, path)
    back = load_geometry(path)
    np.testing.assert_array_equal(back.positions, g.positions)
    assert back.dims == g.dims
    assert back.spacing == g.spacing
