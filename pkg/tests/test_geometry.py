import numpy as np
import pytest
from hypothesis import given

from dbar_bie.geometry import (DomainError, ConfigurationError, distance_gradient,
                               fd_distance_gradient, real_gradient_norm, signed_distance,
                               frame_at, frame_matrix, hermitian, connection_coeff,
                               bracket_LN, fd_bracket_LN, pairing, make_boundary_grid,
                               grid_sizes, make_interior_grid, lobatto,
                               SURFACE_AREA, BALL_VOLUME)
from strategies import ball_points, distinct_pairs


@given(ball_points(0.05, 1.5))
def test_gradient_has_unit_length(z):
    assert abs(real_gradient_norm(z) - 1) < 1e-12


def test_gradient_undefined_at_origin():
    with pytest.raises(DomainError):
        distance_gradient(np.zeros(2, complex))


@given(ball_points(0.2, 1.2))
def test_gradient_matches_finite_differences(z):
    dz, dzb = distance_gradient(z)
    fz, fzb = fd_distance_gradient(lambda p: np.linalg.norm(p, axis=-1) - 1, z)
    assert np.allclose(dz, fz, atol=1e-8) and np.allclose(dzb, fzb, atol=1e-8)


def test_distance_gradient_example():
    dz, dzb = distance_gradient(np.array([1.0, 0.0], complex))
    assert np.allclose(dz, [0.5, 0]) and np.allclose(dzb, [0.5, 0])
    assert signed_distance(np.array([0.5, 0], complex)) == pytest.approx(-0.5)


@given(ball_points(0.05, 1.5))
def test_frame_orthonormality(z):
    F = frame_at(z)
    assert abs(hermitian(F.L, F.L) - 0.5) < 1e-13
    assert abs(hermitian(F.N, F.N) - 0.5) < 1e-13
    assert abs(hermitian(F.L, F.N)) < 1e-13


@given(ball_points(0.05, 1.5))
def test_frame_matrix_is_unitary(z):
    M = frame_matrix(z)
    assert np.allclose(M @ M.conj().T, np.eye(2), atol=1e-13)


def test_frame_on_sphere_example():
    F = frame_at(np.array([1.0, 0.0], complex))
    assert np.allclose(F.L, [0, -1]) and np.allclose(F.N, [1, 0])


@given(ball_points(0.3, 1.0))
def test_connection_and_bracket(z):
    r = np.linalg.norm(z)
    assert abs(connection_coeff(z) - 0.75 / r) < 1e-13
    F = frame_at(z)
    assert abs(hermitian(bracket_LN(z), F.L) - 0.75 / r) < 1e-12
    assert abs(hermitian(bracket_LN(z), F.N)) < 1e-13
    assert np.allclose(fd_bracket_LN(z), bracket_LN(z), atol=1e-6)


@given(distinct_pairs())
def test_pairings_resolve_the_difference_vector(zw):
    z, w = zw
    d2 = np.sum(np.abs(z - w) ** 2)
    s = abs(pairing("Nz.(z-w)", z, w)) ** 2 + abs(pairing("Lz.(z-w)", z, w)) ** 2
    assert abs(s - d2) < 1e-12
    assert abs(d2 - (2 - 2 * np.real(z[0] * np.conj(w[0]) + z[1] * np.conj(w[1])))) < 1e-12


def test_unknown_pairing():
    with pytest.raises(ValueError):
        pairing("Qz.(z-w)", np.array([1, 0j]), np.array([0, 1 + 0j]))


@pytest.mark.parametrize("P", [4, 6, 8, 10])
def test_grid_sizes_and_area(P):
    g = make_boundary_grid(P)
    n_u, n_xi = grid_sizes(P)
    assert g.size == (n_u - 2) * n_xi ** 2 + 2 * n_xi
    assert g.weights.sum() == pytest.approx(SURFACE_AREA, rel=1e-13)
    assert np.allclose(np.linalg.norm(g.nodes, axis=1), 1)
    assert g.symmetric
    g.index_of([1, 0])


def test_grid_node_counts_are_documented():
    assert [make_boundary_grid(P).size for P in (4, 6, 8, 10)] == [220, 616, 1332, 2464]


@pytest.mark.parametrize("P", [4, 6, 8])
def test_grid_integrates_polynomials_exactly(P):
    """|z1|^(2a) |z2|^(2b) has mean a! b! / (a+b+1)! (4 pi^2 normalisation 2 pi^2)."""
    from math import factorial
    g = make_boundary_grid(P)
    for a in range(P // 2 + 1):
        b = P // 2 - a
        v = g.integrate(np.abs(g.nodes[:, 0]) ** (2 * a) * np.abs(g.nodes[:, 1]) ** (2 * b))
        ref = 2 * np.pi ** 2 * factorial(a) * factorial(b) / factorial(a + b + 1)
        assert v == pytest.approx(ref, rel=1e-12)


def test_grid_is_deterministic():
    a, b = make_boundary_grid(6), make_boundary_grid(6)
    assert np.array_equal(a.nodes, b.nodes) and np.array_equal(a.weights, b.weights)


def test_bad_grid_configuration():
    with pytest.raises(ConfigurationError):
        make_boundary_grid(n_u=1, n_xi=4)
    with pytest.raises(ConfigurationError):
        make_interior_grid(0)


def test_interior_grid_volume():
    G = make_interior_grid(6, 6)
    assert G.weights.sum() == pytest.approx(BALL_VOLUME, rel=1e-13)
    assert G.integrate(np.sum(np.abs(G.nodes) ** 2, axis=1)) == pytest.approx(BALL_VOLUME * 2 / 3, rel=1e-13)


def test_lobatto_nodes():
    x, w = lobatto(5)
    assert x[0] == 0 and x[-1] == 1 and w.sum() == pytest.approx(1)
    assert np.dot(w, x ** 7) == pytest.approx(1 / 8)


def test_grid_csv(tmp_path):
    g = make_boundary_grid(4)
    p = tmp_path / "g.csv"
    g.to_csv(p)
    assert len(p.read_text().splitlines()) == g.size + 1
