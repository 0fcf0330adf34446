import numpy as np
import pytest
from hypothesis import given

from dbar_bie.catalog import manufactured_field
from dbar_bie.forms import Form01, Z1, ZB2, R2, change_basis, trace_gamma, conormal_values
from dbar_bie.geometry import DomainError, make_boundary_grid, random_ball_points, random_sphere_points
from dbar_bie.potentials import (box_kernel, g0_kernel, sl_kernel, dl_kernel, bsl_kernel,
                                 newton_potential, newton_boundary_traces, single_layer,
                                 double_layer, green_reconstruct, near_boundary_layer,
                                 SingularEvaluation, VolumeData, dump_potential_csv)
from dbar_bie.quadrature import VolumeRule, PolarRule
from strategies import distinct_pairs


@given(distinct_pairs())
def test_kernel_symmetries(zw):
    z, w = zw
    assert box_kernel(z, w) == pytest.approx(box_kernel(w, z))
    assert g0_kernel(z, w) == pytest.approx(-box_kernel(z, w))
    S = sl_kernel(z, w)
    assert np.allclose(S, sl_kernel(w, z).conj().T, atol=1e-12)
    assert np.allclose(bsl_kernel(z, w), dl_kernel(w, z).conj().T, atol=1e-10)


def test_kernel_singular_point():
    z = np.array([1.0, 0.0], complex)
    with pytest.raises(SingularEvaluation):
        box_kernel(z, z)


def test_newton_potential_of_constant_at_origin():
    v = newton_potential(Form01(1, 0), np.zeros((1, 2), complex))
    assert v[0] == pytest.approx([-0.25, 0], abs=1e-13)


def test_newton_potential_radial_closed_form(rng):
    """N 1 = (|z|^2 - 2) / 8 solves Delta = 1 with the Green-representation
    boundary values."""
    z = random_ball_points(6, rng, 0.9)
    v = newton_potential(Form01(0, 1), z)
    r2 = np.sum(np.abs(z) ** 2, axis=1)
    assert np.allclose(v[:, 1], (r2 - 2) / 8, atol=1e-12)


def test_laplacian_of_newton_potential(rng):
    f = Form01(Z1 * ZB2 + 1, R2)
    z = random_ball_points(3, rng, 0.5)
    h = 1e-2
    fn = lambda p: newton_potential(f, p, VolumeRule(16, 16, 10))
    acc = -8 * fn(z)
    for d in ([1, 0], [1j, 0], [0, 1], [0, 1j]):
        acc += fn(z + h * np.array(d)) + fn(z - h * np.array(d))
    assert np.allclose(acc / h ** 2, f(z), atol=1e-3)


def test_newton_targets_must_be_inside():
    with pytest.raises(DomainError):
        newton_potential(Form01(1, 0), np.array([[1.0, 0.0]], complex))


def test_newton_traces_direct_vs_extrapolated(rng):
    f = manufactured_field("poly:mixed").f
    p = random_sphere_points(4, rng)
    g1, b1, _ = newton_boundary_traces(f, p)
    g2, b2, _ = newton_boundary_traces(f, p, method="extrapolate", h=0.005)
    assert np.allclose(g1, g2, atol=1e-3) and np.allclose(b1, b2, atol=5e-2)


def test_newton_gradient_matches_finite_differences(rng):
    f = Form01(R2 * Z1, ZB2)
    z = random_ball_points(2, rng, 0.6)
    _, gz, gzb = newton_potential(f, z, gradient=True)
    h = 1e-5
    e = np.array([1, 0])
    dx = (newton_potential(f, z + h * e) - newton_potential(f, z - h * e)) / (2 * h)
    dy = (newton_potential(f, z + 1j * h * e) - newton_potential(f, z - 1j * h * e)) / (2 * h)
    assert np.allclose(gz[:, :, 0], 0.5 * (dx - 1j * dy), atol=1e-8)
    assert np.allclose(gzb[:, :, 0], 0.5 * (dx + 1j * dy), atol=1e-8)


def test_layer_potentials_reject_boundary_targets():
    g = make_boundary_grid(4)
    psi = trace_gamma(Form01(1, 0), g)
    with pytest.raises(DomainError):
        single_layer(psi, g.nodes[:1])
    with pytest.raises(DomainError):
        double_layer(psi, g.nodes[:1])


def test_green_reconstruction(rng):
    m = manufactured_field("poly:mixed")
    g = make_boundary_grid(10)
    z = random_ball_points(8, rng, 0.7)
    rec = green_reconstruct(VolumeData(m.f), trace_gamma(m.u, g), conormal_values(m.u, g), z,
                            basis="standard")
    ex = m.u(z)
    assert np.abs(rec - ex).max() / np.abs(ex).max() < 1e-3


def test_harmonic_reconstruction_without_volume_term(rng):
    m = manufactured_field("harm:mixed")
    g = make_boundary_grid(12)
    z = random_ball_points(8, rng, 0.6)
    rec = green_reconstruct(None, trace_gamma(m.u, g), conormal_values(m.u, g), z, basis="standard")
    assert np.abs(rec - m.u(z)).max() < 1e-4


def test_near_boundary_layer_first_order(rng):
    u = manufactured_field("poly:mixed").u
    dens = lambda w: change_basis(u, "frame")(w)
    z0 = random_sphere_points(1, rng)[0]
    a = near_boundary_layer("SL", dens, z0, 0.04, PolarRule(16, 10))
    b = near_boundary_layer("SL", dens, z0, 0.02, PolarRule(16, 10))
    c = near_boundary_layer("SL", dens, z0, 0.01, PolarRule(16, 10))
    r = np.abs(a - b).max() / np.abs(b - c).max()
    assert 1.7 < r < 2.3


def test_dump_csv(tmp_path):
    z = np.array([[0.1, 0.2j], [0.3, 0]])
    dump_potential_csv(tmp_path / "p.csv", z, np.ones((2, 2), complex))
    assert len((tmp_path / "p.csv").read_text().splitlines()) == 3
