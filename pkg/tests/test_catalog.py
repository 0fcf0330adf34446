import numpy as np
import pytest

from dbar_bie.catalog import (manufactured_field, kmh_forms, CATALOG, UnknownField,
                              constant_velocity_field)
from dbar_bie.forms import ZB1, change_basis, laplacian, trace_gamma, conormal_values
from dbar_bie.geometry import make_boundary_grid, random_ball_points, make_interior_grid


def test_zero_field():
    m = manufactured_field("zero")
    assert m.f.c1 == 0 and m.f.c2 == 0


def test_holomorphic_field_is_harmonic():
    m = manufactured_field("holo:z1z2")
    assert m.harmonic
    assert laplacian(m.u.c1) == 0 and m.u.c2 == 0


@pytest.mark.parametrize("name", [n for n in CATALOG])
def test_every_entry_builds(name, rng):
    m = manufactured_field(name)
    z = random_ball_points(5, rng, 0.95)
    assert np.all(np.isfinite(change_basis(m.f, "standard")(z)))


@pytest.mark.parametrize("name", ["cv:asym", "cv:radial", "bc:poly", "bc:exp"])
def test_bc_fields_satisfy_boundary_conditions(name):
    m = manufactured_field(name)
    assert "bc" in m.tags
    g = make_boundary_grid(6)
    assert np.abs(trace_gamma(m.u, g).values[:, 1]).max() < 1e-12
    assert np.abs(conormal_values(m.u, g).values[:, 0]).max() < 1e-12


def test_constant_velocity_traces_are_constant():
    g = make_boundary_grid(4)
    u = constant_velocity_field(2.0, 3.0)
    assert np.allclose(trace_gamma(u, g).values[:, 0], 3.0)
    assert np.allclose(conormal_values(u, g).values[:, 1], 2.0)


def test_bump_offcenter_support_and_asymmetry():
    m = manufactured_field("bump:offcenter")
    G = make_interior_grid(12, 12)
    v = change_basis(m.f, "standard")(G.nodes)
    far = np.linalg.norm(G.nodes - np.array([0.15, 0.3 + 0.1j]), axis=1) > 0.45
    assert np.all(v[far] == 0)
    refl = G.nodes * np.array([1, -1])
    vr = change_basis(m.f, "standard")(refl)
    assert np.abs(G.integrate(np.abs(v - vr))).max() > 1e-3


def test_kmh_forms_in_domain():
    g = make_boundary_grid(6)
    for m in kmh_forms(10, seed=3):
        assert np.abs(change_basis(m.u, "frame")(g.nodes)[:, 1]).max() < 1e-12


def test_kmh_forms_deterministic():
    a = kmh_forms(3, seed=5)
    b = kmh_forms(3, seed=5)
    assert all(x.u == y.u for x, y in zip(a, b))


def test_parametrised_names():
    assert manufactured_field("holo-poly:z1**3+z2").harmonic
    m = manufactured_field("u:r2;zb1")
    assert m.u.c2 == ZB1
    assert manufactured_field("kmh:2", seed=1).u == kmh_forms(3, 1)[2].u


def test_unknown_names():
    with pytest.raises(UnknownField, match="catalog"):
        manufactured_field("nope")
    with pytest.raises(UnknownField):
        manufactured_field("holo-poly:zb1")
