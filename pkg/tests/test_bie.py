import numpy as np
import pytest
from hypothesis import given

from dbar_bie.geometry import ConfigurationError
from dbar_bie.bie import (kernel_eval, apply_operator, operator_matrix, OperatorRule,
                          fit_exponent, extrapolate, assemble_reduced_system, solve_bie,
                          solve_constant_velocity, rigidity_value, full_equation_residual,
                          system_matrix, _weighted_lstsq, KERNELS)
from dbar_bie.catalog import manufactured_field
from dbar_bie.forms import (BoundaryField, Form01, change_basis, conormal_B, conormal_values,
                            laplacian_form, trace_gamma, Z1, Z2, ZB1, ZB2, R2)
from dbar_bie.geometry import make_boundary_grid, random_sphere_points
from dbar_bie.potentials import SingularEvaluation, VolumeData, newton_boundary_traces
from strategies import distinct_pairs

U = Form01(Z1 * Z2 * ZB1 + ZB2, Z1 ** 2 * ZB2 + ZB1 * R2)


@given(distinct_pairs(0.05))
def test_generic_and_ball_kernels_agree(zw):
    z, w = zw
    for name in KERNELS:
        a = kernel_eval(name, z, w, "generic")
        b = kernel_eval(name, z, w, "ball")
        assert np.all(np.abs(a - b) <= 1e-12 * np.maximum(1, np.abs(b)))


@given(distinct_pairs(0.05))
def test_closed_forms_match_potential_kernels(zw):
    z, w = zw
    for name in ("S", "T", "Tstar"):
        a = kernel_eval(name, z, w, "ball")
        b = kernel_eval(name, z, w, "derived")
        assert np.all(np.abs(a - b) <= 1e-12 * np.maximum(1, np.abs(b)))


@given(distinct_pairs(0.05))
def test_tstar_is_adjoint_of_t(zw):
    z, w = zw
    assert np.allclose(kernel_eval("Tstar", z, w), kernel_eval("T", w, z).conj().T, atol=1e-12)


def test_spot_values():
    e1, e2, m1 = np.array([1, 0j]), np.array([0, 1 + 0j]), np.array([-1, 0j])
    assert kernel_eval("S", e1, e2)[0, 1] == pytest.approx(-1 / (8 * np.pi ** 2), abs=1e-15)
    assert kernel_eval("T", e1, e2)[0, 0] == pytest.approx(1 / (4 * np.pi ** 2), abs=1e-15)
    assert kernel_eval("R", e1, m1)[1, 1] == pytest.approx(1 / (4 * np.pi ** 2), abs=1e-15)


def test_kernel_errors():
    z = np.array([1, 0j])
    with pytest.raises(SingularEvaluation):
        kernel_eval("S", z, z)
    with pytest.raises(KeyError):
        kernel_eval("Q", z, -z)


def _calderon(rule, pts):
    F = laplacian_form(U)
    gam = lambda w: change_basis(U, "frame")(w)
    Bu = lambda w: conormal_B(U)(w)
    T = apply_operator("T", gam, pts, rule)
    S = apply_operator("S", Bu, pts, rule)
    Ts = apply_operator("Tstar", Bu, pts, rule)
    R = apply_operator("R", gam, pts, rule)
    gN, BN, _ = newton_boundary_traces(F, pts)
    return 0.5 * gam(pts) - (gN + S - 0.5 * T), 0.5 * Bu(pts) - (BN + 0.5 * Ts + R)


def test_boundary_equations_hold_for_smooth_u(rng):
    pts = random_sphere_points(3, rng)
    r1, r2 = _calderon(OperatorRule(), pts)
    assert np.abs(r1).max() < 1e-10 and np.abs(r2).max() < 1e-10


def test_printed_finite_part_kernel_breaks_second_equation(rng):
    """The printed R kernel is not -B DL on the ball (which vanishes)."""
    pts = random_sphere_points(2, rng)
    _, r2 = _calderon(OperatorRule(r_variant="printed"), pts)
    assert np.abs(r2).max() > 1e-2


def test_extrapolated_principal_value(rng):
    pts = random_sphere_points(1, rng)
    gam = lambda w: change_basis(U, "frame")(w)
    direct = apply_operator("T", gam, pts)
    ext, diag = apply_operator("T", gam, pts, OperatorRule(method="extrapolate", n_theta=32),
                               diagnostics=True)
    assert np.allclose(ext, direct, atol=1e-5)
    assert all(abs(p - 1) < 0.35 for p in diag[-1]["exponents"])


def test_extrapolation_helpers():
    eps = 0.4 / 2.0 ** np.arange(4)
    vals = (3.0 + 2 * eps - eps ** 3)[:, None]
    A, _ = extrapolate(eps, vals, "pv")
    assert A[0] == pytest.approx(3.0, abs=1e-12)
    vals = (3.0 + 0.5 / eps + eps)[:, None]
    A, coef = extrapolate(eps, vals, "fp")
    assert A[0] == pytest.approx(3.0, abs=1e-12) and coef[-1][0] == pytest.approx(0.5)
    p, _ = fit_exponent(eps, (1 + eps ** 2)[:, None])
    assert np.allclose(p, 2)


def test_operator_matrix_matches_direct_application():
    g = make_boundary_grid(4)
    psi = trace_gamma(U, g).values
    x = np.concatenate([psi[:, 0], psi[:, 1]])
    for name in ("S", "T", "Tstar"):
        A = operator_matrix(name, g)
        i = 37
        direct = apply_operator(name, BoundaryField(psi, g), g.nodes[i:i + 1])[0]
        assert np.allclose((A @ x).reshape(2, -1)[:, i], direct, atol=1e-12)


def test_odd_symmetry_of_single_layer_at_pole():
    const = lambda w: np.stack([np.zeros(len(w)), np.full(len(w), 2.0 + 0j)], -1)
    v = apply_operator("S", const, np.array([[1.0, 0.0]], complex))
    assert abs(v[0, 0]) < 1e-12


@pytest.fixture(scope="module")
def matrix4():
    return system_matrix(make_boundary_grid(4))


def test_reduced_solve_recovers_polynomial_bc_field(matrix4):
    m = manufactured_field("bc:poly")
    g = make_boundary_grid(4)
    rep = solve_bie(assemble_reduced_system(VolumeData(m.f), g, matrix=matrix4))
    assert np.allclose(rep.psi1, trace_gamma(m.u, g).values[:, 0], atol=1e-8)
    assert np.allclose(rep.phi2, conormal_values(m.u, g).values[:, 1], atol=1e-8)
    assert rep.condition < 1e3 and rep.ridge == 0
    assert rep.dropped_residual < 1e-8


def test_zero_datum_gives_zero_solution(matrix4):
    g = make_boundary_grid(4)
    rep = solve_bie(assemble_reduced_system(None, g, matrix=matrix4))
    assert not np.any(rep.psi1) and not np.any(rep.phi2)
    assert max(rep.residuals.values()) == 0


def test_constant_velocity_and_rigidity(matrix4):
    g = make_boundary_grid(4)
    m = manufactured_field("cv:asym")
    out = solve_constant_velocity(assemble_reduced_system(VolumeData(m.f), g, matrix=matrix4))
    assert out["free"].b == pytest.approx(1, abs=1e-10)
    assert out["free"].a == pytest.approx(1, abs=1e-10)
    assert out["ratio_at_1_0"] > 1e6
    t, g1 = rigidity_value(m.f, with_check=True)
    assert t == pytest.approx(-1, abs=1e-10) and g1 == pytest.approx(-t)


def test_full_equation_residual_for_exact_densities():
    m = manufactured_field("poly:mixed")
    g = make_boundary_grid(4)
    r1, r2 = full_equation_residual(VolumeData(m.f), trace_gamma(m.u, g).values,
                                    conormal_values(m.u, g).values, g)
    assert np.abs(r1).max() < 1e-9 and np.abs(r2).max() < 1e-9


def test_weighted_lstsq_paths(rng):
    A = rng.standard_normal((40, 10)) + 1j * rng.standard_normal((40, 10))
    x0 = rng.standard_normal(10) + 0j
    w = np.ones(20)
    x, cond, ridge = _weighted_lstsq(A, A @ x0, w)
    assert np.allclose(x, x0) and ridge == 0
    s = np.linalg.svd(A, compute_uv=False)
    assert cond == pytest.approx(s[0] / s[-1], rel=0.2)
    B = A.copy()
    B[:, -1] = B[:, 0]
    x, cond, ridge = _weighted_lstsq(B, B @ x0, w)
    assert cond > 1e12 and ridge > 0 and np.allclose(B @ x, B @ x0)


def test_operator_rule_rejects_unknown_variant():
    with pytest.raises(ConfigurationError):
        OperatorRule(r_variant="typo")
    with pytest.raises(ConfigurationError):
        OperatorRule(method="typo")
