"""Frame calculus for (0,q)-forms on domains in C^2.

Fields are sympy expressions in z1, z2, zb1, zb2, with zb the conjugate of
z treated as an independent symbol, so Wirtinger derivatives are ordinary
partial derivatives.  Numerical values come from
cached ``lambdify`` callables that take complex point arrays of shape
(..., 2).  The frame is built from a defining function ``delta`` (the unit
ball's |z| - 1 by default), so the same code serves any smooth delta.

Conventions: u = u1 w_Lbar + u2 w_Nbar (frame) = s dzbar1 + t dzbar2
(standard).  Frame coefficients are M(z) (s, t) with M unitary, rows
conj(L), conj(N).  Pointwise norms: |w_Lbar|^2 = |w_Nbar|^2 = 2 and
|w_Lbar ^ w_Nbar|^2 = 4.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import sympy as sp

from .geometry import BoundaryGrid, as_points

Z1, Z2, ZB1, ZB2 = sp.symbols("z1 z2 zb1 zb2")
COORDS = (Z1, Z2, ZB1, ZB2)
R2 = Z1 * ZB1 + Z2 * ZB2
BALL_DELTA = sp.sqrt(R2) - 1

_Z = (Z1, Z2)
_ZB = (ZB1, ZB2)
_SWAP = {Z1: ZB1, ZB1: Z1, Z2: ZB2, ZB2: Z2}


def dz(f, j):
    return sp.diff(f, _Z[j])


def dzb(f, j):
    return sp.diff(f, _ZB[j])


def laplacian(f):
    """R^4 Laplacian = 4 sum_j d^2/dz_j dzbar_j."""
    return 4 * sum(sp.diff(f, _Z[j], _ZB[j]) for j in range(2))


def conj(f):
    """Complex conjugate of an expression in z and zbar treated as
    independent symbols (zbar is the conjugate of z)."""
    f = sp.sympify(f)
    return f.xreplace(_SWAP).xreplace({sp.I: -sp.I})


@lru_cache(maxsize=None)
def _compile(expr):
    fn = sp.lambdify(COORDS, expr, modules="numpy", cse=True)
    return fn


def evaluate(expr, z):
    """Evaluate a sympy expression at complex points z (..., 2)."""
    z = as_points(z)
    expr = sp.sympify(expr)
    fn = _compile(expr)
    # piecewise (bump) fields evaluate every branch; overflow in the
    # discarded branch is harmless
    with np.errstate(over="ignore"):
        out = fn(z[..., 0], z[..., 1], np.conj(z[..., 0]), np.conj(z[..., 1]))
    return np.broadcast_to(np.asarray(out, dtype=complex), z.shape[:-1]).copy()


_NAMES = {"z1": Z1, "z2": Z2, "zb1": ZB1, "zb2": ZB2, "r2": R2,
          "x1": (Z1 + ZB1) / 2, "y1": (Z1 - ZB1) / (2 * sp.I),
          "x2": (Z2 + ZB2) / 2, "y2": (Z2 - ZB2) / (2 * sp.I),
          "I": sp.I, "pi": sp.pi}


def parse_field(text):
    """Parse an expression in z1, z2, zb1, zb2 (conjugates) and r2 = |z|^2."""
    return sp.sympify(text, locals=_NAMES)


@dataclass(frozen=True)
class Geometry:
    """Frame data derived symbolically from a defining function delta."""
    delta: sp.Expr = BALL_DELTA

    @property
    def frame(self):
        return _frame(self.delta)

    def L(self, f):
        l, _ = self.frame[:2]
        return l[0] * dz(f, 0) + l[1] * dz(f, 1)

    def N(self, f):
        _, n = self.frame[:2]
        return n[0] * dz(f, 0) + n[1] * dz(f, 1)

    def Lbar(self, f):
        l, _ = self.frame[:2]
        return conj(l[0]) * dzb(f, 0) + conj(l[1]) * dzb(f, 1)

    def Nbar(self, f):
        _, n = self.frame[:2]
        return conj(n[0]) * dzb(f, 0) + conj(n[1]) * dzb(f, 1)

    @property
    def connection(self):
        """(L, [L, N])."""
        return self.frame[2]


@lru_cache(maxsize=None)
def _frame(delta):
    l = (2 * dz(delta, 1), -2 * dz(delta, 0))
    n = (2 * dzb(delta, 0), 2 * dzb(delta, 1))

    def act(X, f):
        return X[0] * dz(f, 0) + X[1] * dz(f, 1)

    br = tuple(act(l, n[j]) - act(n, l[j]) for j in range(2))
    c = sp.Rational(1, 2) * (l[0] * conj(br[0]) + l[1] * conj(br[1]))
    return l, n, c, br


BALL = Geometry()


@dataclass(frozen=True)
class ScalarField:
    expr: sp.Expr

    def __call__(self, z):
        return evaluate(self.expr, z)


@dataclass(frozen=True)
class TopForm:
    """Coefficient of w_Lbar ^ w_Nbar."""
    expr: sp.Expr
    geometry: Geometry = BALL

    def __call__(self, z):
        return evaluate(self.expr, z)


@dataclass(frozen=True)
class Form01:
    """A (0,1)-form given by two coefficient expressions in ``basis``
    ('frame' or 'standard')."""
    c1: sp.Expr
    c2: sp.Expr
    basis: str = "standard"
    geometry: Geometry = BALL

    def __post_init__(self):
        if self.basis not in ("frame", "standard"):
            raise ValueError("basis must be 'frame' or 'standard'")
        object.__setattr__(self, "c1", sp.sympify(self.c1))
        object.__setattr__(self, "c2", sp.sympify(self.c2))

    @property
    def coeffs(self):
        return (self.c1, self.c2)

    def __call__(self, z):
        return np.stack([evaluate(self.c1, z), evaluate(self.c2, z)], axis=-1)

    def __add__(self, other):
        other = change_basis(other, self.basis)
        return Form01(self.c1 + other.c1, self.c2 + other.c2, self.basis, self.geometry)

    def scale(self, a):
        return Form01(a * self.c1, a * self.c2, self.basis, self.geometry)


def zero_form(basis="standard"):
    return Form01(sp.Integer(0), sp.Integer(0), basis)


def change_basis(u, target):
    """Convert a Form01 between the frame and the standard basis."""
    if u.basis == target:
        return u
    l, n = u.geometry.frame[:2]
    if target == "frame":
        s, t = u.coeffs
        return Form01(conj(l[0]) * s + conj(l[1]) * t,
                      conj(n[0]) * s + conj(n[1]) * t, "frame", u.geometry)
    if target == "standard":
        a, b = u.coeffs
        return Form01(l[0] * a + n[0] * b, l[1] * a + n[1] * b, "standard", u.geometry)
    raise ValueError(f"unknown basis {target!r}")


def change_basis_values(values, z, target):
    """Numeric basis change of coefficient values (..., 2) at points z on the
    ball (values given in the other basis)."""
    from .geometry import frame_matrix
    M = frame_matrix(z)
    if target == "frame":
        return np.einsum("...ij,...j->...i", M, values)
    if target == "standard":
        return np.einsum("...ji,...j->...i", np.conj(M), values)
    raise ValueError(f"unknown basis {target!r}")


def dbar(u, geometry=BALL):
    """dbar of a scalar (expression or ScalarField) or of a Form01."""
    if isinstance(u, Form01):
        g = u.geometry
        a, b = change_basis(u, "frame").coeffs
        return TopForm(g.Lbar(b) - g.Nbar(a) - 2 * a * g.connection, g)
    f = u.expr if isinstance(u, ScalarField) else sp.sympify(u)
    return Form01(geometry.Lbar(f), geometry.Nbar(f), "frame", geometry)


def dbar_star(u):
    """Formal adjoint of dbar on Form01 (-> scalar) or TopForm (-> Form01)."""
    if isinstance(u, TopForm):
        g = u.geometry
        return Form01(2 * g.N(u.expr), -2 * g.L(u.expr), "frame", g)
    if isinstance(u, Form01):
        g = u.geometry
        a, b = change_basis(u, "frame").coeffs
        return ScalarField(-2 * (g.L(a) + g.N(b) + 2 * b * conj(g.connection)))
    raise TypeError("dbar_star takes a Form01 or a TopForm")


def box_apply(u):
    """box = 2 (dbar dbar* + dbar* dbar) on (0,1)-forms, result in the frame."""
    g = u.geometry
    p = dbar(dbar_star(u), g)
    q = dbar_star(dbar(u))
    return Form01(2 * (p.c1 + q.c1), 2 * (p.c2 + q.c2), "frame", g)


def laplacian_form(u):
    """Componentwise R^4 Laplacian of the standard coefficients."""
    s, t = change_basis(u, "standard").coeffs
    return Form01(laplacian(s), laplacian(t), "standard", u.geometry)


def conormal_B(u):
    """Conormal derivative as a Form01 (frame) expression; restrict with
    ``evaluate_on`` or ``boundary_values``."""
    g = u.geometry
    a, b = change_basis(u, "frame").coeffs
    c = g.connection
    return Form01(2 * g.Nbar(a) - 2 * g.Lbar(b) + 4 * c * a,
                  2 * g.L(a) + 2 * g.N(b) + 4 * conj(c) * b, "frame", g)


def conormal_B_standard(u):
    """The same operator written through the standard coefficients:
    Bu = (-2 A2, 2 A1), A1 = ds/dz1 + dt/dz2, A2 = dt/dzbar1 - ds/dzbar2
    (valid where |grad delta| = 1)."""
    s, t = change_basis(u, "standard").coeffs
    A1 = dz(s, 0) + dz(t, 1)
    A2 = dzb(t, 0) - dzb(s, 1)
    return Form01(-2 * A2, 2 * A1, "frame", u.geometry)


def connection_coeff_expr(geometry=BALL):
    return geometry.connection


@dataclass(frozen=True)
class BoundaryField:
    """Two complex values per boundary node, frame components."""
    values: np.ndarray
    grid: BoundaryGrid

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != (self.grid.size, 2):
            raise ValueError("BoundaryField needs shape (n_nodes, 2)")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite boundary values")
        object.__setattr__(self, "values", v)

    def norm(self):
        return np.sqrt(np.real(self.grid.integrate(np.abs(self.values) ** 2).sum()))


def trace_gamma(u, grid):
    """Restriction of u to the boundary nodes, frame components."""
    return BoundaryField(change_basis(u, "frame")(grid.nodes), grid)


def boundary_values(u, grid):
    return BoundaryField(u(grid.nodes) if u.basis == "frame"
                         else change_basis_values(u(grid.nodes), grid.nodes, "frame"), grid)


def conormal_values(u, grid):
    return BoundaryField(conormal_B(u)(grid.nodes), grid)


def inner_01(a, b):
    """Pointwise (a, b) for frame coefficient arrays (|w|^2 = 2)."""
    return 2 * np.sum(a * np.conj(b), axis=-1)


def inner_top(a, b):
    return 4 * a * np.conj(b)


# ----------------------------------------------------- Levi form / KMH

def levi_form(geometry=BALL):
    """Complex Hessian d^2 delta / dz_j dzbar_k as a 2x2 nested tuple."""
    d = geometry.delta
    return tuple(tuple(dzb(dz(d, j), k) for k in range(2)) for j in range(2))


def hess_delta_uu(u):
    """Levi-form contraction sum_jk delta_{j kbar} u_j conj(u_k) of the
    standard coefficient vector of u."""
    s, t = change_basis(u, "standard").coeffs
    H = levi_form(u.geometry)
    c = (s, t)
    return sum(H[j][k] * c[j] * conj(c[k]) for j in range(2) for k in range(2))
