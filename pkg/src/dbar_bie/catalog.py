"""Manufactured fields addressable by name.

Every entry carries the datum f (a Form01, standard basis) and, when known,
the exact solution u with analytic derivatives.  Entries tagged ``bc``
satisfy the boundary conditions u2 = 0 and (Bu)1 = 0 on the sphere, so u is
the solution of the dbar-Neumann problem for f = Laplacian u.

Boundary-condition fields are built from two smooth functions g, k:

    u = phi (conj z2, -conj z1) + (|z|^2 - 1) k (z1, z2),
    phi = g - (|z|^2 - 1) (2 g + sum_j conj(z_j) dg/dconj(z_j)),

for which u2 = (|z|^2 - 1)|z| k, (gamma u)1 = g and (Bu)1 = 0 on S^3.
"""
from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from .forms import Form01, Z1, Z2, ZB1, ZB2, R2, laplacian_form, parse_field, dzb


class UnknownField(KeyError):
    pass


@dataclass(frozen=True)
class Manufactured:
    name: str
    f: Form01
    u: Form01 = None
    tags: frozenset = field(default_factory=frozenset)
    note: str = ""

    @property
    def harmonic(self):
        return "harmonic" in self.tags


def bc_field(g, k=0):
    """Form satisfying both dbar-Neumann boundary conditions on the ball."""
    g, k = sp.sympify(g), sp.sympify(k)
    Eg = ZB1 * dzb(g, 0) + ZB2 * dzb(g, 1)
    phi = g - (R2 - 1) * (2 * g + Eg)
    return Form01(phi * ZB2 + (R2 - 1) * k * Z1, -phi * ZB1 + (R2 - 1) * k * Z2)


def constant_velocity_field(a, b):
    """u with (gamma u)1 = b, (Bu)2 = a, u2 = 0 and (Bu)1 = 0 on S^3."""
    return bc_field(b, sp.Rational(1, 2) * a)


def bump(center, radius, r2=None):
    """C-infinity bump exp(-1 / (1 - |z-c|^2 / radius^2)) supported in the
    ball of the given radius around ``center``."""
    c1, c2 = complex(center[0]), complex(center[1])
    if r2 is None:
        r2 = (Z1 - c1) * (ZB1 - np.conj(c1)) + (Z2 - c2) * (ZB2 - np.conj(c2))
    s = r2 / sp.Float(radius) ** 2
    return sp.Piecewise((sp.exp(-1 / (1 - s)), s < 1), (0, True))


def random_polynomial(rng, degree=2, terms=4):
    """Random complex polynomial in z, conj z with rational coefficients
    (exact cancellation in the frame expressions)."""
    expr = sp.Integer(0)
    for _ in range(terms):
        e = rng.integers(0, degree + 1, size=4)
        while e.sum() > degree:
            e[rng.choice(np.flatnonzero(e))] -= 1
        c = np.rint(1000 * rng.standard_normal(2)).astype(int)
        expr += ((sp.Rational(int(c[0]), 1000) + sp.I * sp.Rational(int(c[1]), 1000))
                 * Z1 ** int(e[0]) * Z2 ** int(e[1]) * ZB1 ** int(e[2]) * ZB2 ** int(e[3]))
    return expr


def _from_u(name, u, tags, note=""):
    return Manufactured(name, laplacian_form(u), u, frozenset(tags), note)


def _builders():
    h = sp.Rational(1, 2)
    return {
        "zero": lambda: _from_u("zero", Form01(0, 0), {"harmonic", "bc", "constant-velocity"}),
        "holo:z1z2": lambda: _from_u("holo:z1z2", Form01(Z1 * Z2, 0), {"harmonic"}),
        "harm:zb1z2": lambda: _from_u("harm:zb1z2", Form01(ZB1 * Z2, Z1 ** 2), {"harmonic"}),
        "harm:mixed": lambda: _from_u("harm:mixed", Form01(ZB1 * ZB2 + Z1, Z2 * ZB1 ** 2 - ZB2), {"harmonic"}),
        "poly:r2": lambda: _from_u("poly:r2", Form01(R2, 0), set()),
        "poly:mixed": lambda: _from_u("poly:mixed", Form01(Z1 * ZB2 * R2, ZB1 ** 3 + Z2), set()),
        "cv:asym": lambda: _from_u("cv:asym", constant_velocity_field(1, 1),
                                   {"bc", "constant-velocity", "t-nonzero"},
                                   "constant velocity, b = 1, a = 1"),
        "cv:radial": lambda: _from_u("cv:radial", constant_velocity_field(1, 0),
                                     {"bc", "constant-velocity", "radial", "t-zero"},
                                     "constant velocity, b = 0, a = 1"),
        "bc:poly": lambda: _from_u("bc:poly", bc_field(Z1 + h * Z2 * ZB1, sp.Rational(1, 3) + Z2), {"bc"}),
        "bc:exp": lambda: _from_u("bc:exp", bc_field(sp.exp(h * Z1 + ZB2 / 3), sp.exp(ZB1) / 4), {"bc"}),
        "bump:offcenter": lambda: Manufactured(
            "bump:offcenter",
            Form01(h * bump((0.15, 0.3 + 0.1j), 0.45), bump((0.15, 0.3 + 0.1j), 0.45)),
            None, frozenset({"compact", "asymmetric", "t-nonzero"}),
            "bump centred at (0.15, 0.3+0.1i), radius 0.45"),
        "bump:radial": lambda: Manufactured(
            "bump:radial",
            Form01(bump((0, 0), 0.8, R2) * Z1, bump((0, 0), 0.8, R2) * Z2),
            None, frozenset({"compact", "radial", "t-zero"}),
            "radial bump times (z1, z2), supported in |z| < 0.8"),
    }


CATALOG = tuple(_builders())


def manufactured_field(name, seed=0):
    """Catalog entry by name.  Besides the fixed names, "holo-poly:<expr>"
    gives the harmonic field s = expr, t = 0 (expr holomorphic in z1, z2),
    "u:<s>;<t>" any standard-basis u, and "kmh:<i>" the i-th random
    Dom(dbar*) test form for the seed."""
    b = _builders()
    if name in b:
        return b[name]()
    if name.startswith("holo-poly:"):
        s = parse_field(name.split(":", 1)[1])
        if s.has(ZB1) or s.has(ZB2):
            raise UnknownField(f"{name}: holomorphic expression expected")
        return _from_u(name, Form01(s, 0), {"harmonic"})
    if name.startswith("u:"):
        s, t = name[2:].split(";")
        return _from_u(name, Form01(parse_field(s), parse_field(t)), set())
    if name.startswith("kmh:"):
        return kmh_forms(int(name[4:]) + 1, seed)[-1]
    raise UnknownField(f"unknown field {name!r}; catalog: {', '.join(CATALOG)}, "
                       "holo-poly:<expr>, u:<s>;<t>, kmh:<i>")


def kmh_forms(n=10, seed=0):
    """Test forms in Dom(dbar*): u = P (conj z2, -conj z1) + (|z|^2-1)(Q1, Q2),
    whose frame component u2 = (|z|^2-1)(conj z1 Q1 + conj z2 Q2)/|z|
    vanishes on the sphere."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        P, Q1, Q2 = (random_polynomial(rng) for _ in range(3))
        u = Form01(P * ZB2 + (R2 - 1) * Q1, -P * ZB1 + (R2 - 1) * Q2)
        out.append(Manufactured(f"kmh:{i}", laplacian_form(u), u, frozenset({"dom-dbar-star"})))
    return out
