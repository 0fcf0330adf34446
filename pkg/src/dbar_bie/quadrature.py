"""Target-centred polar rules on S^3 and in the ball.

For a unit z the real orthonormal frame (z, iz, l, il), l = (-conj z2, conj z1),
spans R^4, so a point of S^3 is w = cos(theta) z + sin(theta) v with v on the
unit 2-sphere of the tangent space spanned by (iz, l, il), and
d sigma(w) = sin^2(theta) d theta d Omega(v).
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .geometry import as_points, gauss_legendre, ConfigurationError


def tangent_basis(z):
    """(iz, l, il) for unit z: array (..., 3, 2)."""
    z = as_points(z)
    l = np.stack([-np.conj(z[..., 1]), np.conj(z[..., 0])], axis=-1)
    return np.stack([1j * z, l, 1j * l], axis=-2)


@dataclass(frozen=True)
class S2Rule:
    """Gauss-Legendre in cos(chi) times trapezoid in the azimuth.  The rule
    is invariant under the antipodal map when n_phi is even."""
    points: np.ndarray   # (m, 3)
    weights: np.ndarray  # (m,)


@lru_cache(maxsize=64)
def s2_rule(n):
    if n < 1:
        raise ConfigurationError("S^2 rule order must be >= 1")
    c, wc = np.polynomial.legendre.leggauss(n)
    nphi = 2 * n
    phi = 2 * np.pi * (np.arange(nphi) + 0.5) / nphi
    s = np.sqrt(1 - c ** 2)
    pts = np.stack([np.repeat(c, nphi),
                    np.outer(s, np.cos(phi)).ravel(),
                    np.outer(s, np.sin(phi)).ravel()], axis=-1)
    w = np.repeat(wc, nphi) * (2 * np.pi / nphi)
    return S2Rule(pts, w)


def tangent_directions(z, rule):
    """Unit tangent directions v at z for every S^2 node: (..., m, 2)."""
    T = tangent_basis(z)
    return np.einsum("mk,...kj->...mj", rule.points, T)


@dataclass(frozen=True)
class PolarRule:
    """Orders for the target-centred polar rule on S^3."""
    n_theta: int = 24
    n_s2: int = 10

    def theta(self, a=0.0, b=np.pi):
        return gauss_legendre(self.n_theta, a, b)


def sphere_polar_points(z, theta, rule):
    """Points w(theta, v) for a single unit z: (n_theta, m, 2)."""
    z = as_points(z)
    V = tangent_directions(z, rule)
    return (np.cos(theta)[:, None, None] * z[None, None, :]
            + np.sin(theta)[:, None, None] * V[None, :, :])


def graded_intervals(a, b, center, width, ratio=4.0):
    """Breakpoints in [a, b] refined geometrically towards ``center`` with
    smallest cell ``width``."""
    pts = {a, b}
    if a < center < b:
        pts.add(center)
    for side in (-1, 1):
        d = width
        while True:
            p = center + side * d
            if p <= a or p >= b:
                break
            pts.add(p)
            d *= ratio
    return np.array(sorted(pts))


def composite_gauss(breaks, n):
    xs, ws = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        x, w = gauss_legendre(n, a, b)
        xs.append(x)
        ws.append(w)
    return np.concatenate(xs), np.concatenate(ws)


@dataclass(frozen=True)
class VolumeRule:
    """Orders for the target-centred polar rule in the ball
    (w = z + rho v, v in S^3, 0 <= rho <= R(v))."""
    n_rho: int = 12
    n_chi: int = 12
    n_s2: int = 8


def volume_polar_nodes(z, rule):
    """Directions v, radial extents and weights for the polar rule about
    targets z (t, 2) that all have the same modulus.

    Returns (v, R, wdir) with v (t, m, 2) unit directions, R (m,) the
    distance to the sphere along v and wdir the S^3 direction weights.  For
    |z| = 1 only the inward hemisphere is used.
    """
    z = np.atleast_2d(np.asarray(z, dtype=complex))
    a = float(np.linalg.norm(z[0]))
    if a > 1 + 1e-12:
        raise ValueError("target outside the closed unit ball")
    chi, wchi, s2 = _volume_reference(round(a, 13), rule)
    if a < 1e-12:
        zh = np.tile(np.array([1.0 + 0j, 0.0]), (len(z), 1))
    else:
        zh = z / np.linalg.norm(z, axis=-1, keepdims=True)
    V = tangent_directions(zh, s2)                                       # (t, m2, 2)
    v = (np.cos(chi)[None, :, None, None] * zh[:, None, None, :]
         + np.sin(chi)[None, :, None, None] * V[:, None])               # (t, nchi, m2, 2)
    wdir = (wchi * np.sin(chi) ** 2)[:, None] * s2.weights[None, :]
    c = min(a, 1.0) * np.cos(chi)
    R = -c + np.sqrt(c * c + max(1 - a * a, 0.0))
    R = np.broadcast_to(R[:, None], wdir.shape)
    return v.reshape(len(z), -1, 2), R.reshape(-1), wdir.reshape(-1)


@lru_cache(maxsize=256)
def _volume_reference(a, rule):
    s2 = s2_rule(rule.n_s2)
    eps = np.sqrt(max(1.0 - a * a, 0.0))
    if eps < 1e-12:
        chi, wchi = composite_gauss(np.array([np.pi / 2, np.pi]), rule.n_chi)
    elif a < 0.5:
        chi, wchi = composite_gauss(np.array([0, np.pi / 2, np.pi]), rule.n_chi)
    else:
        chi, wchi = composite_gauss(graded_intervals(0.0, np.pi, np.pi / 2, max(eps, 1e-3)), rule.n_chi)
    return chi, wchi, s2
