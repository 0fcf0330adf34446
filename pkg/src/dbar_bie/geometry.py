"""Signed distance, the boundary frame (L, N), pairing brackets and
quadrature grids on S^3 and the unit ball of C^2.

Points are complex arrays whose trailing axis has length 2, i.e. ``z[..., 0]``
is z1 and ``z[..., 1]`` is z2.  Vector fields of type (1,0) are stored as the
coefficient pair of d/dz1, d/dz2.  The Hermitian metric has
(d/dz_i, d/dz_i) = 1/2, so (X, Y) = 1/2 * sum_j X_j conj(Y_j).
"""
import csv
from functools import lru_cache
from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_jacobi

SURFACE_AREA = 2.0 * np.pi ** 2
BALL_VOLUME = 0.5 * np.pi ** 2


class DomainError(ValueError):
    """Evaluation at a point where the frame / gradient is undefined."""


class ConfigurationError(ValueError):
    pass


def as_points(z):
    z = np.asarray(z, dtype=complex)
    if z.shape[-1] != 2:
        raise ValueError("points must have a trailing axis of length 2")
    return z


def norm(z):
    z = as_points(z)
    return np.sqrt(np.abs(z[..., 0]) ** 2 + np.abs(z[..., 1]) ** 2)


def signed_distance(z):
    return norm(z) - 1.0


def _check_origin(r, tol=1e-14):
    if np.any(r < tol):
        raise DomainError("gradient of the distance is undefined at the origin")


def distance_gradient(z):
    """Return (d delta/dz_j, d delta/dzbar_j), each of shape (..., 2)."""
    z = as_points(z)
    r = norm(z)
    _check_origin(r)
    dzb = z / (2.0 * r[..., None])
    return np.conj(dzb), dzb


def fd_distance_gradient(delta, z, h=1e-5):
    """Wirtinger gradient of a user-supplied real function ``delta`` by
    central differences in the four real directions."""
    z = as_points(z)
    dz = np.zeros(z.shape, dtype=complex)
    for j in range(2):
        e = np.zeros(2, dtype=complex)
        e[j] = h
        dx = (delta(z + e) - delta(z - e)) / (2 * h)
        dy = (delta(z + 1j * e) - delta(z - 1j * e)) / (2 * h)
        dz[..., j] = 0.5 * (dx - 1j * dy)
    return dz, np.conj(dz)


def real_gradient_norm(z):
    """|grad delta| in R^4; equals 2 |d delta/dzbar|."""
    _, dzb = distance_gradient(z)
    return 2.0 * np.sqrt(np.sum(np.abs(dzb) ** 2, axis=-1))


@dataclass(frozen=True)
class Frame:
    """Coefficients of L and N on (d/dz1, d/dz2); arrays of shape (..., 2)."""
    L: np.ndarray
    N: np.ndarray

    def matrix(self):
        """Unitary map M taking standard coefficients (s, t) to frame
        coefficients (u1, u2): rows are conj(L) and conj(N)."""
        return np.stack([np.conj(self.L), np.conj(self.N)], axis=-2)


def frame_from_gradient(dz, dzb):
    L = np.stack([2 * dz[..., 1], -2 * dz[..., 0]], axis=-1)
    N = 2 * dzb
    return Frame(L, N)


def frame_at(z, delta=None, h=1e-5):
    """Frame at z.  ``delta`` is an optional callable; if given its gradient
    is taken by finite differences, otherwise the ball's analytic one."""
    if delta is None:
        dz, dzb = distance_gradient(z)
    else:
        dz, dzb = fd_distance_gradient(delta, z, h)
    return frame_from_gradient(dz, dzb)


def frame_matrix(z):
    """M(z) = [[z2, -z1], [zbar1, zbar2]] / |z| (standard -> frame)."""
    z = as_points(z)
    r = norm(z)
    _check_origin(r)
    z1, z2 = z[..., 0] / r, z[..., 1] / r
    M = np.empty(z.shape[:-1] + (2, 2), dtype=complex)
    M[..., 0, 0] = z2
    M[..., 0, 1] = -z1
    M[..., 1, 0] = np.conj(z1)
    M[..., 1, 1] = np.conj(z2)
    return M


def hermitian(X, Y):
    """(X, Y) = 1/2 sum X_j conj(Y_j) for (1,0) vector fields."""
    return 0.5 * np.sum(X * np.conj(Y), axis=-1)


def connection_coeff(z):
    """(L, [L, N]) on the ball: [L, N] = 3/(2|z|) L, hence 3/(4|z|)."""
    r = norm(z)
    _check_origin(r)
    return (0.75 / r).astype(complex)


def bracket_LN(z):
    """Coefficients of the commutator [L, N] on the ball."""
    r = norm(z)
    return 1.5 / r[..., None] * frame_at(z).L


def fd_bracket_LN(z, h=1e-5):
    """[L, N] by differentiating the frame coefficient fields numerically;
    [X, Y]_j = X(Y_j) - Y(X_j) for (1,0) fields."""
    z = as_points(z)

    def dfield(which, d):
        # directional derivative sum_k d_k d/dz_k of the coefficients of `which`
        out = 0
        for k in range(2):
            e = np.zeros(2, dtype=complex)
            e[k] = h
            fx = (getattr(frame_at(z + e), which) - getattr(frame_at(z - e), which)) / (2 * h)
            fy = (getattr(frame_at(z + 1j * e), which) - getattr(frame_at(z - 1j * e), which)) / (2 * h)
            out = out + d[..., k, None] * 0.5 * (fx - 1j * fy)
        return out

    F = frame_at(z)
    return dfield("N", F.L) - dfield("L", F.N)


# ---------------------------------------------------------------- pairings

_FIELDS = ("Lz", "Nz", "Lw", "Nw")
_VECTORS = ("(z-w)", "(w-z)", "(w-z)perp", "(wbar-zbar)perp")


def _field_coeffs(name, z, w, delta):
    p = z if name[1] == "z" else w
    F = frame_at(p, delta)
    return F.L if name[0] == "L" else F.N


def _vector(name, z, w):
    d = w - z
    if name == "(z-w)":
        return -d
    if name == "(w-z)":
        return d
    if name == "(w-z)perp":
        return np.stack([d[..., 1], -d[..., 0]], axis=-1)
    if name == "(wbar-zbar)perp":
        db = np.conj(d)
        return np.stack([db[..., 1], -db[..., 0]], axis=-1)
    raise KeyError(name)


def pairing(kind, z, w, delta=None):
    """Bracket <A . B> between frame fields at z or w and displacement
    vectors.  ``kind`` is written "A.B", e.g. "Nz.Nw", "Lw.Lz", "Nz.(z-w)",
    "(w-z).Lz".

    field . field   = 1/2 sum a_j conj(b_j)      (the Hermitian metric)
    field . vector  = sum a_j conj(v_j)
    vector . field  = sum v_j conj(a_j)
    """
    z, w = as_points(z), as_points(w)
    try:
        a, b = kind.split(".", 1) if not kind.startswith("(") else _split_vec_first(kind)
    except ValueError:
        raise ValueError(f"unknown pairing kind {kind!r}") from None
    if a in _FIELDS and b in _FIELDS:
        return hermitian(_field_coeffs(a, z, w, delta), _field_coeffs(b, z, w, delta))
    if a in _FIELDS and b in _VECTORS:
        return np.sum(_field_coeffs(a, z, w, delta) * np.conj(_vector(b, z, w)), axis=-1)
    if a in _VECTORS and b in _FIELDS:
        return np.sum(_vector(a, z, w) * np.conj(_field_coeffs(b, z, w, delta)), axis=-1)
    raise ValueError(f"unknown pairing kind {kind!r}; fields {_FIELDS}, vectors {_VECTORS}")


def _split_vec_first(kind):
    i = kind.index(")")
    j = kind.index(".", i)
    return kind[:j], kind[j + 1:]


# ------------------------------------------------------------------- grids

def lobatto(n):
    """Gauss-Lobatto nodes/weights on [0, 1] (endpoints included)."""
    if n < 2:
        raise ConfigurationError("Lobatto rule needs at least 2 nodes")
    x = np.empty(n)
    w = np.empty(n)
    x[0], x[-1] = -1.0, 1.0
    if n > 2:
        xi, _ = roots_jacobi(n - 2, 1.0, 1.0)
        x[1:-1] = xi
    Pn = np.polynomial.legendre.legval(x, np.r_[np.zeros(n - 1), 1.0])
    w[:] = 2.0 / (n * (n - 1) * Pn ** 2)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=256)
def _leggauss(n):
    return np.polynomial.legendre.leggauss(n)


def gauss_legendre(n, a=0.0, b=1.0):
    x, w = _leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


@dataclass(frozen=True)
class BoundaryGrid:
    """Hopf product grid on S^3.

    z1 = sqrt(1-u) e^{i xi1}, z2 = sqrt(u) e^{i xi2},  d sigma = 1/2 du dxi1 dxi2.
    Gauss-Lobatto in u (so the circles z2 = 0 and z1 = 0 are rings; (1,0) is
    always a node), trapezoidal in both angles.  The degenerate endpoint
    rings are merged into single circles.
    """
    nodes: np.ndarray
    weights: np.ndarray
    ring: np.ndarray          # ring index of each node
    xi: np.ndarray            # (n, 2) angles; node = diag(e^{i xi}) @ ring base
    ring_base: np.ndarray     # (n_rings, 2) real base points
    n_u: int
    n_xi: int
    degree: int = -1
    frames: Frame = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "frames", frame_at(self.nodes))

    @property
    def size(self):
        return len(self.weights)

    @property
    def symmetric(self):
        """Closed under (z1, z2) -> (z1, conj z2) and (z1, z2) -> (z1, -z2)."""
        return self.n_xi % 2 == 0

    def integrate(self, values):
        return np.tensordot(self.weights, values, axes=(0, 0))

    def index_of(self, point, tol=1e-12):
        d = np.linalg.norm(self.nodes - np.asarray(point, dtype=complex), axis=-1)
        i = int(np.argmin(d))
        if d[i] > tol:
            raise KeyError(f"{point} is not a grid node")
        return i

    def to_csv(self, path):
        F = self.frames
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["x1", "y1", "x2", "y2", "weight",
                         "L1_re", "L1_im", "L2_re", "L2_im",
                         "N1_re", "N1_im", "N2_re", "N2_im"])
            for z, w, L, N in zip(self.nodes, self.weights, F.L, F.N):
                wr.writerow([repr(float(v)) for v in
                             (z[0].real, z[0].imag, z[1].real, z[1].imag, w,
                              L[0].real, L[0].imag, L[1].real, L[1].imag,
                              N[0].real, N[0].imag, N[1].real, N[1].imag)])


def grid_sizes(degree):
    """Ring and angle counts for a grid that integrates products of two
    polynomials of degree <= ``degree`` exactly."""
    return degree // 2 + 2, 2 * degree + 2


def make_boundary_grid(degree=None, n_u=None, n_xi=None):
    """Boundary grid either from a polynomial ``degree`` (>= 1) or explicit
    ring / angle counts (n_u >= 2, n_xi >= 2)."""
    if degree is not None:
        if degree < 1:
            raise ConfigurationError("degree must be >= 1")
        n_u, n_xi = grid_sizes(degree)
    if n_u is None or n_xi is None or n_u < 2 or n_xi < 2:
        raise ConfigurationError("need n_u >= 2 and n_xi >= 2")
    u, wu = lobatto(n_u)
    xi = 2 * np.pi * np.arange(n_xi) / n_xi
    dxi = 2 * np.pi / n_xi
    nodes, weights, ring, angles = [], [], [], []
    base = np.stack([np.sqrt(1 - u), np.sqrt(u)], axis=-1)
    for k in range(n_u):
        if k == 0 or k == n_u - 1:
            # merged circle: z2 = 0 (k=0) or z1 = 0 (k=n_u-1)
            w = 0.5 * wu[k] * dxi * 2 * np.pi
            for a in xi:
                ang = (a, 0.0) if k == 0 else (0.0, a)
                angles.append(ang)
                weights.append(w)
                ring.append(k)
        else:
            w = 0.5 * wu[k] * dxi * dxi
            for a in xi:
                for b in xi:
                    angles.append((a, b))
                    weights.append(w)
                    ring.append(k)
    angles = np.array(angles)
    ring = np.array(ring)
    nodes = base[ring] * np.exp(1j * angles)
    return BoundaryGrid(nodes=nodes, weights=np.array(weights), ring=ring,
                        xi=angles, ring_base=base, n_u=n_u, n_xi=n_xi,
                        degree=-1 if degree is None else degree)


@dataclass(frozen=True)
class InteriorGrid:
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def size(self):
        return len(self.weights)

    def integrate(self, values):
        return np.tensordot(self.weights, values, axes=(0, 0))


def make_interior_grid(n_r=8, degree=8):
    """Radial x spherical product rule on the unit ball.  The radial rule is
    Gauss-Jacobi for the weight r^3 on [0, 1], exact for polynomials of
    degree 2 n_r - 1 in r."""
    if n_r < 1:
        raise ConfigurationError("n_r must be >= 1")
    x, w = roots_jacobi(n_r, 0.0, 3.0)
    r = 0.5 * (x + 1)
    wr = w / 16.0
    S = make_boundary_grid(degree)
    nodes = (r[:, None, None] * S.nodes[None]).reshape(-1, 2)
    weights = (wr[:, None] * S.weights[None]).reshape(-1)
    return InteriorGrid(nodes, weights)


def random_sphere_points(n, rng):
    """Uniform random points on S^3."""
    g = rng.standard_normal((n, 4))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g[:, 0::2] + 1j * g[:, 1::2]


def random_ball_points(n, rng, rmax=1.0):
    p = random_sphere_points(n, rng)
    r = rmax * rng.random(n) ** 0.25
    return p * r[:, None]
