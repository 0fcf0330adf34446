"""Fundamental solutions, the Newton potential and the layer potentials.

Sign conventions (fixed by the finite-difference tests):

* E(z, w) = 1 / (4 pi^2 |z - w|^2) is the fundamental solution of
  box = -Laplacian on R^4.
* G0 = -E, so Laplacian(G0 f) = f; the Newton potential is N f = G0 * f.
* The frame-basis matrix kernel is E(z, w) M(z) M(w)^H; the layer potentials
  are built on it:
      SL phi(z) = int E M(z) M(w)^H phi(w) dsigma,
      DL psi(z) = int [B_w (E M(w) M(z)^H)]^H psi(w) dsigma,
  and every smooth u on the closed ball satisfies
      u = N(Laplacian u) + SL(Bu) - DL(gamma u).
"""
import csv
from dataclasses import dataclass, field

import numpy as np

from .forms import Form01, BoundaryField, change_basis
from .geometry import (as_points, norm, frame_matrix, DomainError,
                       gauss_legendre)
from .quadrature import (VolumeRule, PolarRule, volume_polar_nodes, s2_rule,
                         tangent_directions, composite_gauss, graded_intervals)

FOUR_PI2 = 4.0 * np.pi ** 2


class SingularEvaluation(ValueError):
    pass


def _rho2(z, w):
    d = as_points(z) - as_points(w)
    return np.sum(np.abs(d) ** 2, axis=-1)


def box_kernel(z, w):
    """E(z, w) = 1 / (4 pi^2 |z-w|^2)."""
    r2 = _rho2(z, w)
    if np.any(r2 == 0):
        raise SingularEvaluation("kernel evaluated at z = w")
    return 1.0 / (FOUR_PI2 * r2)


def g0_kernel(z, w):
    """Fundamental solution of the Laplacian on R^4 (negative kernel)."""
    return -box_kernel(z, w)


def grad_kernel(z, w):
    """(dE/dz_j, dE/dzbar_j), arrays (..., 2)."""
    d = as_points(z) - as_points(w)
    r2 = np.sum(np.abs(d) ** 2, axis=-1)
    c = -1.0 / (FOUR_PI2 * r2 ** 2)
    return c[..., None] * np.conj(d), c[..., None] * d


def sl_kernel(z, w):
    """Frame-basis single-layer kernel E M(z) M(w)^H."""
    E = box_kernel(z, w)
    return E[..., None, None] * (frame_matrix(z) @ np.conj(np.swapaxes(frame_matrix(w), -1, -2)))


def _qdl_std(z, w):
    """Standard-output double-layer kernel acting on frame densities."""
    dz, dzb = grad_kernel(z, w)
    K = np.empty(dz.shape[:-1] + (2, 2), dtype=complex)
    K[..., 0, 0] = -2 * dz[..., 1]
    K[..., 0, 1] = -2 * dzb[..., 0]
    K[..., 1, 0] = 2 * dz[..., 0]
    K[..., 1, 1] = -2 * dzb[..., 1]
    return K


def dl_kernel(z, w):
    """Frame-basis double-layer kernel [B_w E M(w) M(z)^H]^H."""
    return frame_matrix(z) @ _qdl_std(z, w)


def bsl_kernel(z, w):
    """B_z applied to the single-layer kernel (frame output at z)."""
    dz, dzb = grad_kernel(z, w)
    Q = np.empty(dz.shape[:-1] + (2, 2), dtype=complex)
    Q[..., 0, 0] = 2 * dzb[..., 1]
    Q[..., 0, 1] = -2 * dzb[..., 0]
    Q[..., 1, 0] = 2 * dz[..., 0]
    Q[..., 1, 1] = 2 * dz[..., 1]
    return Q @ np.conj(np.swapaxes(frame_matrix(w), -1, -2))


def conormal_from_gradient(dz, dzb):
    """Bu (frame) from Wirtinger gradients of the standard coefficients.
    dz[..., i, j] = d(u_i)/dz_j with u_0 = s, u_1 = t."""
    A1 = dz[..., 0, 0] + dz[..., 1, 1]
    A2 = dzb[..., 1, 0] - dzb[..., 0, 1]
    return np.stack([-2 * A2, 2 * A1], axis=-1)


# ------------------------------------------------------------ volume data

@dataclass(frozen=True)
class VolumeData:
    """Datum f of the problem.  ``form`` is a Form01; ``samples`` caches its
    standard coefficients on an interior grid when one is supplied."""
    form: Form01
    grid: object = None
    samples: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.grid is not None and self.samples is None:
            s = self.standard(self.grid.nodes)
            if not np.all(np.isfinite(s)):
                raise ValueError("non-finite samples of f")
            object.__setattr__(self, "samples", s)

    def standard(self, z):
        return change_basis(self.form, "standard")(z)

    def frame(self, z):
        return change_basis(self.form, "frame")(z)

    @property
    def is_zero(self):
        f = change_basis(self.form, "standard")
        return f.c1 == 0 and f.c2 == 0


def _as_volume(f):
    if isinstance(f, VolumeData):
        return f
    if isinstance(f, Form01):
        return VolumeData(f)
    raise TypeError("expected VolumeData or Form01")


def newton_potential(f, z, rule=VolumeRule(), basis="standard", gradient=False,
                     allow_boundary=False, chunk=16):
    """N f(z) = int G0(z, w) f(w) dV(w) at targets z (..., 2).

    The rule is centred on each target (w = z + rho v), which removes the
    1/rho^2 singularity exactly.  ``basis='frame'`` integrates the matrix
    kernel against the frame coefficients of f instead.  With ``gradient``
    the Wirtinger derivatives of the standard coefficients are returned too
    (arrays (..., 2, 2), [i, j] = d u_i / d z_j)."""
    f = _as_volume(f)
    z = as_points(z)
    shape = z.shape[:-1]
    zf = z.reshape(-1, 2)
    r = norm(zf)
    if np.any(r > 1 + 1e-12) or (not allow_boundary and np.any(r >= 1 - 1e-14)):
        raise DomainError("Newton potential targets must lie inside the ball")
    if basis == "frame" and np.any(r < 1e-14):
        raise DomainError("frame basis undefined at the origin")
    out = np.zeros((len(zf), 2), dtype=complex)
    gz = np.zeros((len(zf), 2, 2), dtype=complex)
    gzb = np.zeros((len(zf), 2, 2), dtype=complex)
    if f.is_zero:
        return (out.reshape(shape + (2,)), gz.reshape(shape + (2, 2)),
                gzb.reshape(shape + (2, 2))) if gradient else out.reshape(shape + (2,))
    x, wx = gauss_legendre(rule.n_rho, 0.0, 1.0)
    # targets with equal |z| share the reference rule; batch them
    radii = np.round(r, 13)
    for a in np.unique(radii):
        idx = np.flatnonzero(radii == a)
        for s in range(0, len(idx), chunk):
            ii = idx[s:s + chunk]
            v, R, wd = volume_polar_nodes(zf[ii], rule)          # (t, m, 2), (m,), (m,)
            rho = R[:, None] * x[None, :]                          # (m, k)
            wr = (wd * R)[:, None] * wx[None, :]                   # d rho d sigma_v
            pts = zf[ii, None, None, :] + rho[None, :, :, None] * v[:, :, None, :]
            if basis == "frame":
                fv = f.frame(pts)
                fv = np.einsum("tmkji,tmkj->tmki", np.conj(frame_matrix(pts)), fv)
            else:
                fv = f.standard(pts)                               # (t, m, k, 2)
            out[ii] = -np.einsum("mk,tmkc->tc", wr * rho, fv) / FOUR_PI2
            if gradient:
                Fm = np.einsum("mk,tmkc->tmc", wr, fv)             # (t, m, 2)
                gz[ii] = -np.einsum("tmc,tmj->tcj", Fm, np.conj(v)) / FOUR_PI2
                gzb[ii] = -np.einsum("tmc,tmj->tcj", Fm, v) / FOUR_PI2
    if basis == "frame":
        out = np.einsum("nij,nj->ni", frame_matrix(zf), out)
    out = out.reshape(shape + (2,))
    if gradient:
        return out, gz.reshape(shape + (2, 2)), gzb.reshape(shape + (2, 2))
    return out


def newton_boundary_traces(f, points, rule=VolumeRule(), method="direct", h=0.02):
    """gamma N f and B N f (frame components) at unit points.

    ``direct`` evaluates the polar rule with the target on the sphere (the
    integrand stays regular there); ``extrapolate`` uses linear
    extrapolation from radii 1-h and 1-2h."""
    points = as_points(points)
    if method == "direct":
        val, gz, gzb = newton_potential(f, points, rule, gradient=True, allow_boundary=True)
    elif method == "extrapolate":
        a = newton_potential(f, (1 - h) * points, rule, gradient=True)
        b = newton_potential(f, (1 - 2 * h) * points, rule, gradient=True)
        val, gz, gzb = (2 * p - q for p, q in zip(a, b))
    else:
        raise ValueError(f"unknown trace method {method!r}")
    gamma = np.einsum("...ij,...j->...i", frame_matrix(points), val)
    B = conormal_from_gradient(gz, gzb)
    return gamma, B, val


# ------------------------------------------------------- layer potentials

@dataclass(frozen=True)
class LayerDensity:
    field: BoundaryField
    role: str = "single"

    def __post_init__(self):
        if self.role not in ("single", "double"):
            raise ValueError("role must be 'single' or 'double'")


def _density_values(d):
    if isinstance(d, LayerDensity):
        d = d.field
    return d.values, d.grid


def _interior_targets(z):
    z = as_points(z)
    if np.any(norm(z) >= 1 - 1e-14):
        raise DomainError("layer potentials are evaluated at interior points only; "
                          "use the boundary operators for traces")
    return z


def single_layer(phi, z, basis="frame", chunk=256):
    """SL phi at interior points, plain grid quadrature."""
    z = _interior_targets(z)
    vals, grid = _density_values(phi)
    zf = z.reshape(-1, 2)
    out = np.empty((len(zf), 2), dtype=complex)
    # standard output: E(z, w) M(w)^H phi(w)
    mw = np.einsum("nji,nj->ni", np.conj(frame_matrix(grid.nodes)), vals) * grid.weights[:, None]
    for s in range(0, len(zf), chunk):
        E = box_kernel(zf[s:s + chunk, None, :], grid.nodes[None])
        out[s:s + chunk] = E @ mw
    return _finish(out, zf, z.shape[:-1], basis)


def double_layer(psi, z, basis="frame", chunk=256):
    """DL psi at interior points, plain grid quadrature."""
    z = _interior_targets(z)
    vals, grid = _density_values(psi)
    zf = z.reshape(-1, 2)
    out = np.empty((len(zf), 2), dtype=complex)
    wv = vals * grid.weights[:, None]
    for s in range(0, len(zf), chunk):
        K = _qdl_std(zf[s:s + chunk, None, :], grid.nodes[None])
        out[s:s + chunk] = np.einsum("tnij,nj->ti", K, wv)
    return _finish(out, zf, z.shape[:-1], basis)


def conormal_single_layer(phi, z, chunk=256):
    """B(SL phi) at interior points (frame output)."""
    z = _interior_targets(z)
    vals, grid = _density_values(phi)
    zf = z.reshape(-1, 2)
    out = np.empty((len(zf), 2), dtype=complex)
    wv = vals * grid.weights[:, None]
    for s in range(0, len(zf), chunk):
        K = bsl_kernel(zf[s:s + chunk, None, :], grid.nodes[None])
        out[s:s + chunk] = np.einsum("tnij,nj->ti", K, wv)
    return out.reshape(z.shape)


def _finish(std, zf, shape, basis):
    if basis == "frame":
        std = np.einsum("nij,nj->ni", frame_matrix(zf), std)
    elif basis != "standard":
        raise ValueError(f"unknown basis {basis!r}")
    return std.reshape(shape + (2,))


def green_reconstruct(f, psi, phi, z, rule=VolumeRule(), basis="frame"):
    """u(z) = N f(z) + SL phi(z) - DL psi(z), with psi = gamma u, phi = B u."""
    z = _interior_targets(z)
    out = single_layer(phi, z, "standard") - double_layer(psi, z, "standard")
    if f is not None:
        out = out + newton_potential(f, z, rule)
    zf = z.reshape(-1, 2)
    return _finish(out.reshape(-1, 2), zf, z.shape[:-1], basis)


# ---------------------------------- layer potentials near the boundary

def near_boundary_layer(kind, density, z0, h, rule=PolarRule(), levels=6):
    """Layer potential of a callable frame density at z = (1-h) z0, using a
    polar rule centred at the boundary point z0 with geometric grading of
    the polar angle towards the scale h.  kind in {'SL', 'DL', 'BSL'}."""
    z0 = as_points(z0)
    s2 = s2_rule(rule.n_s2)
    kern = {"SL": sl_kernel, "DL": dl_kernel, "BSL": bsl_kernel}[kind]
    width = max(h, 1e-6)
    th, wt = composite_gauss(graded_intervals(0.0, np.pi, 0.0, width), rule.n_theta)
    V = tangent_directions(z0, s2)
    W = (np.cos(th)[:, None, None] * z0[None, None, :]
         + np.sin(th)[:, None, None] * V[None])
    W = W.reshape(-1, 2)
    wq = (wt * np.sin(th) ** 2)[:, None] * s2.weights[None, :]
    z = (1 - h) * z0
    K = kern(z[None, :], W)
    return np.einsum("q,qij,qj->i", wq.ravel(), K, density(W))


def dump_potential_csv(path, z, values):
    """CSV of complex field values over interior points."""
    z = as_points(z).reshape(-1, 2)
    values = np.asarray(values).reshape(len(z), -1)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        head = ["x1", "y1", "x2", "y2"]
        for k in range(values.shape[1]):
            head += [f"c{k + 1}_re", f"c{k + 1}_im"]
        wr.writerow(head)
        for p, v in zip(z, values):
            row = [p[0].real, p[0].imag, p[1].real, p[1].imag]
            for c in v:
                row += [c.real, c.imag]
            wr.writerow([repr(float(x)) for x in row])
