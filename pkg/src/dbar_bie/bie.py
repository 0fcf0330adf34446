"""Boundary operators S, T, T*, R on S^3, the reduced boundary integral
system and its least-squares solution, and the rigidity computation.

Operators act on frame-basis densities.  With the sign conventions of
``potentials``:

    S  = gamma SL,           T* = 2 B SL - id,
    T  = 2 gamma DL + id,    R  = -B DL,

so for every smooth u (psi = gamma u, phi = B u, f = Laplacian u)

    psi / 2 = gamma N f + S phi - T psi / 2,
    phi / 2 = B N f + T* phi / 2 + R psi.
"""
import csv
import json
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .forms import BoundaryField
from .geometry import as_points, BoundaryGrid, pairing, ConfigurationError
from .potentials import (sl_kernel, dl_kernel, bsl_kernel, newton_boundary_traces,
                         VolumeData, SingularEvaluation)
from .quadrature import PolarRule, VolumeRule, s2_rule, tangent_directions
from .spectral import SphericalBasis

PI2 = np.pi ** 2
KERNELS = ("S", "T", "Tstar", "R")


class QuadratureDiagnosticError(RuntimeError):
    def __init__(self, msg, exponents=None):
        super().__init__(msg)
        self.exponents = exponents


class SolverError(RuntimeError):
    pass


# ------------------------------------------------------------- kernels

def _rho2(z, w):
    return np.sum(np.abs(z - w) ** 2, axis=-1)


def _mat(a, b, c, d):
    a, b, c, d = np.broadcast_arrays(a, b, c, d)
    return np.stack([np.stack([a, b], -1), np.stack([c, d], -1)], -2)


def _kernel_generic(name, z, w, delta):
    p = lambda kind: pairing(kind, z, w, delta)
    r2 = _rho2(z, w)
    if name == "S":
        return _mat(p("Lw.Lz"), p("Nw.Lz"), p("Lw.Nz"), p("Nw.Nz")) / (2 * PI2 * r2[..., None, None])
    if name == "T":
        K = _mat(p("Nz.(w-z)"), p("(w-z).Lz"), -p("Lz.(w-z)"), p("(w-z).Nz"))
        return -K / (PI2 * r2[..., None, None] ** 2)
    if name == "Tstar":
        K = _mat(p("(z-w).Nw"), -p("(z-w).Lw"), p("Lw.(z-w)"), p("Nw.(z-w)"))
        return -K / (PI2 * r2[..., None, None] ** 2)
    if name == "R":
        d = 4 / (PI2 * r2 ** 2)
        return _mat(d, 0 * d, 0 * d, d)
    raise KeyError(name)


def _kernel_ball(name, z, w):
    z1, z2, w1, w2 = z[..., 0], z[..., 1], w[..., 0], w[..., 1]
    c = np.conj
    r2 = _rho2(z, w)
    if name == "S":
        K = _mat(c(w2) * z2 + c(w1) * z1, w1 * z2 - w2 * z1,
                 c(w2) * c(z1) - c(w1) * c(z2), w1 * c(z1) + w2 * c(z2))
        return K / (4 * PI2 * r2[..., None, None])
    if name == "T":
        K = _mat(-1 + z1 * c(w1) + z2 * c(w2), z2 * w1 - z1 * w2,
                 -(c(z2) * c(w1) - c(z1) * c(w2)), -1 + c(z1) * w1 + c(z2) * w2)
        return -K / (PI2 * r2[..., None, None] ** 2)
    if name == "Tstar":
        K = _mat(-1 + c(w1) * z1 + c(w2) * z2, -w2 * z1 + w1 * z2,
                 c(w2) * c(z1) - c(w1) * c(z2), -1 + w1 * c(z1) + w2 * c(z2))
        return -K / (PI2 * r2[..., None, None] ** 2)
    if name == "R":
        d = 4 / (PI2 * r2 ** 2)
        return _mat(d, 0 * d, 0 * d, d)
    raise KeyError(name)


def _kernel_derived(name, z, w):
    if name == "S":
        return sl_kernel(z, w)
    if name == "T":
        return 2 * dl_kernel(z, w)
    if name == "Tstar":
        return 2 * bsl_kernel(z, w)
    if name == "R":
        return np.zeros(np.broadcast_shapes(z.shape, w.shape)[:-1] + (2, 2), dtype=complex)
    raise KeyError(name)


def kernel_eval(name, z, w, mode="ball", delta=None):
    """2x2 kernel matrix of S, T, Tstar or R at boundary points z != w.

    mode 'generic': pairing formulas with the frame from the gradient of
    delta (analytic for the ball, finite differences for a callable delta);
    'ball': closed forms on S^3; 'derived': first-principles kernels from the
    potentials (for R this is the zero kernel, see ``apply_operator``)."""
    if name not in KERNELS:
        raise KeyError(f"unknown kernel {name!r}; choose from {KERNELS}")
    z, w = np.broadcast_arrays(as_points(z), as_points(w))
    if np.any(_rho2(z, w) == 0):
        raise SingularEvaluation("kernel evaluated at z = w")
    if mode == "generic":
        return _kernel_generic(name, z, w, delta)
    if mode == "ball":
        return _kernel_ball(name, z, w)
    if mode == "derived":
        return _kernel_derived(name, z, w)
    raise ValueError(f"unknown kernel mode {mode!r}")


# ------------------------------------------------- singular quadrature

@dataclass(frozen=True)
class OperatorRule:
    """Orders of the target-centred polar rule and of the epsilon sequence.

    method 'direct' integrates theta over [0, pi]: after the antipodally
    symmetric S^2 sum the integrands of S, T, T* are bounded and even in
    theta, so Gauss-Legendre realizes the principal value directly.
    method 'extrapolate' excludes the cap |z-w| < eps for eps = eps0 / 2^k
    and extrapolates to eps -> 0.
    """
    n_theta: int = 24
    n_s2: int = 10
    eps0: float = 0.4
    eps_levels: int = 4
    method: str = "direct"
    r_variant: str = "derived"

    def __post_init__(self):
        if self.method not in ("direct", "extrapolate"):
            raise ConfigurationError(f"unknown method {self.method!r}")
        if self.r_variant not in ("derived", "printed"):
            raise ConfigurationError(f"unknown r_variant {self.r_variant!r}")

    @property
    def polar(self):
        return PolarRule(self.n_theta, self.n_s2)


def _kernel_fn(name, mode):
    return lambda z, w: kernel_eval(name, z, w, mode)


def _polar_samples(z, theta, s2):
    V = tangent_directions(z, s2)
    return (np.cos(theta)[:, None, None] * z[None, None, :]
            + np.sin(theta)[:, None, None] * V[None])


def _theta_integral(name, z, density, rule, a, mode, n=None):
    """int_{theta in [a, pi]} sin^2 theta int_{S^2} K(z, w) psi(w)."""
    n = n or rule.n_theta
    s2 = s2_rule(rule.n_s2)
    x, wx = np.polynomial.legendre.leggauss(n)
    th = a + (np.pi - a) * 0.5 * (x + 1)
    wt = (np.pi - a) * 0.5 * wx
    W = _polar_samples(z, th, s2)                       # (nt, m, 2)
    K = kernel_eval(name, z[None, None, :], W, mode)      # (nt, m, 2, 2)
    dens = density(W.reshape(-1, 2)).reshape(W.shape[:2] + (2,) + density_shape(density))
    wq = (wt * np.sin(th) ** 2)[:, None] * s2.weights[None, :]
    return np.einsum("tm,tmij,tmj...->i...", wq, K, dens)


def density_shape(density):
    return getattr(density, "trailing", ())


def _fp_R_direct(z, density, rule):
    """Finite part of 4/pi^2 int psi / |z-w|^4 with the divergent part
    subtracted analytically:
    (1/pi^2) [int_0^pi cot^2(theta/2) (Psi(theta) - Psi(0)) d theta - pi Psi(0)],
    Psi(theta) = int_{S^2} psi(w(theta, v)) d Omega(v)."""
    s2 = s2_rule(rule.n_s2)
    th, wt = np.polynomial.legendre.leggauss(rule.n_theta)
    th = 0.5 * np.pi * (th + 1)
    wt = 0.5 * np.pi * wt
    W = _polar_samples(z, th, s2)
    tr = density_shape(density)
    dens = density(W.reshape(-1, 2)).reshape(W.shape[:2] + (2,) + tr)
    Psi = np.einsum("m,tm...->t...", s2.weights, dens)
    Psi0 = 4 * np.pi * density(z[None, :]).reshape((2,) + tr)
    cot2 = 1.0 / np.tan(th / 2) ** 2
    cot2 = cot2.reshape((-1,) + (1,) * (Psi.ndim - 1))
    return (np.einsum("t,t...->...", wt, cot2 * (Psi - Psi0[None])) - np.pi * Psi0) / PI2


def _exclusion_sequence(name, z, density, rule, mode):
    eps = rule.eps0 / 2.0 ** np.arange(rule.eps_levels)
    vals = []
    for e in eps:
        a = 2 * np.arcsin(e / 2)
        if name == "R":
            vals.append(_fp_R_excluded(z, density, rule, a))
        else:
            vals.append(_theta_integral(name, z, density, rule, a, mode, n=rule.n_theta + 8))
    return eps, np.array(vals)


def _fp_R_excluded(z, density, rule, a):
    """R integral over theta in [a, pi] with a logarithmic substitution that
    resolves the 1/theta^2 growth."""
    s2 = s2_rule(rule.n_s2)
    x, wx = np.polynomial.legendre.leggauss(rule.n_theta + 8)
    s = 0.5 * (x + 1)
    L = np.log(np.pi / a)
    th = a * np.exp(L * s)
    wt = 0.5 * wx * L * th
    W = _polar_samples(z, th, s2)
    tr = density_shape(density)
    dens = density(W.reshape(-1, 2)).reshape(W.shape[:2] + (2,) + tr)
    Psi = np.einsum("m,tm...->t...", s2.weights, dens)
    cot2 = (1.0 / np.tan(th / 2) ** 2).reshape((-1,) + (1,) * (Psi.ndim - 1))
    return np.einsum("t,t...->...", wt, cot2 * Psi) / PI2


def fit_exponent(eps, vals):
    """Empirical exponent p of the leading eps-dependence I(eps) ~ I0 + c eps^p
    from successive differences (ratio-2 sequence)."""
    d = np.abs(np.diff(vals, axis=0)).reshape(len(vals) - 1, -1).max(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.log(d[:-1] / d[1:]) / np.log(eps[0] / eps[1])
    return p, d


def extrapolate(eps, vals, kind="pv"):
    """Least-squares fit of I(eps) = A + sum_p c_p eps^p and return A.

    pv: p = 1, 3, 5, ... (the excluded cap of an even bounded integrand);
    fp: p = -1 plus 1, 3, ...; the finite part is A."""
    n = len(eps)
    if kind == "pv":
        powers = [2 * j + 1 for j in range(n - 1)]
    elif kind == "fp":
        powers = [-1] + [2 * j + 1 for j in range(n - 2)]
    else:
        raise ValueError(kind)
    V = np.stack([np.ones_like(eps)] + [eps ** p for p in powers], axis=1)
    flat = vals.reshape(n, -1)
    coef = np.linalg.solve(V, flat) if V.shape[0] == V.shape[1] else np.linalg.lstsq(V, flat, rcond=None)[0]
    return coef[0].reshape(vals.shape[1:]), dict(zip(powers, coef[1:]))


def apply_operator(name, density, z, rule=OperatorRule(), mode="derived", diagnostics=False):
    """Apply S, T, Tstar or R to a frame density at boundary targets z.

    ``density`` is a callable (points (n, 2) -> values (n, 2)) or a
    BoundaryField, which is replaced by its spectral interpolant.  R uses
    ``rule.r_variant``: 'derived' (R = -B DL, which vanishes identically on
    the ball) or 'printed' (the closed-form finite-part kernel)."""
    if name not in KERNELS:
        raise KeyError(f"unknown operator {name!r}; choose from {KERNELS}")
    if isinstance(density, BoundaryField):
        density = interpolant(density)
    z = as_points(z)
    zf = z.reshape(-1, 2)
    out = np.zeros((len(zf), 2), dtype=complex)
    diag = []
    if name == "R" and rule.r_variant == "derived":
        return (out.reshape(z.shape), diag) if diagnostics else out.reshape(z.shape)
    for i, zi in enumerate(zf):
        if rule.method == "direct":
            if name == "R":
                out[i] = _fp_R_direct(zi, density, rule)
            else:
                out[i] = _theta_integral(name, zi, density, rule, 0.0, mode)
        elif rule.method == "extrapolate":
            eps, vals = _exclusion_sequence(name, zi, density, rule, mode)
            p, d = fit_exponent(eps, vals)
            kind = "fp" if name == "R" else "pv"
            scale = max(np.abs(vals).max(), 1e-300)
            if kind == "pv" and np.any((p < 0.5) & (d[1:] > 1e-9 * scale)):
                # a divergent term appeared: take the finite part and log it
                kind = "fp"
                diag.append({"target": i, "exponents": p.tolist(), "switched_to": "finite-part"})
            out[i], _ = extrapolate(eps, vals, kind)
            diag.append({"target": i, "exponents": [float(x) for x in p]})
        else:
            raise ValueError(f"unknown method {rule.method!r}")
    out = out.reshape(z.shape)
    return (out, diag) if diagnostics else out


class _Interp:
    def __init__(self, basis, coeffs):
        self.basis, self.coeffs = basis, coeffs

    def __call__(self, w):
        return self.basis.evaluate(w) @ self.coeffs


def interpolant(field, degree=None):
    """Spectral interpolant of a BoundaryField (degree = grid degree)."""
    g = field.grid
    P = degree if degree is not None else (g.degree if g.degree > 0 else 2 * (g.n_u - 2))
    basis = SphericalBasis(P)
    return _Interp(basis, basis.projector(g) @ field.values)


class _BasisDensity:
    """All basis functions in one density component at once; values have
    shape (n, 2, B) (component j carries Y_b, the other is zero)."""

    def __init__(self, basis, j):
        self.basis, self.j = basis, j
        self.trailing = (basis.size,)

    def __call__(self, w):
        Y = self.basis.evaluate(w)
        out = np.zeros(Y.shape[:-1] + (2, Y.shape[-1]), dtype=complex)
        out[..., self.j, :] = Y
        return out


def operator_on_basis(name, grid, basis, rule=OperatorRule(), mode="derived"):
    """O[r, i, j, b] = (K_ij Y_b)(ring base point r)."""
    nr = len(grid.ring_base)
    O = np.zeros((nr, 2, 2, basis.size), dtype=complex)
    if name == "R" and rule.r_variant == "derived":
        return O
    for j in range(2):
        dens = _BasisDensity(basis, j)
        for r, zb in enumerate(grid.ring_base.astype(complex)):
            if rule.method == "direct":
                if name == "R":
                    v = _fp_R_direct(zb, dens, rule)
                else:
                    v = _theta_integral(name, zb, dens, rule, 0.0, mode)
            else:
                eps, vals = _exclusion_sequence(name, zb, dens, rule, mode)
                v, _ = extrapolate(eps, vals, "fp" if name == "R" else "pv")
            O[r, :, j, :] = v
    return O


def operator_matrix(name, grid, rule=OperatorRule(), mode="derived", basis=None):
    """Nodal matrix (2N x 2N) of an operator: density values at the nodes
    are projected on the basis, the operator is applied to the basis
    functions at one point per ring and carried to the other nodes by the
    torus symmetry K(Dz, Dw) = Lam K(z, w) Lam^H, Lam = diag(e^{i(a+b)}, 1)."""
    blocks = operator_blocks(name, grid, rule, mode, basis)
    N = grid.size
    A = np.empty((2 * N, 2 * N), dtype=complex)
    for (i, j), blk in blocks.items():
        A[i * N:(i + 1) * N, j * N:(j + 1) * N] = blk
    return A


def operator_blocks(name, grid, rule=OperatorRule(), mode="derived", basis=None, which=None):
    basis = basis or SphericalBasis(grid.degree)
    O = operator_on_basis(name, grid, basis, rule, mode)
    C = basis.projector(grid)
    ph = basis.phases(grid)
    lam = np.stack([np.exp(1j * grid.xi.sum(axis=1)), np.ones(grid.size)], axis=1)
    out = {}
    for i in range(2):
        for j in range(2):
            if which is not None and (i, j) not in which:
                continue
            K = (lam[:, i] * np.conj(lam[:, j]))[:, None] * ph * O[grid.ring, i, j, :]
            out[(i, j)] = K @ C
    return out


# --------------------------------------------------------- the system

ROW_BLOCKS = ("eq1.1", "eq1.2", "eq2.1", "eq2.2")
DROPPED = ("eq1.2", "eq2.1")


@dataclass(frozen=True)
class BIESystem:
    """Reduced system over the unknowns (psi1, phi2) stacked on the nodes.
    Rows: the two components of each of the two boundary equations."""
    matrix: np.ndarray
    rhs: np.ndarray
    grid: BoundaryGrid
    row_labels: tuple = ROW_BLOCKS
    traces: dict = field(default_factory=dict, repr=False)
    meta: dict = field(default_factory=dict)

    def block(self, label):
        N = self.grid.size
        k = self.row_labels.index(label)
        return slice(k * N, (k + 1) * N)

    def residual_blocks(self, x):
        """Surface-L2 norm of the residual of each equation block."""
        r = self.matrix @ x - self.rhs
        w = self.grid.weights
        return {lab: float(np.sqrt(np.sum(w * np.abs(r[self.block(lab)]) ** 2)))
                for lab in self.row_labels}

    @property
    def scale(self):
        N = self.grid.size
        b = self.rhs.reshape(4, N)
        return float(np.sqrt(np.sum(self.grid.weights * np.abs(b) ** 2)))

    def to_csv(self, path):
        np.savetxt(path, np.hstack([self.matrix, self.rhs[:, None]]).view(float), delimiter=",")


def system_matrix(grid, rule=OperatorRule(), mode="derived"):
    """The 4N x 2N matrix of the reduced system."""
    N = grid.size
    basis = SphericalBasis(grid.degree)
    T = operator_blocks("T", grid, rule, mode, basis, which={(0, 0), (1, 0)})
    S = operator_blocks("S", grid, rule, mode, basis, which={(0, 1), (1, 1)})
    Ts = operator_blocks("Tstar", grid, rule, mode, basis, which={(0, 1), (1, 1)})
    R = operator_blocks("R", grid, rule, mode, basis, which={(0, 0), (1, 0)})
    I = np.eye(N)
    A = np.zeros((4 * N, 2 * N), dtype=complex)
    A[0:N, :N] = 0.5 * I + 0.5 * T[(0, 0)]
    A[0:N, N:] = -S[(0, 1)]
    A[N:2 * N, :N] = 0.5 * T[(1, 0)]
    A[N:2 * N, N:] = -S[(1, 1)]
    A[2 * N:3 * N, :N] = -R[(0, 0)]
    A[2 * N:3 * N, N:] = -0.5 * Ts[(0, 1)]
    A[3 * N:, :N] = -R[(1, 0)]
    A[3 * N:, N:] = 0.5 * I - 0.5 * Ts[(1, 1)]
    return A


def assemble_reduced_system(f, grid, rule=OperatorRule(), volume_rule=VolumeRule(),
                            trace_method="direct", matrix=None):
    """Assemble the reduced system for datum f (VolumeData, Form01 or None)."""
    t0 = time.perf_counter()
    A = system_matrix(grid, rule) if matrix is None else matrix
    t1 = time.perf_counter()
    N = grid.size
    if f is None or VolumeData(f.form if isinstance(f, VolumeData) else f).is_zero:
        gam = np.zeros((N, 2), dtype=complex)
        Bn = np.zeros((N, 2), dtype=complex)
    else:
        gam, Bn, _ = newton_boundary_traces(f, grid.nodes, volume_rule, trace_method)
    rhs = np.concatenate([gam[:, 0], gam[:, 1], Bn[:, 0], Bn[:, 1]])
    t2 = time.perf_counter()
    return BIESystem(A, rhs, grid, traces={"gammaNf": gam, "BNf": Bn},
                     meta={"t_operators": t1 - t0, "t_newton": t2 - t1,
                           "r_variant": rule.r_variant, "method": rule.method})


@dataclass
class SolveReport:
    psi1: np.ndarray
    phi2: np.ndarray
    residuals: dict
    relative_residuals: dict
    dropped_residual: float
    condition: float
    ridge: float
    resolution: dict
    timings: dict
    a: complex = None
    b: complex = None
    rigidity: complex = None
    extra: dict = field(default_factory=dict)

    def to_dict(self, include_densities=False):
        d = {
            "resolution": self.resolution,
            "residual_per_block": self.residuals,
            "relative_residual_per_block": self.relative_residuals,
            "dropped_component_residual": self.dropped_residual,
            "condition_estimate": self.condition,
            "ridge": self.ridge,
            "a": _cplx(self.a),
            "b": _cplx(self.b),
            "rigidity_value": _cplx(self.rigidity),
            "timings": self.timings,
        }
        d.update(self.extra)
        if include_densities:
            d["psi1"] = [_cplx(v) for v in self.psi1]
            d["phi2"] = [_cplx(v) for v in self.phi2]
        return d

    def to_json(self, **kw):
        return json.dumps(self.to_dict(**kw), indent=2, sort_keys=True)

    def densities_to_csv(self, path, grid):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["x1", "y1", "x2", "y2", "weight", "psi1_re", "psi1_im", "phi2_re", "phi2_im"])
            for z, w, p, q in zip(grid.nodes, grid.weights, self.psi1, self.phi2):
                wr.writerow([repr(float(v)) for v in (z[0].real, z[0].imag, z[1].real, z[1].imag,
                                                      w, p.real, p.imag, q.real, q.imag)])


def _cplx(v):
    if v is None:
        return None
    v = complex(v)
    return [v.real, v.imag]


def _weighted_lstsq(A, b, w):
    """Weighted least squares.  Normal equations with a Cholesky factor when
    the weighted matrix is well conditioned (error ~ cond^2 eps), otherwise
    the SVD-based driver, with a small ridge if cond > 1e12."""
    sw = np.sqrt(np.tile(w, A.shape[0] // len(w)))
    Aw = A * sw[:, None]
    bw = b * sw
    H = Aw.conj().T @ Aw
    rhs = Aw.conj().T @ bw
    cond = _condition_estimate(H)
    ridge = 0.0
    if cond < 1e4:
        x = scipy.linalg.cho_solve(scipy.linalg.cho_factor(H), rhs)
        return x, cond, ridge
    x, _, rank, s = scipy.linalg.lstsq(Aw, bw, lapack_driver="gelsd")
    cond = float(s[0] / s[-1]) if s[-1] > 0 else np.inf
    if cond > 1e12:
        ridge = 1e-12 * float(s[0] ** 2)
        x = scipy.linalg.solve(H + ridge * np.eye(A.shape[1]), rhs, assume_a="her")
    return x, cond, ridge


def _condition_estimate(H, iters=30):
    """sqrt(lambda_max / lambda_min) of a Hermitian PSD Gram matrix by power
    and inverse power iteration (deterministic start)."""
    n = H.shape[0]
    v = np.cos(np.arange(1, n + 1) * 0.7) + 1j * np.sin(np.arange(1, n + 1) * 1.3)
    x = v / np.linalg.norm(v)
    lmax = 0.0
    for _ in range(iters):
        y = H @ x
        lmax = float(np.linalg.norm(y))
        x = y / lmax
    try:
        c = scipy.linalg.cho_factor(H)
    except np.linalg.LinAlgError:
        return np.inf
    x = v / np.linalg.norm(v)
    inv = 0.0
    for _ in range(iters):
        y = scipy.linalg.cho_solve(c, x)
        inv = float(np.linalg.norm(y))
        x = y / inv
    if not np.isfinite(inv) or inv == 0:
        return np.inf
    return float(np.sqrt(lmax * inv))


def solve_bie(system):
    """Least-squares solve of the reduced system."""
    t0 = time.perf_counter()
    N = system.grid.size
    if not np.any(system.rhs):
        x = np.zeros(2 * N, dtype=complex)
        Aw = system.matrix * np.sqrt(np.tile(system.grid.weights, 4))[:, None]
        cond, ridge = _condition_estimate(Aw.conj().T @ Aw), 0.0
    else:
        x, cond, ridge = _weighted_lstsq(system.matrix, system.rhs, system.grid.weights)
    if not np.all(np.isfinite(x)):
        raise SolverError(f"non-finite solution; condition estimate {cond:.3e}")
    res = system.residual_blocks(x)
    scale = system.scale or 1.0
    rel = {k: v / scale for k, v in res.items()}
    return SolveReport(
        psi1=x[:N], phi2=x[N:], residuals=res, relative_residuals=rel,
        dropped_residual=float(np.hypot(res["eq1.2"], res["eq2.1"])),
        condition=cond, ridge=ridge, resolution=_resolution(system),
        timings={**{k: v for k, v in system.meta.items() if k.startswith("t_")},
                 "t_solve": time.perf_counter() - t0})


def _resolution(system):
    g = system.grid
    return {"degree": g.degree, "nodes": g.size, "n_u": g.n_u, "n_xi": g.n_xi,
            "method": system.meta.get("method"), "r_variant": system.meta.get("r_variant")}


def solve_constant_velocity(system):
    """Least squares over constants psi1 = b, phi2 = a; also with b = 0.

    Returns a dict with the free and the pinned SolveReports and the
    residual of the first equation at the node (1, 0)."""
    N = system.grid.size
    A = system.matrix
    cols = np.stack([A[:, :N].sum(axis=1), A[:, N:].sum(axis=1)], axis=1)   # (b, a)
    w = system.grid.weights
    i0 = system.grid.index_of([1, 0])
    out = {}
    for label, use in (("free", [0, 1]), ("pinned", [1])):
        t0 = time.perf_counter()
        if np.any(system.rhs):
            c, cond, ridge = _weighted_lstsq(cols[:, use], system.rhs, w)
        else:
            c, cond, ridge = np.zeros(len(use), dtype=complex), 1.0, 0.0
        coef = np.zeros(2, dtype=complex)
        coef[use] = c
        x = np.concatenate([np.full(N, coef[0]), np.full(N, coef[1])])
        r = A @ x - system.rhs
        res = system.residual_blocks(x)
        scale = system.scale or 1.0
        rep = SolveReport(
            psi1=x[:N], phi2=x[N:], residuals=res,
            relative_residuals={k: v / scale for k, v in res.items()},
            dropped_residual=float(np.hypot(res["eq1.2"], res["eq2.1"])),
            condition=cond, ridge=ridge, resolution=_resolution(system),
            timings={"t_solve": time.perf_counter() - t0}, a=coef[1], b=coef[0],
            extra={"eq1_residual_at_1_0": float(abs(r[system.block('eq1.1')][i0]))})
        out[label] = rep
    f_res = out["free"].extra["eq1_residual_at_1_0"]
    p_res = out["pinned"].extra["eq1_residual_at_1_0"]
    out["ratio_at_1_0"] = p_res / f_res if f_res > 0 else (np.inf if p_res > 0 else 1.0)
    f_glob = out["free"].residuals["eq1.1"]
    p_glob = out["pinned"].residuals["eq1.1"]
    out["ratio_global"] = p_glob / f_glob if f_glob > 0 else (np.inf if p_glob > 0 else 1.0)
    return out


def rigidity_value(f, volume_rule=VolumeRule(), with_check=False):
    """t = (N f, dzbar2) at (1, 0) from the boundary trace of the Newton
    potential in the standard basis.  ``with_check`` also returns the first
    frame component of gamma N f there, which must equal -t."""
    p = np.array([[1.0 + 0j, 0.0]])
    if isinstance(f, VolumeData) and f.is_zero:
        return (0j, 0j) if with_check else 0j
    gam, _, std = newton_boundary_traces(f, p, volume_rule)
    t = complex(std[0, 1])
    return (t, complex(gam[0, 0])) if with_check else t


def full_equation_residual(f, psi, phi, grid, rule=OperatorRule(), volume_rule=VolumeRule()):
    """Residuals of both full vector boundary equations for given densities
    (used with psi = gamma u, phi = B u of a manufactured u)."""
    psi_f = BoundaryField(psi, grid)
    phi_f = BoundaryField(phi, grid)
    if f is None:
        gam = Bn = np.zeros_like(psi)
    else:
        gam, Bn, _ = newton_boundary_traces(f, grid.nodes, volume_rule)
    Sp = apply_operator("S", phi_f, grid.nodes, rule)
    Tp = apply_operator("T", psi_f, grid.nodes, rule)
    Tsp = apply_operator("Tstar", phi_f, grid.nodes, rule)
    Rp = apply_operator("R", psi_f, grid.nodes, rule)
    r1 = 0.5 * psi - (gam + Sp - 0.5 * Tp)
    r2 = 0.5 * phi - (Bn + 0.5 * Tsp + Rp)
    return r1, r2
