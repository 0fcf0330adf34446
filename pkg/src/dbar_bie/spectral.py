"""Polynomial basis on S^3 adapted to the Hopf grid.

Y(z) = z1^[m1] z2^[m2] P_k^(|m2|,|m1|)(|z1|^2 - |z2|^2) / norm, where
z^[m] = z^m for m >= 0 and conj(z)^|m| otherwise.  The functions with
|m1| + |m2| + 2k <= P span the restrictions to S^3 of all polynomials of
degree <= P, are orthonormal in L^2(S^3), and transform under the torus
action diag(e^{ia}, e^{ib}) by the phase e^{i(m1 a + m2 b)}.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.special import eval_jacobi, gammaln

from .geometry import as_points


def _pow(z, m):
    return z ** m if m >= 0 else np.conj(z) ** (-m)


@dataclass(frozen=True)
class SphericalBasis:
    degree: int
    index: np.ndarray = field(init=False, repr=False)   # (B, 3): m1, m2, k
    norms: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        P = self.degree
        idx = []
        for d in range(P + 1):
            for k in range(d // 2 + 1):
                rest = d - 2 * k
                for a1 in range(rest + 1):
                    a2 = rest - a1
                    for s1 in ((1, -1) if a1 else (1,)):
                        for s2 in ((1, -1) if a2 else (1,)):
                            idx.append((s1 * a1, s2 * a2, k))
        idx = np.array(idx, dtype=int)
        a = np.abs(idx[:, 1])
        b = np.abs(idx[:, 0])
        k = idx[:, 2]
        lognorm2 = (np.log(2 * np.pi ** 2) + gammaln(k + a + 1) + gammaln(k + b + 1)
                    - np.log(2 * k + a + b + 1) - gammaln(k + a + b + 1) - gammaln(k + 1))
        object.__setattr__(self, "index", idx)
        object.__setattr__(self, "norms", np.exp(0.5 * lognorm2))

    @property
    def size(self):
        return len(self.index)

    def evaluate(self, z):
        """Basis values at unit points: (..., B)."""
        z = as_points(z)
        z1, z2 = z[..., 0], z[..., 1]
        x = np.abs(z1) ** 2 - np.abs(z2) ** 2
        out = np.empty(z.shape[:-1] + (self.size,), dtype=complex)
        cache = {}
        for b, (m1, m2, k) in enumerate(self.index):
            key = (m1, m2)
            if key not in cache:
                cache[key] = _pow(z1, m1) * _pow(z2, m2)
            out[..., b] = cache[key] * eval_jacobi(k, abs(m2), abs(m1), x) / self.norms[b]
        return out

    def projector(self, grid):
        """C with coefficients = C @ nodal values (exact for degree <= P on a
        grid built for this degree)."""
        Y = self.evaluate(grid.nodes)
        return np.conj(Y).T * grid.weights[None, :]

    def phases(self, grid):
        """e^{i(m1 xi1 + m2 xi2)} for every node and basis function."""
        return np.exp(1j * (grid.xi @ self.index[:, :2].T))
