"""Independent ground-truth generators.

Closed-form free propagator, a radial finite-difference reduction of
H = -Delta + V on the s-wave sector, and spectral syntheses built from
it.  Everything here is deliberately implementation-independent of the
modules it cross-checks: separate discretization (uniform radial grid,
second-order finite differences) and no shared operator assembly.
"""

from __future__ import annotations

import dataclasses

import numpy as np
import scipy.linalg

__all__ = [
    "free_propagator_exact",
    "RadialOperator",
    "build_radial_operator",
    "radial_resolvent",
    "radial_eigensolve",
    "radial_threshold_coupling",
    "free_wave_kernel_radial",
    "free_schrodinger_kernel_radial",
]


def free_propagator_exact(t, r):
    """Kernel of e^{it(-Delta)} in 4D: e^{-i r^2 / 4t} / (4 pi i t)^2.

    The phase convention matches the flow e^{itH} with H = -Delta, so
    |value| = 1/(4 pi t)^2 independently of r.
    """
    t = complex(t)
    if t == 0:
        raise ValueError("free propagator undefined at t = 0")
    return np.exp(-1j * r**2 / (4.0 * t)) / (4.0j * np.pi * t) ** 2


# ---------------------------------------------------------------------------
# radial reduction

@dataclasses.dataclass
class RadialOperator:
    """s-wave radial Hamiltonian -u'' - (3/r) u' + V(r) u on (0, R].

    Discretized in conservative form -(r^3 u')'/r^3 on a uniform grid
    r_i = i h, i = 1..n, with a zero-flux (regularity) condition at
    r = 0 and a Dirichlet condition at r = R = (n+1) h.  The operator
    is symmetric under the r^3 dr inner product (weights r_i^3 h) by
    construction.
    """

    r: np.ndarray          # nodes, shape (n,)
    h: float               # uniform step
    diag: np.ndarray       # tridiagonal main diagonal (u coordinates)
    off: np.ndarray        # sub/super diagonal, shape (n-1,)
    weights: np.ndarray    # r^3 h quadrature weights
    R: float               # Dirichlet radius
    potential_radius: float

    def matvec(self, u):
        out = self.diag * u
        out[:-1] += self.off * u[1:]
        out[1:] += self.off * (self.weights[:-1] / self.weights[1:]) * u[:-1]
        return out

    def symmetrized(self):
        """(d, e): the tridiagonal of W^{1/2} A W^{-1/2}, exactly symmetric."""
        s = np.sqrt(self.weights)
        d = self.diag.copy()
        e = self.off * s[:-1] / s[1:]
        return d, e

    def symmetry_defect(self):
        """Max |<u, Av> - <Au, v>| weighted mismatch over a probe basis."""
        rng = np.random.default_rng(7)
        worst = 0.0
        for _ in range(4):
            u = rng.standard_normal(self.r.size)
            v = rng.standard_normal(self.r.size)
            a = float(np.sum(self.weights * u * self.matvec(v)))
            b = float(np.sum(self.weights * self.matvec(u) * v))
            scale = max(abs(a), abs(b), 1.0)
            worst = max(worst, abs(a - b) / scale)
        return worst


def build_radial_operator(vfun, R=8.0, n=1600, potential_radius=1.0):
    """Assemble the radial operator for a radial potential V(r).

    vfun maps an array of radii to potential values; R must be at least
    four potential radii so the Dirichlet wall sits far from supp V.
    """
    if R < 4.0 * potential_radius:
        raise ValueError("Dirichlet radius must be >= 4x potential radius")
    h = R / (n + 1)
    r = h * np.arange(1, n + 1)
    chalf_hi = (r + 0.5 * h) ** 3          # r^3 at i + 1/2
    chalf_lo = (r - 0.5 * h) ** 3          # r^3 at i - 1/2
    # regularity at r = 0: zero flux through the origin cell face
    chalf_lo[0] = 0.0
    diag = (chalf_hi + chalf_lo) / (r**3 * h**2) + vfun(r)
    # u-coordinate coupling A_{i,i+1} = -c_{i+1/2}/(r_i^3 h^2)
    off = -chalf_hi[:-1] / (r[:-1] ** 3 * h**2)
    return RadialOperator(r=r, h=h, diag=diag, off=off,
                          weights=r**3 * h, R=R,
                          potential_radius=potential_radius)


def radial_resolvent(sign, lam, rop, source, eps=None):
    """(H_rad - lam^2 -/+ i eps)^{-1} source, extrapolated eps -> 0.

    Banded complex solves at eps and eps/2, combined by two-point
    Richardson extrapolation (the eps-dependence is linear on the
    continuous spectrum).  sign +1 takes the +i eps limit from above.
    The absorption must stay above the finite-box level spacing
    (~ pi lambda / R) or the Dirichlet reflections survive; the default
    eps = 20/R respects that for lambda = O(1) boxes.
    """
    if eps is None:
        eps = 20.0 / rop.R
    if sign not in (+1, -1):
        raise ValueError("sign must be +1 or -1")
    source = np.asarray(source, dtype=complex)

    def solve(e):
        shift = lam**2 + 1j * sign * e
        n = rop.r.size
        ab = np.zeros((3, n), dtype=complex)
        # u-coordinate tridiagonal: A_{i,i+1} = off_i and, by symmetry
        # under the r^3 weights, A_{i+1,i} = off_i w_i / w_{i+1}
        ab[0, 1:] = rop.off
        ab[2, :-1] = rop.off * rop.weights[:-1] / rop.weights[1:]
        ab[1, :] = rop.diag - shift
        return scipy.linalg.solve_banded((1, 1), ab, source)

    u1 = solve(eps)
    u2 = solve(0.5 * eps)
    return 2.0 * u2 - u1


def radial_eigensolve(rop, k=10):
    """Lowest k eigenpairs of the radial operator.

    Returns (eigenvalues, eigenvectors) with eigenvectors orthonormal in
    the r^3 dr inner product (columns of the second array).
    """
    d, e = rop.symmetrized()
    vals, vecs = scipy.linalg.eigh_tridiagonal(
        d, e, select="i", select_range=(0, k - 1))
    s = np.sqrt(rop.weights)
    u = vecs / s[:, None]
    norms = np.sqrt(np.sum(rop.weights[:, None] * u**2, axis=0))
    return vals, u / norms[None, :]


def radial_threshold_coupling(make_vfun, bracket, R=8.0, n=1600,
                              potential_radius=1.0, tol=1e-10):
    """Coupling g* where the lowest radial eigenvalue crosses zero.

    make_vfun(g) returns a radial potential; bisection on the sign of
    the lowest eigenvalue over the bracket.  Cross-checks tune_coupling
    for radial potentials, where the s-wave channel carries the
    resonance.
    """
    glo, ghi = bracket

    def lowest(g):
        rop = build_radial_operator(make_vfun(g), R=R, n=n,
                                    potential_radius=potential_radius)
        d, e = rop.symmetrized()
        vals = scipy.linalg.eigh_tridiagonal(
            d, e, select="i", select_range=(0, 0), eigvals_only=True)
        return float(vals[0])

    flo, fhi = lowest(glo), lowest(ghi)
    if not (flo > 0 > fhi):
        raise ValueError("bracket does not straddle the zero crossing")
    while ghi - glo > tol * max(1.0, abs(ghi)):
        gm = 0.5 * (glo + ghi)
        if lowest(gm) > 0:
            glo = gm
        else:
            ghi = gm
    return 0.5 * (glo + ghi)


# ---------------------------------------------------------------------------
# free-flow spectral syntheses (V = 0 oracles for the propagator module)

def _synthesis(t, r_eval, weight, R, n, nmodes, eps):
    """Kernel K(t; r, 0) = (1/2pi^2) sum_k f(mu_k) e_k(r) e_k(0).

    f(mu) = weight(mu) e^{-eps mu}; e_k(0) is extrapolated from the
    first two nodes using the regular s-wave behavior u ~ a + b r^2.
    The 1/2pi^2 converts r^3 dr orthonormality to 4D orthonormality.
    """
    rop = build_radial_operator(lambda r: np.zeros_like(r), R=R, n=n,
                                potential_radius=R / 4.0)
    vals, vecs = radial_eigensolve(rop, k=nmodes)
    r1, r2 = rop.r[0], rop.r[1]
    e0 = vecs[0] - r1**2 * (vecs[1] - vecs[0]) / (r2**2 - r1**2)
    idx = int(np.argmin(np.abs(rop.r - r_eval)))
    er = vecs[idx]
    f = weight(np.maximum(vals, 0.0), t) * np.exp(-eps * np.maximum(vals, 0.0))
    return complex(np.sum(f * er * e0) / (2.0 * np.pi**2))


def free_wave_kernel_radial(t, r, eps=0.05, R=60.0, n=8000, nmodes=600):
    """sin(t sqrt(-Delta))/sqrt(-Delta) kernel at |x-y| = r, regularized.

    Spectral synthesis over the discrete radial modes with the Gaussian
    energy regularizer e^{-eps mu}; valid while t + r stays well inside
    the Dirichlet radius (no reflected wave).
    """
    if t + r > 0.7 * R:
        raise ValueError("evaluation too close to the Dirichlet wall")

    def weight(mu, tt):
        lam = np.sqrt(mu)
        out = np.where(lam > 0, np.sin(tt * lam) / np.where(lam > 0, lam, 1.0),
                       tt)
        return out

    return _synthesis(t, r, weight, R, n, nmodes, eps)


def free_schrodinger_kernel_radial(t, r, eps=0.05, R=60.0, n=4000,
                                   nmodes=400):
    """e^{it(-Delta)} kernel at |x-y| = r with the e^{-eps mu} regularizer."""
    def weight(mu, tt):
        return np.exp(1j * tt * mu)

    return _synthesis(t, r, weight, R, n, nmodes, eps)
