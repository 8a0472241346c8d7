"""Discretization: quadrature grids over supp(V), potentials, and dense
assembly of the integral operators T, P, M(sign, lam), v Gk v.

All operators act on grid functions in the weighted inner product
<f, g> = sum_i w_i f_i conj(g_i).  A DenseOperator stores the action
matrix A with A_ij = K(x_i, x_j) w_j; `sym()` returns the similarity
transform W^{1/2} A W^{-1/2}, which is an ordinary (complex) symmetric
matrix whenever the kernel is symmetric, so standard dense linear
algebra applies in symmetrized coordinates u = W^{1/2} f.

Diagonal entries of singular kernels are replaced by the analytic mean
of the kernel over the 4D ball of equal volume to the quadrature cell,
which preserves the kernel's integral and keeps assembly symmetric.
"""

import functools
from dataclasses import dataclass, field

import numpy as np

from . import specfun

MAX_GRID_SIZE = 20000

# volume of the unit ball in R^4 is pi^2/2
_BALL4_VOLUME = np.pi**2 / 2.0


# eq=False keeps identity hashing so grids can key assembly caches
@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Tensor-product Gauss-Legendre grid over a 4D box [-half, half]^4."""

    nodes: np.ndarray        # (N, 4)
    weights: np.ndarray      # (N,)
    cell_radius: np.ndarray  # (N,) equal-volume ball radius per cell
    halfwidth: float
    nodes_per_dim: int

    @property
    def size(self):
        return self.nodes.shape[0]

    @property
    def diameter(self):
        return 4.0 * self.halfwidth  # diag of the box in R^4

    def pairwise_distance(self):
        return _pairwise_distance(self)


@functools.lru_cache(maxsize=16)
def _pairwise_distance(grid):
    d = grid.nodes[:, None, :] - grid.nodes[None, :, :]
    r = np.sqrt(np.einsum("ijk,ijk->ij", d, d))
    r.setflags(write=False)  # shared cache entry; callers must copy
    return r


def build_grid(halfwidth=1.0, nodes_per_dim=6):
    """Tensor-product Gauss-Legendre quadrature over [-halfwidth, halfwidth]^4.

    nodes_per_dim must lie in [4, 16]; the total size m^4 is capped at
    MAX_GRID_SIZE because downstream dense work scales as N^3.
    """
    m = int(nodes_per_dim)
    if not 4 <= m <= 16:
        raise ValueError("nodes_per_dim must be in [4, 16]")
    if m**4 > MAX_GRID_SIZE:
        raise ValueError(f"grid size {m**4} exceeds {MAX_GRID_SIZE}")
    x1, w1 = np.polynomial.legendre.leggauss(m)
    x1 = x1 * halfwidth
    w1 = w1 * halfwidth
    grids = np.meshgrid(*([x1] * 4), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    wk = np.meshgrid(*([w1] * 4), indexing="ij")
    weights = wk[0].ravel() * wk[1].ravel() * wk[2].ravel() * wk[3].ravel()
    cell_radius = (weights / _BALL4_VOLUME) ** 0.25
    return QuadratureGrid(nodes=nodes, weights=weights,
                          cell_radius=cell_radius, halfwidth=float(halfwidth),
                          nodes_per_dim=m)


# ---------------------------------------------------------------------------
# potentials

@dataclass(frozen=True, eq=False)
class Potential:
    """Sampled potential with derived quantities V = U v^2.

    coupling holds the primary coupling strength(s); l1_norm is the
    quadrature value of ||V||_1; decay_exponent_beta is metadata (all
    shapes here are compactly supported, so any beta holds).
    """

    shape: str
    coupling: tuple
    V: np.ndarray
    v: np.ndarray
    U: np.ndarray
    l1_norm: float
    decay_exponent_beta: float = np.inf
    params: dict = field(default_factory=dict)

    @staticmethod
    def from_samples(shape, coupling, V, grid, params=None):
        V = np.asarray(V, dtype=float)
        v = np.sqrt(np.abs(V))
        U = np.where(V >= 0, 1.0, -1.0)
        l1 = float(np.sum(grid.weights * np.abs(V)))
        if l1 <= 0:
            raise ValueError("potential is identically zero")
        return Potential(shape=shape, coupling=tuple(np.atleast_1d(coupling)),
                         V=V, v=v, U=U, l1_norm=l1, params=dict(params or {}))


def _bump_profile(x, center, radius):
    # smooth compact bump (1 - |x-c|^2/rho^2)^2 on |x-c| < rho
    d = x - np.asarray(center)[None, :]
    s = np.einsum("ij,ij->i", d, d) / radius**2
    return np.where(s < 1.0, (1.0 - s) ** 2, 0.0)


def bump_potential(g, grid, radius=1.0, center=(0, 0, 0, 0)):
    """Attractive radial bump V = -g (1 - |x|^2/rho^2)^2 on |x| < rho, g > 0."""
    V = -g * _bump_profile(grid.nodes, center, radius)
    return Potential.from_samples("bump", g, V, grid,
                                  params={"radius": radius, "center": center})


def _two_lobe_profile(x):
    # x1^2 (1 - |x|^2)^2 on |x| < 1: even in x1, vanishing on the
    # reflection plane -> a smooth symmetric double well
    s = np.einsum("ij,ij->i", x, x)
    return np.where(s < 1.0, x[:, 0] ** 2 * (1.0 - s) ** 2, 0.0)


def twin_bumps_potential(g, grid):
    """Attractive double well V = -g x1^2 (1 - |x|^2)^2, even under x1 -> -x1.

    The x1-reflection symmetry splits T into even/odd sectors; an odd
    null vector f satisfies sum w v f = 0 exactly (v even), which forces
    P f = 0 and hence an eigenvalue-type obstruction.
    """
    V = -g * _two_lobe_profile(grid.nodes)
    return Potential.from_samples("twin_bumps", g, V, grid)


# Defaults below place the two structures on the second Gauss-Legendre
# node shell of the standard m = 6 grid so that both are well sampled
# while their supports stay disjoint (no shared quadrature node).
_PAIR_CENTER_OFFSET = 0.6612093864662645
_PAIR_RADIUS = 0.8
_BUMP_RADIUS = 0.62


def pair_plus_bump_potential(g, h, grid,
                             offset=_PAIR_CENTER_OFFSET,
                             pair_radius=_PAIR_RADIUS,
                             bump_radius=_BUMP_RADIUS):
    """Two spatially disjoint wells: an anisotropic one and a radial one.

    V = -g x1^2 B_A(x) - h B_B(x) with compact bump envelopes B_A
    centred at -offset e2 (radius pair_radius) and B_B at +offset e2
    (radius bump_radius).  The supports are disjoint, so the two
    couplings act almost independently: g tunes an x1-odd null vector
    (eigenvalue type, <v, f> = 0 by parity) localised on the first well
    while h tunes an s-type resonance null vector (<v, f> != 0) on the
    second.  Tuning both at once yields a kernel of rank 2 whose
    intersection with ker P has rank 1, the mixed obstruction.
    """
    x = grid.nodes
    env_a = _bump_profile(x, (0.0, -offset, 0.0, 0.0), pair_radius)
    env_b = _bump_profile(x, (0.0, offset, 0.0, 0.0), bump_radius)
    V = -(g * x[:, 0] ** 2 * env_a + h * env_b)
    return Potential.from_samples(
        "pair_plus_bump", (g, h), V, grid,
        params={"offset": offset, "pair_radius": pair_radius,
                "bump_radius": bump_radius})


def reflection_permutation(grid):
    """Index permutation realizing x1 -> -x1 on the (symmetric) grid."""
    flipped = grid.nodes.copy()
    flipped[:, 0] = -flipped[:, 0]
    order = np.lexsort(grid.nodes.T[::-1])
    order_f = np.lexsort(flipped.T[::-1])
    perm = np.empty(grid.size, dtype=int)
    perm[order] = order_f
    check = grid.nodes[perm]
    if not np.allclose(check[:, 0], -grid.nodes[:, 0], atol=1e-12):
        raise RuntimeError("grid is not symmetric under x1 reflection")
    return perm


# ---------------------------------------------------------------------------
# dense operators

@dataclass
class DenseOperator:
    """Action matrix A_ij (already including quadrature weights in j)."""

    mat: np.ndarray
    weights: np.ndarray

    def apply(self, f):
        return self.mat @ f

    def sym(self):
        """Matrix of the operator in symmetrized coordinates u = W^{1/2} f."""
        sw = np.sqrt(self.weights)
        return (sw[:, None] / sw[None, :]) * self.mat

    def norm(self):
        """L2 operator norm (spectral norm of the symmetrized matrix)."""
        return float(np.linalg.norm(self.sym(), 2))

    def adjoint_residual(self):
        """Relative weighted self-adjointness defect (0 for symmetric kernels)."""
        s = self.sym()
        n = np.linalg.norm(s)
        return float(np.linalg.norm(s - np.conj(s.T)) / n) if n else 0.0

    def __matmul__(self, other):
        if isinstance(other, DenseOperator):
            return DenseOperator(self.mat @ other.mat, self.weights)
        return self.mat @ other


def _diag_average_numeric(kernelfn, radii):
    """Ball mean (4/a^4) int_0^a f(r) r^3 dr by quadrature, per radius.

    The substitution r = a s^2 regularizes integrable singularities.
    A growth probe rejects kernels at or beyond r^{-3.5}, whose ball
    mean is not finite at this cell scale.
    """
    a = np.asarray(radii, dtype=float)
    probe = np.abs(np.array(
        [kernelfn(np.array([1e-4 * a.min()])),
         kernelfn(np.array([1e-6 * a.min()]))], dtype=complex)).ravel()
    if probe[0] > 0 and probe[1] > 0:
        growth = np.log(probe[1] / probe[0]) / np.log(1e-2)
        if growth >= 3.5:
            raise ValueError(
                f"kernel singularity r^-{growth:.2f} too strong for the "
                "ball-average diagonal (limit r^-3.5)")
    s, ws = np.polynomial.legendre.leggauss(40)
    s = 0.5 * (s + 1.0)
    ws = 0.5 * ws
    # r = a s^2, dr = 2 a s ds ->  (4/a^4) f r^3 dr = 8 s^7 f(a s^2) ds
    r = a[:, None] * s[None, :] ** 2
    vals = kernelfn(r.ravel()).reshape(r.shape)
    return 8.0 * (vals * s[None, :] ** 7) @ ws


def assemble_kernel(kernelfn, grid, diag_average=None):
    """Dense operator from a radial kernel K(|x - y|).

    Off-diagonal entries are K(|x_i - x_j|) w_j; the diagonal is the
    analytic (or, failing that, numeric) mean of the kernel over the
    equal-volume ball, times w_i.
    """
    r = grid.pairwise_distance().copy()  # cached; do not mutate in place
    np.fill_diagonal(r, 1.0)  # placeholder, overwritten below
    K = np.asarray(kernelfn(r.ravel())).reshape(r.shape)
    if diag_average is None:
        dvals = _diag_average_numeric(kernelfn, grid.cell_radius)
    else:
        dvals = np.asarray(diag_average(grid.cell_radius))
    np.fill_diagonal(K, dvals)
    return DenseOperator((K * grid.weights[None, :]).astype(K.dtype), grid.weights)


# closed-form ball means of the expansion kernels
def _g0_ball_average(a):
    return 1.0 / (2.0 * np.pi**2 * a**2)


def _g1_ball_average(a):
    return -(np.log(a) - 0.25) / (8.0 * np.pi**2)


@functools.lru_cache(maxsize=64)
def _assemble_g_kernel_cached(level, grid, constants):
    return _assemble_g_kernel(level, grid, constants)


def assemble_g_kernel(level, grid, constants=None):
    """Assemble g0/g1/g2/g3 with their closed-form diagonal ball means.

    Results are cached per (level, grid, constants); treat them as
    immutable.
    """
    return _assemble_g_kernel_cached(level, grid,
                                     constants or specfun.default_constants())


def _assemble_g_kernel(level, grid, c):
    if level == 0:
        return assemble_kernel(specfun.g0_kernel, grid, _g0_ball_average)
    if level == 1:
        return assemble_kernel(specfun.g1_kernel, grid, _g1_ball_average)
    if level == 2:
        return assemble_kernel(lambda r: specfun.g2_kernel(r, c), grid,
                               lambda a: c.c2 * 2.0 * a**2 / 3.0)
    if level == 3:
        return assemble_kernel(
            lambda r: specfun.g3_kernel(r, c), grid,
            lambda a: c.c3 * (2.0 * a**2 / 3.0) * (np.log(a) - 1.0 / 6.0))
    raise ValueError("level must be 0..3")


def assemble_resolvent(sign, lam, grid, constants=None):
    """Assemble R0(sign)(lam^2); diagonal via the small-r expansion mean."""
    c = constants or specfun.default_constants()
    _resolution_guard(lam, grid)

    def diag_avg(a):
        gs1, gs2 = specfun.g_scalars(sign, lam, c)
        return (_g0_ball_average(a) + gs1 + lam**2 * _g1_ball_average(a)
                + gs2 * c.c2 * 2.0 * a**2 / 3.0
                + lam**4 * c.c3 * (2.0 * a**2 / 3.0) * (np.log(a) - 1.0 / 6.0))

    return assemble_kernel(lambda r: specfun.free_resolvent_kernel(sign, lam, r),
                           grid, diag_avg)


def _resolution_guard(lam, grid):
    if lam <= 0:
        raise ValueError("lam must be positive")
    if lam * grid.diameter > np.pi * grid.nodes_per_dim:
        raise ValueError(
            f"lam={lam} oscillates beyond the grid resolution "
            f"(lam*diam > pi*nodes_per_dim)")


# ---------------------------------------------------------------------------
# named operators

def assemble_T(potential, grid, constants=None):
    """T = M(0) = U + v G0 v."""
    g0 = assemble_g_kernel(0, grid, constants)
    mat = np.diag(potential.U) + \
        potential.v[:, None] * g0.mat * potential.v[None, :]
    return DenseOperator(mat, grid.weights)


def assemble_P(potential, grid):
    """Rank-one projection P = v <v, .> / ||V||_1."""
    mat = np.outer(potential.v, potential.v * grid.weights) / potential.l1_norm
    return DenseOperator(mat, grid.weights)


def assemble_M(sign, lam, potential, grid, constants=None):
    """Birman-Schwinger operator M(sign, lam) = U + v R0(sign)(lam^2) v."""
    r0 = assemble_resolvent(sign, lam, grid, constants)
    mat = np.diag(potential.U).astype(complex) + \
        potential.v[:, None] * r0.mat * potential.v[None, :]
    return DenseOperator(mat, grid.weights)


def assemble_vGv(level, potential, grid, constants=None):
    """v Gk v for k = 0..3 (real symmetric in the weighted inner product)."""
    gk = assemble_g_kernel(level, grid, constants)
    mat = potential.v[:, None] * gk.mat * potential.v[None, :]
    return DenseOperator(mat, grid.weights)
