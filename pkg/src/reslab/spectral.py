"""Zero-energy classification and low-energy inverse expansions of the
Birman-Schwinger operator M(sign, lam) = U + v R0(sign)(lam^2) v.

All linear algebra happens in symmetrized coordinates u = W^{1/2} f
(see operator.DenseOperator.sym), where T, P, vGkv are genuinely real
symmetric matrices and Euclidean norms coincide with weighted-L2 norms.

Classification (by the structure of the kernel of T = M(0)):
    Regular     S1 = 0
    FirstKind   S1 != 0, S2 = 0      (resonance only)
    SecondKind  S2 = S1 != 0         (eigenvalue only)
    ThirdKind   0 != S2 != S1        (both)
where S1 projects onto ker T and S2 onto the kernel of S1 P S1 within
ran S1 (equivalently: null vectors f with <v, f> = 0).

The inverse expansions below are constructed from the block-inversion
lemma M^{-1} = (M+S1)^{-1} + (M+S1)^{-1} S1 B^{-1} S1 (M+S1)^{-1} with
B = S1 - S1 (M+S1)^{-1} S1, expanding (M+S1)^{-1} around D0 = (T+S1)^{-1}
and inverting B on ran S1 (directly for rank-one kernels, via the
2x2-block Schur complement when ran S1 splits against ran S2).
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import operator, specfun

DEFAULT_NULL_TOL = 1e-8

REGULAR = "Regular"
FIRST_KIND = "FirstKind"
SECOND_KIND = "SecondKind"
THIRD_KIND = "ThirdKind"


class SpectralGapError(RuntimeError):
    """Included/excluded eigenvalues of T are not cleanly separated."""


@dataclass(eq=False)
class SpectralData:
    """Classification output; all matrices in symmetrized coordinates."""

    grid: operator.QuadratureGrid
    potential: operator.Potential
    constants: specfun.ExpansionConstants
    tol: float
    classification: str
    T: np.ndarray
    P: np.ndarray
    vG1v: np.ndarray
    vG2v: np.ndarray
    vG3v: np.ndarray
    eigenvalues: np.ndarray
    S1_basis: np.ndarray       # (N, rank_S1), orthonormal
    S2_basis: np.ndarray       # (N, rank_S2)
    D0: np.ndarray             # (T + S1)^{-1}
    D2: np.ndarray | None      # (S2 vG1v S2)^{-1} on ran S2, as full matrix
    null_vectors: np.ndarray = field(default=None)  # function coordinates

    @property
    def rank_S1(self):
        return self.S1_basis.shape[1]

    @property
    def rank_S2(self):
        return self.S2_basis.shape[1]

    @property
    def S1(self):
        return self.S1_basis @ self.S1_basis.T

    @property
    def S2(self):
        return self.S2_basis @ self.S2_basis.T

    def M(self, sign, lam):
        """Symmetrized M(sign, lam) assembled on the stored grid."""
        return operator.assemble_M(sign, lam, self.potential, self.grid,
                                   self.constants).sym()


def _fix_vector_signs(vecs):
    # deterministic orientation: largest-magnitude component positive
    out = vecs.copy()
    for j in range(out.shape[1]):
        k = int(np.argmax(np.abs(out[:, j])))
        if out[k, j] < 0:
            out[:, j] = -out[:, j]
    return out


def null_projection(T, tol=DEFAULT_NULL_TOL):
    """Orthonormal basis of the near-kernel of symmetric T.

    Selects eigenvectors with |eigenvalue| < tol * ||T||; raises
    SpectralGapError if any excluded eigenvalue sits below 10x the
    cut, which would make the selection grid-dependent.
    """
    evals, evecs = np.linalg.eigh(T)
    scale = np.abs(evals).max()
    cut = tol * scale
    inside = np.abs(evals) < cut
    outside_min = np.abs(evals[~inside]).min() if (~inside).any() else np.inf
    if outside_min < 10.0 * cut:
        raise SpectralGapError(
            f"eigenvalue at {outside_min:.3e} within 10x of the null cut "
            f"{cut:.3e}; refine the grid or retune the coupling")
    idx = np.where(inside)[0]
    idx = idx[np.argsort(np.abs(evals[idx]), kind="stable")]
    basis = _fix_vector_signs(evecs[:, idx])
    return basis, evals[idx], evals


def compute_S2(S1_basis, P, tol=DEFAULT_NULL_TOL):
    """Basis of the kernel of S1 P S1 within ran S1.

    P is rank one (P = p p^T / ||p||^2 in symmetrized coordinates), so
    the kernel is the orthogonal complement of the projected direction
    q = S1 p inside ran S1.
    """
    r = S1_basis.shape[1]
    if r == 0:
        return S1_basis
    Tr = S1_basis.T @ P @ S1_basis           # r x r, rank <= 1
    w, v = np.linalg.eigh(Tr)
    keep = np.abs(w) < tol * max(1.0, np.abs(w).max())
    return _fix_vector_signs(S1_basis @ v[:, keep])


def classify(potential, grid, tol=DEFAULT_NULL_TOL, constants=None):
    """Full zero-energy classification; see module docstring for kinds."""
    c = constants or specfun.default_constants()
    T = operator.assemble_T(potential, grid, c).sym()
    P = operator.assemble_P(potential, grid).sym()
    vgv = [operator.assemble_vGv(k, potential, grid, c).sym()
           for k in (1, 2, 3)]
    B1, _, evals = null_projection(T, tol)
    B2 = compute_S2(B1, P, tol)
    r1, r2 = B1.shape[1], B2.shape[1]
    if r1 > r2 + 1:
        raise SpectralGapError(
            f"rank S1 = {r1} exceeds rank S2 + 1 = {r2 + 1}; "
            "discretization failure")
    if r1 == 0:
        kind = REGULAR
    elif r2 == 0:
        kind = FIRST_KIND
    elif r2 == r1:
        kind = SECOND_KIND
    else:
        kind = THIRD_KIND
    S1 = B1 @ B1.T
    D0 = np.linalg.inv(T + S1)
    D2 = None
    if r2 > 0:
        core = B2.T @ vgv[0] @ B2
        D2 = B2 @ np.linalg.inv(core) @ B2.T
    sw = np.sqrt(grid.weights)
    return SpectralData(grid=grid, potential=potential, constants=c, tol=tol,
                        classification=kind, T=T, P=P,
                        vG1v=vgv[0], vG2v=vgv[1], vG3v=vgv[2],
                        eigenvalues=evals, S1_basis=B1, S2_basis=B2,
                        D0=D0, D2=D2,
                        null_vectors=B1 / sw[:, None])


# ---------------------------------------------------------------------------
# direct and structured inversion

def invert_M_direct(spectral, sign, lam):
    """Dense inverse of M(sign, lam) by LU; returns (inverse, condition)."""
    M = spectral.M(sign, lam)
    lu, piv = scipy.linalg.lu_factor(M)
    inv = scipy.linalg.lu_solve((lu, piv), np.eye(M.shape[0], dtype=complex))
    cond = np.linalg.norm(M, 1) * np.linalg.norm(inv, 1)
    return inv, cond


def jn_invert(spectral, sign, lam):
    """M^{-1} via the kernel-shift identity with S = S1.

    M^{-1} = (M+S)^{-1} + (M+S)^{-1} S B^{-1} S (M+S)^{-1},
    B = S - S (M+S)^{-1} S, with B inverted on ran S1.
    """
    if spectral.classification == REGULAR:
        raise ValueError("shift inversion needs a nontrivial kernel")
    B1 = spectral.S1_basis
    S = spectral.S1
    M = spectral.M(sign, lam)
    A = np.linalg.inv(M + S)
    Bmat = S - S @ A @ S
    Br = B1.T @ Bmat @ B1
    Binv = B1 @ np.linalg.inv(Br) @ B1.T
    return A + A @ S @ Binv @ S @ A


def feshbach_invert(a11, a12, a21, a22):
    """2x2 block inverse via the Schur complement of the a22 block.

    Returns the four blocks of the inverse: with s = a11 - a12 a22^{-1} a21,
        [ s^{-1},                  -s^{-1} a12 a22^{-1}            ]
        [ -a22^{-1} a21 s^{-1},  a22^{-1} + a22^{-1} a21 s^{-1} a12 a22^{-1} ]
    """
    a22_inv = np.linalg.inv(np.atleast_2d(a22))
    a11 = np.atleast_2d(a11)
    a12 = np.atleast_2d(a12)
    a21 = np.atleast_2d(a21)
    s = a11 - a12 @ a22_inv @ a21
    s_inv = np.linalg.inv(s)
    b11 = s_inv
    b12 = -s_inv @ a12 @ a22_inv
    b21 = -a22_inv @ a21 @ s_inv
    b22 = a22_inv + a22_inv @ a21 @ s_inv @ a12 @ a22_inv
    return b11, b12, b21, b22


# ---------------------------------------------------------------------------
# inverse expansions

@dataclass(eq=False)
class InverseExpansion:
    """lambda-parameterized decomposition of M(sign, lam)^{-1}.

    terms is a list of (name, coefficient, matrix): coefficient is a
    callable (sign, lam) -> complex scalar, matrix is a fixed real
    matrix.  The minus branch of every coefficient is the conjugate of
    the plus branch.
    """

    kind: str
    terms: list
    scalars: dict
    remainder_order: str

    def evaluate(self, sign, lam):
        n = self.terms[0][2].shape[0]
        out = np.zeros((n, n), dtype=complex)
        for _, coef, mat in self.terms:
            out += coef(sign, lam) * mat
        return out

    def coefficients(self, sign, lam):
        return {name: coef(sign, lam) for name, coef, _ in self.terms}


def _one(sign, lam):
    return 1.0 + 0.0j


def expansion_first_kind(spectral):
    """M^{-1} = f(sign, lam) S1 + K + O(1/|log lam|).

    f = 1/(c1 gs1(sign, lam) + c2 lam^2) with c1 = ||V||_1 <phi, P phi>
    and c2 = <phi, vG1v phi> read from the assembled matrices;
    K = D0 - (||V||_1/c1)(D0 P S1 + S1 P D0).
    """
    if spectral.classification != FIRST_KIND:
        raise ValueError("expansion_first_kind needs a FirstKind potential")
    phi = spectral.S1_basis[:, 0]
    l1 = spectral.potential.l1_norm
    c1 = l1 * float(phi @ spectral.P @ phi)
    if abs(c1) < 1e-12:
        raise RuntimeError("<phi, P phi> vanishes: not a FirstKind resonance")
    c2 = float(phi @ spectral.vG1v @ phi)
    consts = spectral.constants

    def f(sign, lam):
        gs1, _ = specfun.g_scalars(sign, lam, consts)
        return 1.0 / (c1 * gs1 + c2 * lam**2)

    S1 = spectral.S1
    D0, P = spectral.D0, spectral.P
    K = D0 - (l1 / c1) * (D0 @ P @ S1 + S1 @ P @ D0)
    return InverseExpansion(
        kind=FIRST_KIND,
        terms=[("f*S1", f, S1), ("K", _one, K)],
        scalars={"c1": c1, "c2": c2},
        remainder_order="1/|log lam|")


def _inv_lam2(sign, lam):
    return 1.0 / lam**2 + 0.0j


def expansion_second_kind(spectral):
    """M^{-1} = D2/lam^2 + (gs2/lam^4) K1 + K2 + O(lam^{0+}).

    K1 = -D2 (vG2v) D2 and
    K2 = D0 - D2 (vG3v - vG1v D0 vG1v) D2 - D0 vG1v D2 - D2 vG1v D0,
    obtained by a Neumann expansion of B^{-1} on ran S1 = ran S2.
    """
    if spectral.classification != SECOND_KIND:
        raise ValueError("expansion_second_kind needs a SecondKind potential")
    D0, D2 = spectral.D0, spectral.D2
    G1, G2, G3 = spectral.vG1v, spectral.vG2v, spectral.vG3v
    consts = spectral.constants

    def g2_over_lam4(sign, lam):
        _, gs2 = specfun.g_scalars(sign, lam, consts)
        return gs2 / lam**4

    K1 = -D2 @ G2 @ D2
    K2 = D0 - D2 @ (G3 - G1 @ D0 @ G1) @ D2 - D0 @ G1 @ D2 - D2 @ G1 @ D0
    return InverseExpansion(
        kind=SECOND_KIND,
        terms=[("D2/lam^2", _inv_lam2, D2),
               ("(g2/lam^4)*K1", g2_over_lam4, K1),
               ("K2", _one, K2)],
        scalars={},
        remainder_order="lam^{0+}")


def expansion_third_kind(spectral):
    """M^{-1} = f1(sign, lam) S + D2/lam^2 + (gs2/lam^4) K1 + K + O(1/|log|).

    Gamma = S1 - S2 must have rank one; the Schur complement of the
    S2 block of B/lam^2 yields the scalar 1/f1 = c1 gs1 + (c2 + c3) lam^2
    with c1 = ||V||_1 <gam, P gam>, c2 = <gam, vG1v gam>,
    c3 = -<gam, vG1v D2 vG1v gam>, and the rank-<=2 operator
    S = Gamma - Gamma vG1v D2 - D2 vG1v Gamma + D2 vG1v Gamma vG1v D2.
    """
    if spectral.classification != THIRD_KIND:
        raise ValueError("expansion_third_kind needs a ThirdKind potential")
    if spectral.rank_S1 - spectral.rank_S2 != 1:
        raise SpectralGapError("S1 - S2 has rank != 1; discretization failure")
    # rank-one basis of Gamma = S1 - S2
    Gam_full = spectral.S1 - spectral.S2
    w, v = np.linalg.eigh(Gam_full)
    gam = _fix_vector_signs(v[:, [int(np.argmax(w))]])[:, 0]
    Gamma = np.outer(gam, gam)

    D0, D2 = spectral.D0, spectral.D2
    P, G1, G2, G3 = spectral.P, spectral.vG1v, spectral.vG2v, spectral.vG3v
    l1 = spectral.potential.l1_norm
    c1 = l1 * float(gam @ P @ gam)
    if abs(c1) < 1e-12:
        raise RuntimeError("<gam, P gam> vanishes: Gamma carries no resonance")
    c2 = float(gam @ G1 @ gam)
    c3 = -float(gam @ G1 @ D2 @ G1 @ gam)
    consts = spectral.constants

    def f1(sign, lam):
        gs1, _ = specfun.g_scalars(sign, lam, consts)
        return 1.0 / (c1 * gs1 + (c2 + c3) * lam**2)

    def g2_over_lam4(sign, lam):
        _, gs2 = specfun.g_scalars(sign, lam, consts)
        return gs2 / lam**4

    S_op = Gamma - Gamma @ G1 @ D2 - D2 @ G1 @ Gamma \
        + D2 @ G1 @ Gamma @ G1 @ D2
    K1 = -D2 @ G2 @ D2
    K = D0 - D2 @ (G3 - G1 @ D0 @ G1) @ D2 - D0 @ G1 @ D2 - D2 @ G1 @ D0 \
        - (l1 / c1) * (D0 @ P @ S_op + S_op @ P @ D0)
    return InverseExpansion(
        kind=THIRD_KIND,
        terms=[("f1*S", f1, S_op),
               ("D2/lam^2", _inv_lam2, D2),
               ("(g2/lam^4)*K1", g2_over_lam4, K1),
               ("K", _one, K)],
        scalars={"c1": c1, "c2": c2, "c3": c3},
        remainder_order="1/|log lam|")


def build_expansion(spectral):
    """Dispatch to the expansion matching the classification."""
    kind = spectral.classification
    if kind == FIRST_KIND:
        return expansion_first_kind(spectral)
    if kind == SECOND_KIND:
        return expansion_second_kind(spectral)
    if kind == THIRD_KIND:
        return expansion_third_kind(spectral)
    raise ValueError(f"no singular expansion for classification {kind}")


# ---------------------------------------------------------------------------
# coupling tuner

def sector_basis(grid, parity, axes=(0,)):
    """Orthonormal basis of a joint reflection-parity sector.

    parity is a single +-1 (applied to axes, default the x1 reflection)
    or a tuple of +-1 per entry of axes.  Columns span the subspace of
    grid functions with the requested parity under each reflection
    x_a -> -x_a; the grid must not have nodes on any reflection plane
    (true for Gauss-Legendre grids of even order).
    """
    parities = np.atleast_1d(parity).astype(int)
    if parities.size == 1 and len(axes) > 1:
        parities = np.repeat(parities, len(axes))
    n = grid.size
    # orbit decomposition under the reflection subgroup
    key = np.round(grid.nodes / (grid.halfwidth * 1e-12)).astype(np.int64)
    index = {tuple(k): i for i, k in enumerate(key)}
    basis_cols = []
    seen = np.zeros(n, dtype=bool)
    nflips = len(axes)
    for i in range(n):
        if seen[i]:
            continue
        orbit, signs = [], []
        for mask in range(1 << nflips):
            node = key[i].copy()
            s = 1
            for b, ax in enumerate(axes):
                if mask >> b & 1:
                    node[ax] = -node[ax]
                    s *= parities[b]
            j = index.get(tuple(node))
            if j is None:
                raise RuntimeError("grid not symmetric under reflections")
            orbit.append(j)
            signs.append(s)
        orbit = np.array(orbit)
        if len(np.unique(orbit)) != len(orbit):
            raise RuntimeError("grid node on a reflection plane")
        seen[orbit] = True
        col = np.zeros(n)
        col[orbit] = np.array(signs) / np.sqrt(len(orbit))
        basis_cols.append(col)
    return np.stack(basis_cols, axis=1)


def _sector_eigenvalues(make_potential, g, grid, constants, basis=None):
    pot = make_potential(g)
    T = operator.assemble_T(pot, grid, constants).sym()
    if basis is not None:
        T = basis.T @ T @ basis
    return np.linalg.eigvalsh(T)


def tune_coupling(make_potential, bracket, grid, sector=None,
                  rel_tol=1e-10, constants=None, scan_points=12):
    """Coupling g* at which T(g) develops a kernel (in the given sector).

    make_potential: g -> Potential; bracket = (g_lo, g_hi); sector is
    None, 'even' or 'odd' (x1-reflection sectors).  Eigenvalues of T(g)
    rise through zero as the attractive coupling grows, so a crossing is
    located by bisecting on the count of negative eigenvalues (robust
    against branch switching of the eigenvalue nearest zero), then
    polished by a secant iteration on the crossing branch until
    |eig| < rel_tol * ||T||.
    """
    c = constants or specfun.default_constants()
    basis = None
    if sector == "even":
        basis = sector_basis(grid, +1)
    elif sector == "odd":
        basis = sector_basis(grid, -1)
    elif sector is not None:
        parities, axes = sector
        basis = sector_basis(grid, parities, axes)

    def spectrum(g):
        return _sector_eigenvalues(make_potential, g, grid, c, basis)

    def neg_count(ev):
        return int((ev < 0).sum())

    def nu(g):
        ev = spectrum(g)
        return float(ev[np.argmin(np.abs(ev))])

    def polish(lo, hi):
        # secant on the eigenvalue nearest zero inside a narrow interval
        flo, fhi = nu(lo), nu(hi)
        g_star, f_star = (lo, flo) if abs(flo) < abs(fhi) else (hi, fhi)
        for _ in range(40):
            if fhi == flo:
                break
            g_star = hi - fhi * (hi - lo) / (fhi - flo)
            g_star = min(max(g_star, min(lo, hi)), max(lo, hi))
            f_star = nu(g_star)
            if abs(f_star) < 1e-14:
                break
            if (f_star < 0) == (flo < 0):
                lo, flo = g_star, f_star
            else:
                hi, fhi = g_star, f_star
        return g_star, f_star

    gs = np.geomspace(bracket[0], bracket[1], scan_points)
    counts = [neg_count(spectrum(g)) for g in gs]
    best = None
    for a, b, ca, cb in zip(gs[:-1], gs[1:], counts[:-1], counts[1:]):
        if ca == cb:
            continue
        # count bisection down to a narrow interval around one crossing;
        # sign flips of V at grid nodes also change the count (U jumps),
        # so a candidate only counts if an eigenvalue really vanishes
        lo, hi, clo = a, b, ca
        for _ in range(30):
            mid = 0.5 * (lo + hi)
            if neg_count(spectrum(mid)) == clo:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-6 * hi:
                break
        g_star, f_star = polish(lo, hi)
        scale = float(np.abs(spectrum(g_star)).max())
        if abs(f_star) <= rel_tol * scale:
            return g_star
        if best is None or abs(f_star) < best[1]:
            best = (g_star, abs(f_star))
    if best is None:
        raise ValueError(f"no eigenvalue crossing in bracket {bracket}")
    raise RuntimeError(
        f"tuner stalled: |eig|={best[1]:.2e} at g*={best[0]}")


def tune_third_kind(make_potential, g_bracket, h_bracket, grid,
                    rel_tol=1e-10, constants=None, max_rounds=8,
                    scan_points=12):
    """Joint couplings (g*, h*) giving a rank-2 kernel of mixed type.

    make_potential: (g, h) -> Potential with an x1-odd null branch
    controlled by g and an x1-even (resonance) branch controlled by h,
    e.g. operator.pair_plus_bump_potential.  Alternates the
    single-parameter tuner between the two reflection sectors; for
    potentials with weakly coupled wells the cross influence is small
    and the alternation converges in a few rounds.
    """
    c = constants or specfun.default_constants()
    g = 0.5 * (g_bracket[0] + g_bracket[1])
    h = 0.5 * (h_bracket[0] + h_bracket[1])
    gb, hb = tuple(g_bracket), tuple(h_bracket)
    for round_ in range(max_rounds):
        g = tune_coupling(lambda gg: make_potential(gg, h), gb, grid,
                          sector="odd", rel_tol=rel_tol, constants=c,
                          scan_points=scan_points)
        h = tune_coupling(lambda hh: make_potential(g, hh), hb, grid,
                          sector="even", rel_tol=rel_tol, constants=c,
                          scan_points=scan_points)
        # converged when both sectors have a vanishing eigenvalue at the
        # joint couplings
        T = operator.assemble_T(make_potential(g, h), grid, c).sym()
        ev = np.linalg.eigvalsh(T)
        near = np.sort(np.abs(ev))[:2]
        if near[1] <= rel_tol * np.abs(ev).max():
            return g, h
        # shrink brackets around the current iterate for the next round
        gb = (0.95 * g, 1.05 * g)
        hb = (0.9 * h, 1.1 * h)
    raise RuntimeError("third-kind alternation did not converge")


# ---------------------------------------------------------------------------
# resonance functions and the zero-energy eigenprojection

def evaluate_g0v(points, coeffs, potential, grid):
    """Evaluate sum_j G0(|x - x_j|) v_j coeffs_j w_j at off-grid points."""
    d = points[:, None, :] - grid.nodes[None, :, :]
    r = np.sqrt(np.einsum("ijk,ijk->ij", d, d))
    return specfun.g0_kernel(r) @ (potential.v * coeffs * grid.weights)


def resonance_function(f, potential, grid, radii=None, directions=None):
    """Resonance/eigenfunction g = -G0 v f evaluated off the grid.

    f is a null vector of T in function coordinates.  Returns
    (points, g values, residual) where residual is the sup of
    |(I + G0 V) g| over a mid-range check mesh, normalized by
    sup |g| there.
    """
    if radii is None:
        radii = np.geomspace(2.0, 50.0, 24)
    if directions is None:
        rng = np.random.default_rng(7)
        directions = rng.normal(size=(6, 4))
        directions /= np.linalg.norm(directions, axis=1)[:, None]
    points = (radii[:, None, None] * directions[None, :, :]).reshape(-1, 4)
    gvals = -evaluate_g0v(points, f, potential, grid)

    # residual on a mesh surrounding the support
    check = np.concatenate([
        r * directions for r in (1.5, 2.0, 3.0, 5.0)], axis=0)
    g_check = -evaluate_g0v(check, f, potential, grid)
    # g on the grid itself, with the diagonal-corrected operator
    g0 = operator.assemble_g_kernel(0, grid)
    g_grid = -(g0.mat @ (potential.v * f))
    d = check[:, None, :] - grid.nodes[None, :, :]
    r = np.sqrt(np.einsum("ijk,ijk->ij", d, d))
    resid = g_check + specfun.g0_kernel(r) @ (potential.V * g_grid
                                              * grid.weights)
    residual = float(np.max(np.abs(resid)) / np.max(np.abs(g_check)))
    return points, gvals, residual


def far_field_exponent(f, potential, grid, radii=None):
    """Fitted decay exponent p of |g| ~ r^{-p} on radii in [5, 50]."""
    if radii is None:
        radii = np.geomspace(5.0, 50.0, 16)
    direction = np.array([0.6, 0.64, 0.36, 0.32])
    direction /= np.linalg.norm(direction)
    pts = radii[:, None] * direction[None, :]
    g = np.abs(evaluate_g0v(pts, f, potential, grid))
    slope = np.polyfit(np.log(radii), np.log(g), 1)[0]
    return -float(slope)


def zero_eigenprojection(spectral, mesh=None):
    """Projection Q onto the zero-energy eigenspace, on an evaluation mesh.

    Q = psi [<psi_i, psi_j>]^{-1} psi^T W on the mesh, the orthogonal
    projection onto span{psi_j} with psi_j = -G0 v phi_j for phi_j a
    basis of ran S2.  The Gram matrix is taken in the mesh inner
    product, so Q is idempotent and self-adjoint there by construction;
    over all of R^4 the exact identity <psi_i, psi_j> = (S2 vG1v S2)_ij
    holds, which the mesh Gram approaches as the mesh grows.  Returns
    (Q matrix on the mesh, psi samples, C = Gram^{-1}).
    """
    if spectral.rank_S2 == 0:
        raise ValueError("no zero-energy eigenspace (rank S2 = 0)")
    if mesh is None:
        mesh = operator.build_grid(halfwidth=3.0, nodes_per_dim=8)
    sw = np.sqrt(spectral.grid.weights)
    B2 = spectral.S2_basis / sw[:, None]      # function coordinates
    psi = np.stack([
        -evaluate_g0v(mesh.nodes, B2[:, j], spectral.potential, spectral.grid)
        for j in range(B2.shape[1])], axis=1)  # (Nmesh, r2)
    gram = psi.T @ (mesh.weights[:, None] * psi)
    C = np.linalg.inv(gram)
    Q = psi @ C @ (psi.T * mesh.weights[None, :])
    return Q, psi, C
