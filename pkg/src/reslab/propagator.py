"""Stone-formula propagator kernels and decay-law fits.

The absolutely continuous part of the evolution is represented as

    e^{itH} chi(H) P_ac (x, y)      = 2 Int_0^inf e^{it lam^2} A(lam) dlam
    cos(t sqrt H) chi(H) P_ac       = 2 Int_0^inf cos(t lam)   A(lam) dlam
    sin(t sqrt H)/sqrt H chi(H) P_ac= 2 Int_0^inf sin(t lam)   A(lam)/lam dlam

with the Stone amplitude A(lam) = lam chi(lam) [R_V^+ - R_V^-](lam^2)(x,y)
/ (2 pi i); the factor 2 is the Jacobian of u = lam^2.  For real
potentials every building block of the minus branch is the conjugate of
the plus branch, so A = lam chi Im(R_V^+)/pi is real and is computed
from the plus branch alone.

The oscillatory integrals use Filon quadrature: the amplitude is
interpolated by Legendre polynomials on panels (dyadically refined
toward lam = 0, where the amplitude has logarithmic structure) and the
phase is integrated exactly through the moments
Int_{-1}^{1} P_n(x) e^{i theta x} dx = 2 i^n j_n(theta).  For the
Schrodinger phase each panel is mapped to u = lam^2 first, which makes
the phase linear.  In resonance cases the amplitude behaves like
1/(lam log^2 lam) near zero; the integral below the deepest panel is
added in closed form (an arctangent in log lam) from the singular
scalar of the inverse expansion.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import operator, specfun, spectral

FLOWS = ("schrodinger", "wave_cos", "wave_sin")


# ---------------------------------------------------------------------------
# spectral cutoff

@dataclass(frozen=True)
class CutoffSpec:
    """Smooth spectral cutoff chi: 1 on [0, lambda1/2], 0 on [lambda1, inf)."""

    lambda1: float = 0.1

    def __post_init__(self):
        if self.lambda1 <= 0:
            raise ValueError("lambda1 must be positive")

    def chi(self, lam):
        lam = np.asarray(lam, dtype=float)
        half = 0.5 * self.lambda1
        s = np.clip((lam - half) / half, 0.0, 1.0)
        # quintic smoothstep: C^2 monotone transition
        return 1.0 - s**3 * (10.0 - 15.0 * s + 6.0 * s**2)


# ---------------------------------------------------------------------------
# samples and fits

@dataclass(eq=False)
class PropagatorSample:
    """Propagator kernel values at probe pairs for one time."""

    t: float
    pairs: np.ndarray              # (npairs, 2, 4)
    values: np.ndarray             # (npairs,) complex
    sup_proxy: float
    error_estimate: float
    flagged: bool = False


@dataclass(eq=False)
class DecayFit:
    """Least-squares fit of a decay law in transformed coordinates."""

    model: str                     # "power" | "log" | "t_over_log"
    params: dict
    r_squared: float
    window: tuple
    residuals: np.ndarray = field(default=None)


# ---------------------------------------------------------------------------
# Filon quadrature machinery

_NODES = 12


@functools.lru_cache(maxsize=8)
def _gl_rule(n):
    x, w = np.polynomial.legendre.leggauss(n)
    # P_k(x_j) matrix for the Legendre-coefficient transform
    P = np.polynomial.legendre.legvander(x, n - 1).T
    coef_map = ((2 * np.arange(n) + 1) / 2.0)[:, None] * (P * w[None, :])
    return x, w, coef_map


def _spherical_jn(nmax, theta):
    """j_0..j_nmax at a scalar theta >= 0 (stable for all magnitudes)."""
    theta = float(theta)
    out = np.zeros(nmax + 1)
    if theta < 1e-10:
        out[0] = 1.0 - theta**2 / 6.0
        if nmax >= 1:
            out[1] = theta / 3.0
        return out
    if theta > nmax + 2:
        # upward recurrence is stable above the turning point
        out[0] = np.sin(theta) / theta
        if nmax >= 1:
            out[1] = np.sin(theta) / theta**2 - np.cos(theta) / theta
        for n in range(1, nmax):
            out[n + 1] = (2 * n + 1) / theta * out[n] - out[n - 1]
        return out
    # Miller's downward recurrence with normalization by j0
    N = nmax + 16 + int(1.5 * theta)
    jp, jc = 0.0, 1e-30
    tmp = np.zeros(N)
    for n in range(N - 1, -1, -1):
        jm = (2 * n + 3) / theta * jc - jp
        jp, jc = jc, jm
        if n <= nmax:
            tmp[n] = jm
        if abs(jc) > 1e250:
            jp *= 1e-250
            jc *= 1e-250
            tmp *= 1e-250
    scale = (np.sin(theta) / theta) / jc
    out[:] = tmp[:nmax + 1] * scale
    return out


def _filon_moments(nmax, theta):
    """mu_n(theta) = Int_{-1}^{1} P_n(x) e^{i theta x} dx = 2 i^n j_n(theta)."""
    jn = _spherical_jn(nmax, abs(theta))
    mu = 2.0 * (1j ** np.arange(nmax + 1)) * jn
    if theta < 0:
        mu = np.conj(mu)
    return mu


def _panel_combination(coeffs, m, hh, t, phase):
    """Integral over one panel from Legendre coefficients of the amplitude.

    coeffs has shape (..., n); (m, hh) are the panel midpoint/halfwidth in
    the phase-linear variable (u = lam^2 for the Schrodinger flow, lam for
    the wave flows).  Returns (value, tail_estimate) with value shaped
    like coeffs[..., 0].
    """
    n = coeffs.shape[-1]
    theta = t * hh
    mu = _filon_moments(n - 1, theta)
    if phase == "schrodinger":
        full = hh * np.exp(1j * t * m) * (coeffs @ mu)
        tail = hh * np.abs(coeffs[..., -3:] @ mu[-3:])
    elif phase in ("cos", "sin"):
        plus = np.exp(1j * t * m) * (coeffs @ mu)
        minus = np.exp(-1j * t * m) * (coeffs @ np.conj(mu))
        if phase == "cos":
            full = 0.5 * hh * (plus + minus)
        else:
            full = hh * (plus - minus) / 2j
        tp = np.abs(coeffs[..., -3:] @ mu[-3:])
        tail = hh * tp
    else:
        raise ValueError(f"unknown phase {phase}")
    return full, tail


def _dyadic_panels(lo, hi, levels):
    """Panels [hi/2, hi], [hi/4, hi/2], ... down to lo, plus [0, lo]."""
    edges = [hi]
    x = hi
    for _ in range(levels):
        x *= 0.5
        if x <= lo:
            break
        edges.append(x)
    edges.append(lo)
    return [(b, a) for a, b in zip(edges[:-1], edges[1:])]


def _split_panels(panels, width_cap):
    if width_cap is None or width_cap <= 0:
        return panels
    out = []
    for (a, b) in panels:
        k = max(1, int(np.ceil((b - a) / width_cap)))
        e = np.linspace(a, b, k + 1)
        out.extend(zip(e[:-1], e[1:]))
    return out


def _panel_coeffs(f, a, b, phase, nodes=_NODES):
    """Legendre coefficients of the amplitude on [a, b] (lam variable).

    For the Schrodinger phase the interpolation variable is u = lam^2 and
    the returned (m, hh) refer to u; the amplitude is f(lam)/(2 lam), the
    Jacobian of the substitution.  For wave phases the variable is lam.
    """
    x, w, cmap = _gl_rule(nodes)
    if phase == "schrodinger":
        ua, ub = a * a, b * b
        m, hh = 0.5 * (ua + ub), 0.5 * (ub - ua)
        u = m + hh * x
        lam = np.sqrt(u)
        vals = np.asarray(f(lam)) / (2.0 * lam)
    else:
        m, hh = 0.5 * (a + b), 0.5 * (b - a)
        lam = m + hh * x
        vals = np.asarray(f(lam))
    coeffs = vals @ cmap.T
    return coeffs, m, hh


def oscillatory_integral(f, phase, t, support, tol=1e-4, amp_period=None,
                         dyadic_levels=40, max_refine=8, nodes=_NODES):
    """Int_support f(lam) * phase(t, lam) dlam by adaptive Filon panels.

    f maps an array of lam values to amplitude values (last axis lam);
    phase is one of "schrodinger" (e^{i t lam^2}), "cos" (cos t lam),
    "sin" (sin t lam).  Panels are refined dyadically toward lam = 0 and
    capped at amp_period/2 when the amplitude has its own oscillation
    scale.  Returns (value, error_estimate); the estimate is the
    Legendre-tail bound summed over panels.  Raises ValueError when
    refinement cannot reach the tolerance (never extrapolates silently).
    """
    a, b = support
    if b <= a:
        raise ValueError("empty support")
    tt = abs(t)
    if a == 0.0:
        # deepest panel edge: phase variation below ~0.05 rad on the stub
        if phase == "schrodinger":
            lam_min = min(b / 16.0, np.sqrt(0.05 / max(tt, 1e-30)))
        else:
            lam_min = min(b / 16.0, 0.05 / max(tt, 1e-30))
        panels = _dyadic_panels(lam_min, b, dyadic_levels)
    else:
        # geometric subdivision toward the lower endpoint: amplitudes here
        # are typically steepest near lam = a, and a single wide panel can
        # alias a near-singular profile past the Legendre-tail estimator
        panels = _dyadic_panels(a, b, dyadic_levels)
    panels = _split_panels(panels, amp_period and amp_period / 2.0)
    panels.sort()

    def stub_value(lo, hi):
        # non-oscillatory remainder: plain Gauss with the phase folded in
        x, w, _ = _gl_rule(nodes)
        lam = 0.5 * (hi + lo) + 0.5 * (hi - lo) * x
        vals = np.asarray(f(lam))
        if phase == "schrodinger":
            ph = np.exp(1j * t * lam**2)
        elif phase == "cos":
            ph = np.cos(t * lam)
        else:
            ph = np.sin(t * lam)
        return 0.5 * (hi - lo) * ((vals * ph) @ w)

    store = {}

    def eval_panel(p):
        if p not in store:
            c, m, hh = _panel_coeffs(f, p[0], p[1], phase, nodes)
            store[p] = _panel_combination(c, m, hh, t, phase)
        return store[p]

    for _ in range(max_refine):
        vals = [eval_panel(p) for p in panels]
        value = sum(v for v, _ in vals)
        if a == 0.0:
            value = value + stub_value(0.0, panels[0][0])
        est = float(sum(np.max(np.atleast_1d(e)) for _, e in vals))
        scale = float(np.max(np.abs(np.atleast_1d(value))))
        if est <= tol * max(scale, 1e-300):
            return value, est
        # split the worst panels in half
        worst = sorted(panels, key=lambda p: -np.max(store[p][1]))
        nsplit = max(1, len(worst) // 4)
        for p in worst[:nsplit]:
            panels.remove(p)
            mid = 0.5 * (p[0] + p[1])
            panels.extend([(p[0], mid), (mid, p[1])])
        panels.sort()
    raise ValueError(
        f"oscillatory_integral did not reach tol={tol} "
        f"(estimate {est:.2e}, amplitude undersampled)")


# ---------------------------------------------------------------------------
# perturbed resolvent kernel

def _minv_apply_factory(spec, sign, lam):
    """Return rhs -> M(sign, lam)^{-1} rhs (symmetrized coordinates).

    Regular case: plain LU.  Otherwise the kernel-shift identity
    M^{-1} = A + A S1 B^{-1} S1 A with A = (M + S1)^{-1} applied through
    one factorization of the well-conditioned M + S1.
    """
    M = spec.M(sign, lam)
    if spec.classification == spectral.REGULAR:
        lu = scipy.linalg.lu_factor(M)
        return lambda rhs: scipy.linalg.lu_solve(lu, rhs)
    B1 = spec.S1_basis
    lu = scipy.linalg.lu_factor(M + spec.S1)
    AB1 = scipy.linalg.lu_solve(lu, B1.astype(complex))
    Br = np.eye(B1.shape[1]) - B1.T @ AB1
    core = AB1 @ np.linalg.inv(Br)

    def apply(rhs):
        y = scipy.linalg.lu_solve(lu, rhs)
        return y + core @ (B1.T @ y)

    return apply


def _free_kernel_at(sign, lam, pts_a, pts_b):
    d = pts_a[:, None, :] - pts_b[None, :, :]
    r = np.sqrt(np.einsum("ijk,ijk->ij", d, d))
    return specfun.free_resolvent_kernel(sign, lam, r.ravel()).reshape(r.shape)


def _perturbed_batch(sign, lam, pairs, spec, minv_apply=None):
    """R_V(sign)(lam^2)(x, y) for an array of probe pairs (n, 2, 4)."""
    pairs = np.asarray(pairs, dtype=float)
    xs, ys = pairs[:, 0, :], pairs[:, 1, :]
    d = xs - ys
    r = np.sqrt(np.einsum("ij,ij->i", d, d))
    free = specfun.free_resolvent_kernel(sign, lam, r)
    if spec is None:
        return free
    grid, pot = spec.grid, spec.potential
    w, V, v = grid.weights, pot.V, pot.v
    a = _free_kernel_at(sign, lam, xs, grid.nodes)       # (n, N)
    b = _free_kernel_at(sign, lam, ys, grid.nodes)
    R = operator.assemble_resolvent(sign, lam, grid, spec.constants)
    # A_i = (R0 V R0)(x, z_i), B_i = (R0 V R0)(z_i, y); R.mat includes w_j
    A = (a * V) @ R.mat.T
    B = (b * V) @ R.mat.T
    term2 = np.einsum("ni,i,ni->n", a, V * w, b)
    term3 = np.einsum("ni,i,ni->n", a, V * w, B)
    if minv_apply is None:
        minv_apply = _minv_apply_factory(spec, sign, lam)
    sw = np.sqrt(w)
    alpha = (sw * v) * A
    beta = (sw * v) * B
    term4 = np.einsum("ni,ni->n", alpha, minv_apply(beta.T).T)
    return free - term2 + term3 - term4


def perturbed_resolvent_kernel(sign, lam, x, y, spec):
    """Kernel of R_V(sign)(lam^2) at one probe pair via the Born series.

    R0 - R0 V R0 + R0 V R0 V R0 - R0 V R0 v M^{-1} v R0 V R0, quadrature
    over the stored grid; spec = None means V = 0 (free kernel).
    """
    pair = np.asarray([[x, y]], dtype=float)
    return complex(_perturbed_batch(sign, lam, pair, spec)[0])


def stone_integrand(lam, x, y, spec, cutoff):
    """lam chi(lam) [R_V^+ - R_V^-](lam^2)(x, y) / (2 pi i).

    The +- difference is evaluated as 2i Im(plus branch): the minus
    branch of every building block is the conjugate of the plus branch
    for real V, so the cancellation is preserved algebraically.
    """
    chi = float(cutoff.chi(lam)) if cutoff is not None else 1.0
    if chi == 0.0:
        return 0.0 + 0.0j
    plus = perturbed_resolvent_kernel(+1, lam, x, y, spec)
    return complex(lam * chi * np.imag(plus) / np.pi)


# ---------------------------------------------------------------------------
# probe sets and amplitude cache

def default_probe_pairs():
    """Fixed 12-pair probe set: near-diagonal, mid-range and far-field
    pairs, including points outside the unit-ball potential support."""
    p1 = np.array([0.30, 0.10, -0.20, 0.05])
    p2 = np.array([-0.15, 0.35, 0.10, -0.10])
    p3 = np.array([1.70, 0.30, 0.00, 0.20])
    p4 = np.array([0.00, -2.30, 0.40, 0.00])
    p5 = np.array([4.10, 1.00, -0.70, 0.00])
    p6 = np.array([-3.00, 3.00, 1.50, 0.80])
    d1 = np.array([0.08, 0.0, 0.0, 0.0])
    pairs = [
        (p1, p1 + d1), (p2, p2 + d1), (p1, p2), (p1, p3),
        (p2, p4), (p3, p4), (p1, p5), (p2, p6),
        (p3, p6), (p4, p5), (p5, p6), (p5, p5 + d1),
    ]
    return np.asarray(pairs, dtype=float)


class StoneCache:
    """Amplitude cache for propagator sweeps over many times t.

    Evaluating the Stone amplitude at one lam costs a dense resolvent
    assembly plus a factorized Birman-Schwinger solve; the amplitude is
    t-independent, so panel Legendre coefficients are computed once and
    recombined with the analytic phase moments for every t.
    """

    def __init__(self, spec, pairs, cutoff, nodes=_NODES):
        self.spec = spec
        self.pairs = np.asarray(pairs, dtype=float)
        self.cutoff = cutoff
        self.nodes = nodes
        self._memo = {}

    def amplitude(self, lams):
        """Stone amplitude matrix, shape (npairs, nlam); real.

        Values are memoized per lam: the wave flows and repeated sweeps
        reuse the same quadrature nodes, and each evaluation costs a
        dense resolvent assembly plus a factorized solve.
        """
        lams = np.atleast_1d(np.asarray(lams, dtype=float))
        chi = self.cutoff.chi(lams)
        out = np.zeros((self.pairs.shape[0], lams.size))
        for k, (lam, c) in enumerate(zip(lams, chi)):
            if c == 0.0:
                continue
            if lam not in self._memo:
                plus = _perturbed_batch(+1, lam, self.pairs, self.spec)
                self._memo[lam] = np.imag(plus) / np.pi
            out[:, k] = lam * c * self._memo[lam]
        return out


def _singular_scalar(spec):
    """(a, b) of the singular scalar f^+ = 1/(lam^2 (a log lam + b)),
    and the frozen sandwich operator S of the expansion's leading term
    (None for kinds without a resonance direction)."""
    exp = spectral.build_expansion(spec)
    c = spec.constants
    if spec.classification == spectral.FIRST_KIND:
        a = exp.scalars["c1"] * c.a1
        b = exp.scalars["c1"] * c.z1 + exp.scalars["c2"]
        S = spec.S1
    elif spec.classification == spectral.THIRD_KIND:
        a = exp.scalars["c1"] * c.a1
        b = (exp.scalars["c1"] * c.z1
             + exp.scalars["c2"] + exp.scalars["c3"])
        S = next(mat for name, _, mat in exp.terms if name == "f1*S")
    else:
        return None, None, None
    return a, b, S


def _log_tail_integral(a, b, lam_d):
    """Int_0^{lam_d} lam Im f^+(lam) dlam with f^+ = 1/(lam^2(a L + b)),
    L = log lam: the substitution dL = dlam/lam gives
    Int Im[1/(aL + b)] dL = arg(a L + b)/a evaluated at L = log lam_d
    (the L -> -inf limit vanishes since a < 0)."""
    z = a * np.log(lam_d) + b
    return float(np.angle(z) / a)


def singular_probe_matrix(spec, pairs):
    """K(x, y) = (G0 V G0 v S v G0 V G0)(x, y) at probe pairs, where S is
    the frozen sandwich of the expansion's singular term; also returns
    the on-grid DenseOperator and its factor vectors."""
    a, b, S = _singular_scalar(spec)
    if S is None:
        raise ValueError("no singular direction for kind "
                         + spec.classification)
    grid, pot = spec.grid, spec.potential
    w, sw = grid.weights, np.sqrt(grid.weights)
    g0 = operator.assemble_g_kernel(0, grid, spec.constants)
    ev, vec = np.linalg.eigh(S)
    keep = np.abs(ev) > 1e-12 * np.abs(ev).max()
    sig, psi = ev[keep], vec[:, keep]
    # z_k = G0 V G0 v psi_k on the grid (function coordinates)
    psi_f = psi / sw[:, None]
    y = g0.mat @ (pot.v[:, None] * psi_f)
    z = g0.mat @ (pot.V[:, None] * y)
    # off-grid factors Z_k(x) = sum_i G0(|x - z_i|) V_i w_i y_k(z_i)
    pairs = np.asarray(pairs, dtype=float)
    xs, ys = pairs[:, 0, :], pairs[:, 1, :]

    def factors(pts):
        d = pts[:, None, :] - grid.nodes[None, :, :]
        r = np.sqrt(np.einsum("ijk,ijk->ij", d, d))
        G = specfun.g0_kernel(r.ravel()).reshape(r.shape)
        return G @ ((pot.V * w)[:, None] * y)

    Zx, Zy = factors(xs), factors(ys)
    probe_vals = np.einsum("nk,k,nk->n", Zx, sig, Zy)
    mat = (z * sig[None, :]) @ z.T * w[None, :]
    return probe_vals, operator.DenseOperator(mat, w), (sig, z)


# ---------------------------------------------------------------------------
# kernel sweeps

def _sweep_values(cache, ts, flow, t_ref=None):
    """Kernel values (nt, npairs) and error estimates (nt,) for one flow.

    Integrates the cached amplitude over dyadic Filon panels down to a
    global floor lam_d chosen so the phase is flat below it for every
    requested t; the sub-floor contribution is the closed-form log tail
    in resonance cases and a plain Gauss stub otherwise.
    """
    spec, cutoff = cache.spec, cache.cutoff
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    t_ref = t_ref or float(np.abs(ts).max())
    lam1 = cutoff.lambda1
    phase = "schrodinger" if flow == "schrodinger" else (
        "cos" if flow == "wave_cos" else "sin")
    # flat-phase floor: the sub-floor contribution is added with the
    # phase frozen at 1 (resp. sin t lam ~ t lam), so the floor must sit
    # deep enough that the neglected phase error stays below the t^{-1}
    # residual the decay fits look at
    if flow == "schrodinger":
        lam_d = min(lam1 / 16.0, 0.05 / t_ref)
    else:
        lam_d = min(lam1 / 16.0, 0.2 / t_ref**1.5)
    panels = _dyadic_panels(lam_d, lam1, 60)

    sing = spec is not None and spec.classification in (
        spectral.FIRST_KIND, spectral.THIRD_KIND)
    if sing:
        a_s, b_s, _ = _singular_scalar(spec)
        probe_sing, _, _ = singular_probe_matrix(spec, cache.pairs)

    x, w, cmap = _gl_rule(cache.nodes)
    panel_data = []
    for (pa, pb) in panels:
        if phase == "schrodinger":
            ua, ub = pa * pa, pb * pb
            m, hh = 0.5 * (ua + ub), 0.5 * (ub - ua)
            lam = np.sqrt(m + hh * x)
            vals = cache.amplitude(lam) / (2.0 * lam)[None, :]
        else:
            m, hh = 0.5 * (pa + pb), 0.5 * (pb - pa)
            lam = m + hh * x
            vals = cache.amplitude(lam)
            if phase == "sin":
                vals = vals / lam[None, :]
        coeffs = vals @ cmap.T
        panel_data.append((coeffs, m, hh))

    # stub amplitude (used when there is no singular closed form)
    lam_stub = 0.5 * lam_d * (1.0 + x)
    stub_amp = cache.amplitude(lam_stub)
    if phase == "schrodinger":
        pass  # stub integrated in lam directly
    elif phase == "sin":
        stub_amp = stub_amp / lam_stub[None, :]

    out = np.zeros((ts.size, cache.pairs.shape[0]), dtype=complex)
    est = np.zeros(ts.size)
    for it, t in enumerate(ts):
        total = np.zeros(cache.pairs.shape[0], dtype=complex)
        e = 0.0
        for coeffs, m, hh in panel_data:
            v, tl = _panel_combination(coeffs, m, hh, t, phase)
            total += v
            e += float(np.max(tl))
        if sing:
            # closed-form sub-floor contribution of the singular term:
            # kernel_sing = phi-weighted K; the phase is flat below lam_d
            tail = _log_tail_integral(a_s, b_s, lam_d)
            if phase == "sin":
                total += (-1.0 / np.pi) * t * tail * probe_sing
                phase_err = (abs(t) * lam_d) ** 3 / 6.0
            elif phase == "cos":
                total += (-1.0 / np.pi) * tail * probe_sing
                phase_err = (abs(t) * lam_d) ** 2 / 2.0
            else:
                total += (-1.0 / np.pi) * tail * probe_sing
                phase_err = abs(t) * lam_d**2
            e += phase_err * abs(tail) / np.pi * float(
                np.max(np.abs(probe_sing)))
        else:
            if phase == "schrodinger":
                ph = np.exp(1j * t * lam_stub**2)
            elif phase == "cos":
                ph = np.cos(t * lam_stub)
            else:
                ph = np.sin(t * lam_stub)
            total += 0.5 * lam_d * (stub_amp * ph[None, :]) @ w
        out[it] = 2.0 * total
        est[it] = 2.0 * e
    return out, est


def schrodinger_kernel(t, probes, spec, cutoff, cache=None, tol=1e-3):
    """Kernel of e^{itH} chi(H) P_ac at probe pairs (PropagatorSample)."""
    if spec is None:
        return _free_schrodinger_sample(t, probes, cutoff, tol)
    if cache is None:
        cache = StoneCache(spec, probes, cutoff)
    vals, est = _sweep_values(cache, [t], "schrodinger", t_ref=abs(t))
    v = vals[0]
    sup = float(np.max(np.abs(v)))
    e = float(est[0])
    return PropagatorSample(t=float(t), pairs=cache.pairs, values=v,
                            sup_proxy=sup, error_estimate=e,
                            flagged=bool(e > tol * max(sup, 1e-300)))


def wave_kernels(t, probes, spec, cutoff, cache=None, tol=1e-3):
    """Kernels of cos(t sqrt H) chi P_ac and sin(t sqrt H)/sqrt H chi P_ac."""
    if cache is None:
        cache = StoneCache(spec, probes, cutoff)
    out = []
    for flow in ("wave_cos", "wave_sin"):
        vals, est = _sweep_values(cache, [t], flow, t_ref=abs(t))
        v, e = vals[0], float(est[0])
        sup = float(np.max(np.abs(v)))
        out.append(PropagatorSample(
            t=float(t), pairs=cache.pairs, values=v, sup_proxy=sup,
            error_estimate=e, flagged=bool(e > tol * max(sup, 1e-300))))
    return tuple(out)


def kernel_sweep(ts, probes, spec, cutoff, flows=("schrodinger",),
                 cache=None, tol=1e-3):
    """Samples for many times sharing one amplitude cache per flow."""
    if cache is None:
        cache = StoneCache(spec, probes, cutoff)
    result = {}
    for flow in flows:
        vals, est = _sweep_values(cache, ts, flow)
        samples = []
        for t, v, e in zip(np.atleast_1d(ts), vals, est):
            sup = float(np.max(np.abs(v)))
            samples.append(PropagatorSample(
                t=float(t), pairs=cache.pairs, values=v, sup_proxy=sup,
                error_estimate=float(e),
                flagged=bool(e > tol * max(sup, 1e-300))))
        result[flow] = samples
    return result


def _free_schrodinger_sample(t, probes, cutoff, tol):
    """V = 0 kernel; with cutoff=None the full Stone integral is taken
    with a Gaussian-regularized upper limit (the closed form is
    e^{-ir^2/4t}/(4 pi i t)^2)."""
    pairs = np.asarray(probes, dtype=float)
    d = pairs[:, 0, :] - pairs[:, 1, :]
    rr = np.sqrt(np.einsum("ij,ij->i", d, d))
    vals = np.empty(pairs.shape[0], dtype=complex)
    ests = 0.0
    for k, r in enumerate(rr):
        vals[k], e = free_stone_integral(t, r, cutoff=cutoff, tol=tol)
        ests = max(ests, e)
    sup = float(np.max(np.abs(vals)))
    return PropagatorSample(t=float(t), pairs=pairs, values=vals,
                            sup_proxy=sup, error_estimate=float(ests),
                            flagged=bool(ests > tol * max(sup, 1e-300)))


def free_stone_integral(t, r, cutoff=None, tol=1e-4):
    """V = 0 Stone integral 2 Int lam chi [R0+ - R0-]/(2 pi i) e^{it lam^2}.

    The amplitude is lam^2 J1(lam r)/(8 pi^2 r).  Without a cutoff the
    integral extends to infinity; a Gaussian regularizer e^{-eps lam^2}
    with eps ~ 1e-5 t makes it convergent while perturbing the closed
    form only at relative order eps/t.
    """
    tt = abs(float(t))
    if cutoff is not None:
        lam_hi = cutoff.lambda1

        def amp(lam):
            return (lam**2 * specfun.bessel_j1(lam * r)
                    / (8.0 * np.pi**2 * r) * cutoff.chi(lam))
    else:
        eps = 1e-5 * tt
        # the truncation edge contributes ~ amp(L)/(2 t L); push it to
        # e^{-36} so the hard cut is invisible at 1e-4 tolerance
        lam_hi = np.sqrt(36.0 / eps)

        def amp(lam):
            return (lam**2 * specfun.bessel_j1(lam * r)
                    / (8.0 * np.pi**2 * r) * np.exp(-eps * lam**2))

    period = 2.0 * np.pi / max(r, 1e-3)
    val, est = oscillatory_integral(amp, "schrodinger", t, (0.0, lam_hi),
                                    tol=tol, amp_period=period)
    return 2.0 * val, 2.0 * est


# ---------------------------------------------------------------------------
# finite-rank corrections

def phi_correction(ts, spec, cutoff, flow, tol=1e-6):
    """Scalar phi(t): oscillatory integral of the singular +- difference.

    phi(t) = -(2/pi) Int w(t, lam) chi(lam) Im f^+(lam) dlam with
    w = lam e^{it lam^2} (schrodinger), lam cos(t lam) (wave_cos),
    sin(t lam) (wave_sin); the sub-floor part is the closed-form log
    tail.  The kernel correction is F_t = phi(t) K with the frozen K of
    singular_probe_matrix / finite_rank_correction.
    """
    a_s, b_s, _ = _singular_scalar(spec)
    if a_s is None:
        raise ValueError("phi_correction needs FirstKind or ThirdKind")
    ts = np.atleast_1d(np.asarray(ts, dtype=float))

    def im_f(lam):
        gs1 = lam**2 * (a_s * np.log(lam) + b_s)
        return np.imag(1.0 / gs1)

    lam1 = cutoff.lambda1
    out = np.empty(ts.size, dtype=complex)
    for k, t in enumerate(ts):
        tt = max(abs(t), 1.0)
        if flow == "schrodinger":
            lam_d = min(lam1 / 16.0, 0.05 / tt)
            f = lambda lam: lam * cutoff.chi(lam) * im_f(lam)
            val, _ = oscillatory_integral(f, "schrodinger", t,
                                          (lam_d, lam1), tol=tol)
            tail = _log_tail_integral(a_s, b_s, lam_d)
        elif flow == "wave_cos":
            lam_d = min(lam1 / 16.0, 0.2 / tt**1.5)
            f = lambda lam: lam * cutoff.chi(lam) * im_f(lam)
            val, _ = oscillatory_integral(f, "cos", t, (lam_d, lam1),
                                          tol=tol)
            tail = _log_tail_integral(a_s, b_s, lam_d)
        elif flow == "wave_sin":
            lam_d = min(lam1 / 16.0, 0.2 / tt**1.5)
            f = lambda lam: cutoff.chi(lam) * im_f(lam)
            val, _ = oscillatory_integral(f, "sin", t, (lam_d, lam1),
                                          tol=tol)
            tail = t * _log_tail_integral(a_s, b_s, lam_d)
        else:
            raise ValueError(f"unknown flow {flow}")
        out[k] = -(2.0 / np.pi) * (val + tail)
    return out if out.size > 1 else complex(out[0])


def finite_rank_correction(t, spec, cutoff, flow="schrodinger"):
    """(phi_t, K_op): F_t = phi(t) K with K = G0 V G0 v S v G0 V G0.

    S is S1 (FirstKind, K rank one) or the rank-<=2 sandwich of the
    third-kind expansion; requires a resonance classification.
    """
    if spec.classification not in (spectral.FIRST_KIND,
                                   spectral.THIRD_KIND):
        raise ValueError("finite_rank_correction needs FirstKind/ThirdKind")
    phi_t = phi_correction(np.asarray([t], dtype=float), spec, cutoff, flow)
    _, K_op, _ = singular_probe_matrix(spec, default_probe_pairs())
    return complex(np.atleast_1d(phi_t)[0]), K_op


# ---------------------------------------------------------------------------
# decay fits

def _extract_series(samples):
    if isinstance(samples, tuple) and len(samples) == 2 \
            and not isinstance(samples[0], PropagatorSample):
        t = np.asarray(samples[0], dtype=float)
        y = np.asarray(samples[1], dtype=float)
        return t, y
    t = np.array([s.t for s in samples], dtype=float)
    y = np.array([s.sup_proxy for s in samples], dtype=float)
    return t, y


def decay_fit(samples, model):
    """Least-squares decay-law fit in transformed coordinates.

    samples: list of PropagatorSample (sup_proxy vs t) or a (t, y) pair.
    model "power": y = c t^{-p} via log-log linear fit;
    model "log": y = c / log(t/t0);  model "t_over_log":
    y = c t / log(t/t0).  The log-law models carry the time-scale
    normalization t0 because log t alone depends on the unit of t; both
    are fitted as linear regressions of 1/y (resp. t/y) on log t, and
    r_squared refers to that linearized regression (as it does for the
    log-log power fit).
    """
    t, y = _extract_series(samples)
    if t.size < 8 or np.log10(t.max() / t.min()) < 1.5:
        raise ValueError("need >= 8 samples spanning >= 1.5 decades")
    window = (float(t.min()), float(t.max()))
    if model == "power":
        mask = y > 0
        lt, ly = np.log(t[mask]), np.log(y[mask])
        A = np.column_stack([np.ones_like(lt), -lt])
        sol, *_ = np.linalg.lstsq(A, ly, rcond=None)
        pred = A @ sol
        ss_res = float(np.sum((ly - pred) ** 2))
        ss_tot = float(np.sum((ly - ly.mean()) ** 2))
        r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
        return DecayFit(model=model,
                        params={"c": float(np.exp(sol[0])),
                                "p": float(sol[1])},
                        r_squared=max(0.0, min(1.0, r2)), window=window,
                        residuals=ly - pred)
    if model == "log":
        z = 1.0 / y
    elif model == "t_over_log":
        z = t / y
    else:
        raise ValueError(f"unknown model {model}")
    lt = np.log(t)
    A = np.column_stack([lt, np.ones_like(lt)])
    sol, *_ = np.linalg.lstsq(A, z, rcond=None)
    slope, icept = float(sol[0]), float(sol[1])
    pred = A @ sol
    ss_res = float(np.sum((z - pred) ** 2))
    ss_tot = float(np.sum((z - z.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    c = 1.0 / slope
    t0 = float(np.exp(-icept * c))
    return DecayFit(model=model, params={"c": c, "t0": t0},
                    r_squared=max(0.0, min(1.0, r2)), window=window,
                    residuals=z - pred)


def default_time_grid(t_min=4.0, t_max=1.0e4, per_decade=16):
    """Logarithmic t grid, 16 points per decade over [4, 1e4] by default."""
    n = int(np.ceil(per_decade * np.log10(t_max / t_min))) + 1
    return np.geomspace(t_min, t_max, n)
