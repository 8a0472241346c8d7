"""Special functions and closed-form kernels for the 4D free resolvent.

Provides order-one Bessel/Hankel functions (own implementation: power
series for small argument, integral representations for large argument),
the free-resolvent kernel

    R0(sign, lam, r) = sign * (i/4) * lam/(2 pi r) * H1(sign, lam*r),

the low-energy expansion kernels

    g0(r) = 1/(4 pi^2 r^2)        g1(r) = -log(r)/(8 pi^2)
    g2(r) = c2 * r^2              g3(r) = c3 * r^2 log(r)

and the scalar coefficient functions

    gs1(lam) = lam^2 (a1 log lam + z1)
    gs2(lam) = lam^4 (a2 log lam + z2)

whose constants are obtained numerically by `constants_fit` (least-squares
matching of the free resolvent against the partial sums of its small-lam
expansion; no literature values are transcribed).
"""

import functools
from dataclasses import dataclass

import numpy as np

# switchover between the power series and the integral representation
SERIES_CUTOFF = 5.0
_SERIES_TERMS = 30

EULER_GAMMA = 0.5772156649015328606


@dataclass(frozen=True)
class ExpansionConstants:
    """Fitted constants of the small-argument expansions.

    a1, z1 parameterize gs1; a2, z2 parameterize gs2; b1, b2 are the
    Y1 series coefficients of z and z^3; c2 is the (conventional)
    normalization of the r^2 kernel and c3 the coefficient of r^2 log r.
    """

    a1: float
    z1: complex
    a2: float
    z2: complex
    b1: float
    b2: float
    c2: float
    c3: float

    def __post_init__(self):
        if self.a1 == 0 or self.a2 == 0:
            raise ValueError("a1, a2 must be nonzero")
        if self.z1.imag == 0 or self.z2.imag == 0:
            raise ValueError("z1, z2 must have nonzero imaginary part")


def _j1_series(z):
    # J1(z) = sum_k (-1)^k (z/2)^{2k+1} / (k! (k+1)!)
    z = np.asarray(z, dtype=float)
    q = 0.25 * z * z
    term = 0.5 * z
    total = term.copy()
    for k in range(1, _SERIES_TERMS):
        term = term * (-q) / (k * (k + 1))
        total += term
    return total


def _y1_series(z):
    # Y1(z) = (2/pi) log(z/2) J1(z) - 2/(pi z)
    #         - (1/pi) sum_k (-1)^k [psi(k+1)+psi(k+2)] (z/2)^{2k+1} / (k!(k+1)!)
    z = np.asarray(z, dtype=float)
    q = 0.25 * z * z
    term = 0.5 * z
    # harmonic numbers give psi(k+1) = -gamma + H_k
    psi_a = -EULER_GAMMA            # psi(1)
    psi_b = -EULER_GAMMA + 1.0      # psi(2)
    total = term * (psi_a + psi_b)
    for k in range(1, _SERIES_TERMS):
        term = term * (-q) / (k * (k + 1))
        psi_a += 1.0 / k
        psi_b += 1.0 / (k + 1)
        total += term * (psi_a + psi_b)
    return (2.0 / np.pi) * np.log(0.5 * z) * _j1_series(z) \
        - 2.0 / (np.pi * z) - total / np.pi


@functools.lru_cache(maxsize=8)
def _gauss_legendre(n):
    return np.polynomial.legendre.leggauss(n)


@functools.lru_cache(maxsize=8)
def _gauss_laguerre(n):
    return np.polynomial.laguerre.laggauss(n)


def _bessel_integral(z):
    """J1 and Y1 for z >= SERIES_CUTOFF via integral representations.

    J1(z) = (1/pi) int_0^pi cos(z sin t - t) dt
    Y1(z) = (1/pi) int_0^pi sin(z sin t - t) dt
            - (2/pi) int_0^inf u e^{-z u} / sqrt(1+u^2) du
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    zmax = float(z.max())
    # oscillatory part: panelized Gauss-Legendre on [0, pi]
    npan = max(4, int(np.ceil(zmax / 2.0)))
    xg, wg = _gauss_legendre(16)
    edges = np.linspace(0.0, np.pi, npan + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    t = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
    wt = (half[:, None] * wg[None, :]).ravel()
    phase = z[:, None] * np.sin(t)[None, :] - t[None, :]
    j1 = (np.cos(phase) @ wt) / np.pi
    y_osc = (np.sin(phase) @ wt) / np.pi
    # monotone part: Gauss-Laguerre after u -> s/z
    s, ws = _gauss_laguerre(48)
    f = s[None, :] / np.sqrt(1.0 + (s[None, :] / z[:, None]) ** 2)
    y_mon = (2.0 / np.pi) * (f @ ws) / z**2
    return j1, y_osc - y_mon


def bessel_j1(z):
    """Bessel function J1 for real z >= 0 (vectorized)."""
    z = np.asarray(z, dtype=float)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    if np.any(z < 0):
        raise ValueError("bessel_j1 requires z >= 0")
    out = np.empty_like(z)
    small = z < SERIES_CUTOFF
    if np.any(small):
        out[small] = _j1_series(z[small])
    if np.any(~small):
        out[~small] = _bessel_integral(z[~small])[0]
    return out[0] if scalar else out


def bessel_y1(z):
    """Bessel function Y1 for real z > 0 (vectorized)."""
    z = np.asarray(z, dtype=float)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    if np.any(z <= 0):
        raise ValueError("bessel_y1 requires z > 0")
    out = np.empty_like(z)
    small = z < SERIES_CUTOFF
    if np.any(small):
        out[small] = _y1_series(z[small])
    if np.any(~small):
        out[~small] = _bessel_integral(z[~small])[1]
    return out[0] if scalar else out


def hankel1(sign, z):
    """H1(z) = J1(z) + sign * i * Y1(z) for real z > 0; sign in {+1, -1}."""
    _check_sign(sign)
    return bessel_j1(z) + 1j * sign * bessel_y1(z)


def _check_sign(sign):
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")


def free_resolvent_kernel(sign, lam, r):
    """Kernel of the 4D free resolvent boundary value at energy lam^2.

    R0(sign)(lam^2)(x, y) = sign * (i/4) * lam/(2 pi r) * H1(sign)(lam r)
    with r = |x - y| > 0, lam > 0.
    """
    _check_sign(sign)
    if np.any(np.asarray(lam) <= 0):
        raise ValueError("lam must be positive")
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("r must be positive (diagonal handled by callers)")
    return sign * 0.25j * lam / (2.0 * np.pi * r) * hankel1(sign, lam * r)


def resolvent_difference_kernel(lam, r):
    """R0(+)(lam^2) - R0(-)(lam^2) = i lam J1(lam r) / (4 pi r).

    Closed form used to preserve the +/- cancellation in the spectral
    measure; purely imaginary for real arguments.
    """
    r = np.asarray(r, dtype=float)
    return 0.25j * lam * bessel_j1(lam * r) / (np.pi * r)


# ---------------------------------------------------------------------------
# expansion kernels

def g0_kernel(r):
    """Green's function of -Laplace in 4D: 1/(4 pi^2 r^2)."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("g0_kernel requires r > 0")
    return 1.0 / (4.0 * np.pi**2 * r * r)


def g1_kernel(r):
    """Kernel -log(r) / (8 pi^2) of the lam^2 expansion term."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("g1_kernel requires r > 0")
    return -np.log(r) / (8.0 * np.pi**2)


def g2_kernel(r, constants=None):
    """Kernel c2 * r^2 (defined at r = 0 as well)."""
    c = constants or default_constants()
    r = np.asarray(r, dtype=float)
    return c.c2 * r * r


def g3_kernel(r, constants=None):
    """Kernel c3 * r^2 log(r)."""
    c = constants or default_constants()
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("g3_kernel requires r > 0")
    return c.c3 * r * r * np.log(r)


def g_scalars(sign, lam, constants=None):
    """Scalar coefficients (gs1, gs2) of the small-lam resolvent expansion.

    gs1 = lam^2 (a1 log lam + z1), gs2 = lam^4 (a2 log lam + z2); the
    minus branch conjugates z1, z2.
    """
    _check_sign(sign)
    c = constants or default_constants()
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0) or np.any(lam >= 1):
        raise ValueError("g_scalars requires 0 < lam < 1")
    z1 = c.z1 if sign == 1 else np.conj(c.z1)
    z2 = c.z2 if sign == 1 else np.conj(c.z2)
    log_lam = np.log(lam)
    return (lam**2 * (c.a1 * log_lam + z1), lam**4 * (c.a2 * log_lam + z2))


def expansion_partial_sum(level, lam, r, constants=None, sign=1):
    """Partial sum of the small-lam expansion of R0 through the given level.

    level 0: g0;  level 1: + gs1 + lam^2 g1;  level 2: + gs2 g2 + lam^4 g3.
    """
    c = constants or default_constants()
    total = g0_kernel(r) + 0j
    if level >= 1:
        gs1, gs2 = g_scalars(sign, lam, c)
        total = total + gs1 + lam**2 * g1_kernel(r)
        if level >= 2:
            total = total + gs2 * g2_kernel(r, c) + lam**4 * g3_kernel(r, c)
    return total


# ---------------------------------------------------------------------------
# constants fit

def _lstsq(A, b):
    coef, *_ = np.linalg.lstsq(A, b, rcond=None)
    return coef


def constants_fit():
    """Determine all expansion constants by least-squares self-consistency.

    b1, b2 come from the Y1 power series; a1, z1 from the spatially
    constant lam^2 log(lam) part of R0 - g0; a2, z2, c3 from the r^2 part
    at the next order. c2 is a pure normalization and fixed to 1.
    The fit raises if the residual does not decay at the documented
    order, which signals a special-function bug.
    """
    # --- Y1 series constants: Y1 + 2/(pi z) - z log(z/2)/pi + z^3 log(z/2)/(8 pi)
    #     = b1 z + b2 z^3 + O(z^5 log z)
    z = np.geomspace(1e-3, 0.4, 60)
    ry = bessel_y1(z) + 2.0 / (np.pi * z) - z * np.log(0.5 * z) / np.pi \
        + z**3 * np.log(0.5 * z) / (8.0 * np.pi)
    A = np.stack([z, z**3, z**5, z**5 * np.log(z)], axis=1)
    cy = _lstsq(A, ry)
    b1, b2 = float(cy[0]), float(cy[1])

    # --- resolvent constants: one weighted joint fit of all levels.
    #     After removing g0 and lam^2 g1 the remainder, scaled by 1/lam^2,
    #     is a1 log lam + z1 + (lam r)^2 (a2 log lam + z2 + c3 log r) + ...
    #     with the next order spanned by (lam r)^4 log-monomials.
    lam = np.geomspace(1e-3, 1e-1, 24)
    r = np.geomspace(0.1, 0.7, 14)
    L, R = np.meshgrid(lam, r, indexing="ij")
    res = free_resolvent_kernel(1, L, R) - g0_kernel(R) - L**2 * g1_kernel(R)
    lr, rr = L.ravel(), R.ravel()
    y = res.ravel() / lr**2
    q = (lr * rr) ** 2
    A = np.stack([np.log(lr), np.ones(lr.size),
                  q * np.log(lr), q, q * np.log(rr),
                  q**2 * np.log(lr), q**2, q**2 * np.log(rr),
                  q**2 * np.log(lr) * np.log(rr)], axis=1)
    cf = _lstsq(A.astype(complex), y)
    for idx in (0, 2, 4):
        if abs(cf[idx].imag) > 1e-4 * abs(cf[idx].real):
            raise RuntimeError("log-coefficient fit produced a complex value")
    a1, z1 = float(cf[0].real), complex(cf[1])
    a2, z2, c3 = float(cf[2].real), complex(cf[3]), float(cf[4].real)

    consts = ExpansionConstants(a1=a1, z1=z1, a2=a2, z2=z2,
                                b1=b1, b2=b2, c2=1.0, c3=c3)
    _check_fit_orders(consts)
    return consts


def _check_fit_orders(consts):
    # remainder after the full level-2 sum must decay ~ lam^6 r^4 |log|
    # (lam large enough that the remainder is above the machine floor)
    lam = np.array([0.1, 0.2, 0.3])
    r = 1.0
    rem = np.abs(free_resolvent_kernel(1, lam, r)
                 - expansion_partial_sum(2, lam, r, consts))
    slope = np.polyfit(np.log(lam), np.log(rem / np.abs(np.log(lam * r))), 1)[0]
    if not 5.0 < slope < 7.0:
        raise RuntimeError(
            f"expansion remainder order {slope:.2f} outside [5, 7]; "
            "special-function inconsistency")


@functools.lru_cache(maxsize=1)
def default_constants():
    """Fitted ExpansionConstants, computed once per process."""
    return constants_fit()
