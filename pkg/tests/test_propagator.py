"""Oscillatory quadrature, Stone kernels, corrections, decay fits."""

import numpy as np
import pytest
import scipy.integrate
import scipy.special

from reslab import oracle, propagator, specfun, spectral


# ---------------------------------------------------------------------------
# quadrature building blocks

def test_spherical_bessel_against_scipy():
    ns = np.arange(12)
    for theta in (1.0e-8, 0.3, 2.0, 8.0, 40.0, 300.0):
        vals = propagator._spherical_jn(11, theta)
        ref = scipy.special.spherical_jn(ns, theta)
        assert np.max(np.abs(vals - ref)) < 1.0e-12, theta


def test_filon_moments_against_quadrature():
    theta = 3.7
    mu = propagator._filon_moments(5, theta)
    for n in range(6):
        c = np.zeros(n + 1)
        c[n] = 1.0

        def f(x):
            return np.polynomial.legendre.legval(x, c)

        re, _ = scipy.integrate.quad(
            lambda x: f(x) * np.cos(theta * x), -1, 1, epsabs=1e-13)
        im, _ = scipy.integrate.quad(
            lambda x: f(x) * np.sin(theta * x), -1, 1, epsabs=1e-13)
        assert abs(mu[n] - (re + 1j * im)) < 1.0e-11


def test_oscillatory_integral_closed_forms():
    t = 37.0
    val, est = propagator.oscillatory_integral(
        lambda lam: lam, "schrodinger", t, (0.0, 1.0), tol=1e-8)
    exact = (np.exp(1j * t) - 1.0) / (2j * t)
    assert abs(val - exact) < 1.0e-8

    val, _ = propagator.oscillatory_integral(
        lambda lam: np.ones_like(lam), "cos", t, (0.0, 1.0), tol=1e-8)
    assert abs(val - np.sin(t) / t) < 1.0e-8

    val, _ = propagator.oscillatory_integral(
        lambda lam: np.ones_like(lam), "sin", t, (0.0, 1.0), tol=1e-8)
    assert abs(val - (1.0 - np.cos(t)) / t) < 1.0e-8


def test_oscillatory_integral_zero_phase_is_plain_integral():
    chi = propagator.CutoffSpec(0.2).chi
    val, _ = propagator.oscillatory_integral(chi, "cos", 0.0, (0.0, 0.2),
                                             tol=1e-9)
    ref, _ = scipy.integrate.quad(lambda x: float(chi(x)), 0.0, 0.2,
                                  epsabs=1e-13, limit=200)
    assert abs(val - ref) < 1.0e-9


def test_oscillatory_integral_time_reversal_conjugation():
    t = 12.5

    def f(lam):
        return np.exp(-lam) * (1.0 + lam**2)

    vp, _ = propagator.oscillatory_integral(f, "schrodinger", t, (0.0, 2.0),
                                            tol=1e-8)
    vm, _ = propagator.oscillatory_integral(f, "schrodinger", -t, (0.0, 2.0),
                                            tol=1e-8)
    assert abs(vm - np.conj(vp)) < 1.0e-10


def test_oscillatory_integral_fresnel():
    t, eps = 10.0, 1.0e-4
    lam_hi = np.sqrt(36.0 / eps)
    val, _ = propagator.oscillatory_integral(
        lambda lam: np.exp(-eps * lam**2), "schrodinger", t,
        (0.0, lam_hi), tol=1e-6)
    exact = 0.5 * np.sqrt(np.pi / (eps - 1j * t))
    assert abs(val - exact) / abs(exact) < 1.0e-6
    fresnel = 0.5 * np.sqrt(np.pi / t) * np.exp(1j * np.pi / 4.0)
    assert abs(val - fresnel) / abs(fresnel) < 1.0e-4


def test_oscillatory_integral_near_singular_amplitude():
    # regression: a near-singular amplitude on a support bounded away
    # from zero must be panelled geometrically toward the lower
    # endpoint, otherwise a single wide panel aliases it while the
    # Legendre-tail estimate reads ~0
    t, a, b = 30.0, 1.0e-6, 0.2

    def f(lam):
        return 1.0 / (lam * np.log(lam) ** 2)

    val, est = propagator.oscillatory_integral(f, "cos", t, (a, b), tol=1e-6)
    # brute force in u = log lam (smooth, non-oscillatory integrand)
    u = np.linspace(np.log(a), np.log(b), 400001)
    lam = np.exp(u)
    ref = np.trapezoid(np.cos(t * lam) / np.log(lam) ** 2, u)
    assert abs(val - ref) / abs(ref) < 1.0e-6


def test_oscillatory_integral_invalid_support():
    with pytest.raises(ValueError):
        propagator.oscillatory_integral(lambda lam: lam, "cos", 1.0,
                                        (1.0, 0.5))


def test_cutoff_profile():
    cut = propagator.CutoffSpec(0.2)
    lam = np.linspace(0.0, 0.3, 301)
    chi = cut.chi(lam)
    assert np.all(chi[lam <= 0.1] == 1.0)
    assert np.all(chi[lam >= 0.2] == 0.0)
    assert np.all(np.diff(chi) <= 1.0e-15)
    with pytest.raises(ValueError):
        propagator.CutoffSpec(0.0)


# ---------------------------------------------------------------------------
# perturbed resolvent and Stone integrand

def test_perturbed_kernel_free_case_matches_specfun():
    x = np.array([0.3, 0.1, -0.2, 0.05])
    y = np.array([1.7, 0.3, 0.0, 0.2])
    lam = 0.07
    val = propagator.perturbed_resolvent_kernel(+1, lam, x, y, None)
    r = float(np.linalg.norm(x - y))
    ref = specfun.free_resolvent_kernel(+1, lam, r)
    assert abs(val - ref) < 1.0e-14 * abs(ref)


def test_perturbed_kernel_symmetry_and_conjugation(spec_first):
    x = np.array([0.3, 0.1, -0.2, 0.05])
    y = np.array([1.7, 0.3, 0.0, 0.2])
    lam = 0.05
    kxy = propagator.perturbed_resolvent_kernel(+1, lam, x, y, spec_first)
    kyx = propagator.perturbed_resolvent_kernel(+1, lam, y, x, spec_first)
    assert abs(kxy - kyx) < 1.0e-10 * abs(kxy)
    km = propagator.perturbed_resolvent_kernel(-1, lam, x, y, spec_first)
    assert abs(km - np.conj(kxy)) < 1.0e-10 * abs(kxy)


def test_born_series_matches_symmetric_identity(spec_first):
    # four-term Born representation against the two-term identity
    # R_V = R0 - R0 v M^{-1} v R0 evaluated with the same quadrature
    lam = 0.05
    x = np.array([0.3, 0.1, -0.2, 0.05])
    y = np.array([-0.15, 0.35, 0.1, -0.1])
    born = propagator.perturbed_resolvent_kernel(+1, lam, x, y, spec_first)

    grid, pot = spec_first.grid, spec_first.potential
    sw = np.sqrt(grid.weights)
    a = specfun.free_resolvent_kernel(
        +1, lam, np.linalg.norm(x - grid.nodes, axis=1))
    b = specfun.free_resolvent_kernel(
        +1, lam, np.linalg.norm(y - grid.nodes, axis=1))
    minv = propagator._minv_apply_factory(spec_first, +1, lam)
    rhs = (sw * pot.v * b).astype(complex)
    free = specfun.free_resolvent_kernel(+1, lam,
                                         float(np.linalg.norm(x - y)))
    two_term = free - (sw * pot.v * a) @ minv(rhs)
    assert abs(born - two_term) < 1.0e-6 * abs(born)


def test_stone_integrand_is_real_difference(spec_first):
    cut = propagator.CutoffSpec(0.25)
    lam = 0.04
    x = np.array([0.3, 0.1, -0.2, 0.05])
    y = np.array([-0.15, 0.35, 0.1, -0.1])
    val = propagator.stone_integrand(lam, x, y, spec_first, cut)
    assert val.imag == 0.0
    plus = propagator.perturbed_resolvent_kernel(+1, lam, x, y, spec_first)
    minus = propagator.perturbed_resolvent_kernel(-1, lam, x, y, spec_first)
    ref = lam * float(cut.chi(lam)) * (plus - minus) / (2j * np.pi)
    assert abs(val - ref) < 1.0e-12 * max(abs(ref), 1e-300)
    # outside the cutoff support the integrand vanishes identically
    assert propagator.stone_integrand(0.3, x, y, spec_first, cut) == 0.0


def test_stone_integrand_regular_vanishes_superlinearly(spec_regular):
    # regular case: Im R_V^+ itself is O(lam^2), so the integrand
    # lam chi Im R_V^+ / pi vanishes like lam^3 (at least linearly)
    cut = propagator.CutoffSpec(0.25)
    x = np.array([0.3, 0.1, -0.2, 0.05])
    y = np.array([-0.15, 0.35, 0.1, -0.1])
    v1 = propagator.stone_integrand(1.0e-3, x, y, spec_regular, cut)
    v2 = propagator.stone_integrand(2.0e-3, x, y, spec_regular, cut)
    ratio = abs(v2) / abs(v1)
    assert abs(ratio - 8.0) < 0.5
    assert abs(v1) < 1.0e-6


def test_stone_integrand_first_kind_log_singularity(spec_first):
    # amplitude ~ 1/(lam log^2 lam): lam*|integrand| ratio tracks
    # (log lam)^-2
    cut = propagator.CutoffSpec(0.25)
    x = np.array([0.3, 0.1, -0.2, 0.05])
    y = np.array([-0.15, 0.35, 0.1, -0.1])
    l1, l2 = 1.0e-4, 1.0e-6
    v1 = abs(propagator.stone_integrand(l1, x, y, spec_first, cut))
    v2 = abs(propagator.stone_integrand(l2, x, y, spec_first, cut))
    pred = (l1 * np.log(l1) ** 2) / (l2 * np.log(l2) ** 2)
    assert abs((v2 / v1) / pred - 1.0) < 0.2


# ---------------------------------------------------------------------------
# kernels

def test_free_stone_matches_exact_propagator():
    t, r = 10.0, 1.0
    val, est = propagator.free_stone_integral(t, r)
    ref = oracle.free_propagator_exact(t, r)
    assert abs(val - ref) / abs(ref) < 1.0e-3


def test_free_stone_self_validation():
    t, r = 25.0, 0.7
    v1, e1 = propagator.free_stone_integral(t, r, tol=1e-4)
    v2, _ = propagator.free_stone_integral(t, r, tol=5e-5)
    assert abs(v1 - v2) <= max(e1, 1e-12)


def test_time_reversal_symmetries(spec_first):
    cut = propagator.CutoffSpec(0.25)
    pairs = propagator.default_probe_pairs()[:4]
    t = 15.0
    sp = propagator.schrodinger_kernel(t, pairs, spec_first, cut)
    sm = propagator.schrodinger_kernel(-t, pairs, spec_first, cut)
    assert np.max(np.abs(sm.values - np.conj(sp.values))) \
        < 1.0e-10 * sp.sup_proxy
    cp, sip = propagator.wave_kernels(t, pairs, spec_first, cut)
    cm, sim = propagator.wave_kernels(-t, pairs, spec_first, cut)
    assert np.max(np.abs(cm.values - cp.values)) < 1.0e-10 * cp.sup_proxy
    assert np.max(np.abs(sim.values + sip.values)) < 1.0e-10 * sip.sup_proxy


def test_kernel_sweep_matches_single_times(spec_first):
    cut = propagator.CutoffSpec(0.25)
    pairs = propagator.default_probe_pairs()[:3]
    ts = np.array([12.0, 40.0])
    cache = propagator.StoneCache(spec_first, pairs, cut)
    sweep = propagator.kernel_sweep(ts, pairs, spec_first, cut,
                                    flows=("schrodinger",), cache=cache)
    assert len(sweep["schrodinger"]) == 2
    for s in sweep["schrodinger"]:
        assert s.values.shape == (3,)
        assert s.sup_proxy == np.max(np.abs(s.values))
        assert not s.flagged


# ---------------------------------------------------------------------------
# finite-rank corrections

def test_finite_rank_correction_ranks(spec_first, spec_third):
    cut = propagator.CutoffSpec(0.25)
    phi1, K1 = propagator.finite_rank_correction(20.0, spec_first, cut)
    s = np.linalg.svd(K1.sym(), compute_uv=False)
    assert np.sum(s > 1.0e-8 * s[0]) == 1
    phi3, K3 = propagator.finite_rank_correction(20.0, spec_third, cut)
    s3 = np.linalg.svd(K3.sym(), compute_uv=False)
    assert np.sum(s3 > 1.0e-8 * s3[0]) <= 2
    assert abs(phi1) > 0 and abs(phi3) > 0


def test_finite_rank_correction_rejects_second_kind(spec_second):
    cut = propagator.CutoffSpec(0.25)
    with pytest.raises(ValueError):
        propagator.finite_rank_correction(20.0, spec_second, cut)


def test_phi_correction_log_decay(spec_first):
    cut = propagator.CutoffSpec(0.25)
    ts = np.array([10.0, 100.0, 1000.0])
    phi = propagator.phi_correction(ts, spec_first, cut, "schrodinger")
    scaled = np.abs(phi) * np.log(ts)
    assert scaled.max() / scaled.min() < 3.0
    # sin flow grows ~ t/log t
    phis = propagator.phi_correction(ts, spec_first, cut, "wave_sin")
    scaled_sin = np.abs(phis) * np.log(ts) / ts
    assert scaled_sin.max() / scaled_sin.min() < 3.0


# ---------------------------------------------------------------------------
# decay fits

def test_decay_fit_exact_power_law():
    t = np.geomspace(10.0, 1.0e4, 40)
    fit = propagator.decay_fit((t, 3.0 / t), "power")
    assert abs(fit.params["p"] - 1.0) < 1.0e-6
    assert abs(fit.params["c"] - 3.0) < 1.0e-6
    assert fit.r_squared > 1.0 - 1.0e-12


def test_decay_fit_log_law_recovery():
    t = np.geomspace(1.0e2, 1.0e5, 60)
    y = 2.0 / np.log(t) + 0.1 / t
    fit = propagator.decay_fit((t, y), "log")
    assert abs(fit.params["c"] - 2.0) < 0.05 * 2.0
    assert 0.0 <= fit.r_squared <= 1.0


def test_decay_fit_t_over_log_recovery():
    t = np.geomspace(10.0, 1.0e4, 40)
    y = 1.7 * t / np.log(t / 0.5)
    fit = propagator.decay_fit((t, y), "t_over_log")
    assert abs(fit.params["c"] - 1.7) < 1.0e-6
    assert abs(fit.params["t0"] - 0.5) < 1.0e-6


def test_decay_fit_constant_data():
    t = np.geomspace(10.0, 1.0e4, 40)
    fit = propagator.decay_fit((t, np.full_like(t, 2.5)), "power")
    assert abs(fit.params["p"]) < 1.0e-12


def test_decay_fit_validation():
    t = np.geomspace(10.0, 20.0, 40)          # < 1.5 decades
    with pytest.raises(ValueError):
        propagator.decay_fit((t, 1.0 / t), "power")
    t = np.geomspace(10.0, 1.0e4, 5)          # < 8 samples
    with pytest.raises(ValueError):
        propagator.decay_fit((t, 1.0 / t), "power")
    t = np.geomspace(10.0, 1.0e4, 40)
    with pytest.raises(ValueError):
        propagator.decay_fit((t, 1.0 / t), "nope")


def test_default_time_grid():
    ts = propagator.default_time_grid()
    assert ts[0] == 4.0 and abs(ts[-1] - 1.0e4) < 1e-9
    per_decade = (ts.size - 1) / np.log10(ts[-1] / ts[0])
    assert abs(per_decade - 16.0) < 1.0
