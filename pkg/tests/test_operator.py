"""Grid construction, potentials, and dense operator assembly."""

import numpy as np
import pytest

from reslab import operator, specfun


def test_grid_weights_integrate_box_volume(grid):
    assert abs(np.sum(grid.weights) - 16.0) < 1.0e-12
    # quadrature is exact for low-order polynomials
    val = np.sum(grid.weights * grid.nodes[:, 0] ** 2)
    assert abs(val - 16.0 / 3.0) < 1.0e-12


def test_grid_cell_radius_matches_cell_volume(grid):
    vols = (np.pi**2 / 2.0) * grid.cell_radius**4
    assert np.max(np.abs(vols - grid.weights)) < 1.0e-14


def test_build_grid_validation():
    with pytest.raises(ValueError):
        operator.build_grid(nodes_per_dim=3)
    with pytest.raises(ValueError):
        operator.build_grid(nodes_per_dim=17)
    with pytest.raises(ValueError):
        operator.build_grid(nodes_per_dim=12)  # 12^4 > MAX_GRID_SIZE


def test_pairwise_distance_symmetry(grid):
    r = grid.pairwise_distance()
    assert r.shape == (grid.size, grid.size)
    assert np.max(np.abs(r - r.T)) < 1.0e-14
    assert np.all(np.diag(r) == 0.0)


def test_bump_potential_sign_support_and_norm(grid):
    g = 3.0
    pot = operator.bump_potential(g, grid)
    rr = np.sqrt(np.einsum("ij,ij->i", grid.nodes, grid.nodes))
    inside = rr < 1.0
    assert np.all(pot.V[inside] < 0.0)
    assert np.all(pot.V[~inside] == 0.0)
    # V = U v^2 with U = sign(V)
    assert np.max(np.abs(pot.U * pot.v**2 - pot.V)) < 1.0e-13
    assert np.all(pot.U[inside] == -1.0)
    # ||V||_1 = g * Int (1-|x|^2)^2 over the unit 4-ball
    # = g * 2 pi^2 Int_0^1 (1-r^2)^2 r^3 dr = g pi^2 / 12; the quadrature
    # only sees the truncated integrand, so expect percent-level accuracy
    assert abs(pot.l1_norm - g * np.pi**2 / 12.0) < 1.0e-2 * pot.l1_norm


def test_twin_bumps_even_in_x1(grid):
    pot = operator.twin_bumps_potential(5.0, grid)
    perm = operator.reflection_permutation(grid)
    assert np.max(np.abs(pot.V[perm] - pot.V)) == 0.0
    # vanishes on the reflection plane neighbourhood relative to the lobes
    assert np.all(pot.V <= 0.0)
    assert pot.l1_norm > 0.0


def test_pair_plus_bump_supports_disjoint(grid):
    pot = operator.pair_plus_bump_potential(10.0, 10.0, grid)
    x = grid.nodes
    off = operator._PAIR_CENTER_OFFSET
    da = np.sqrt(x[:, 0] ** 2 + (x[:, 1] + off) ** 2
                 + x[:, 2] ** 2 + x[:, 3] ** 2)
    db = np.sqrt(x[:, 0] ** 2 + (x[:, 1] - off) ** 2
                 + x[:, 2] ** 2 + x[:, 3] ** 2)
    in_a = da < operator._PAIR_RADIUS
    in_b = db < operator._BUMP_RADIUS
    assert not np.any(in_a & in_b)
    assert np.any(pot.V[in_b] < 0.0)


def test_reflection_permutation_is_involution(grid):
    perm = operator.reflection_permutation(grid)
    assert np.array_equal(perm[perm], np.arange(grid.size))
    assert np.max(np.abs(grid.nodes[perm][:, 0] + grid.nodes[:, 0])) == 0.0
    assert np.max(np.abs(grid.nodes[perm][:, 1:] - grid.nodes[:, 1:])) == 0.0


def test_zero_potential_rejected(grid):
    with pytest.raises(ValueError):
        operator.Potential.from_samples("null", 0.0,
                                        np.zeros(grid.size), grid)


def test_g0_operator_symmetric_and_positive(grid):
    g0 = operator.assemble_g_kernel(0, grid)
    assert g0.adjoint_residual() < 1.0e-13
    vals = np.linalg.eigvalsh(g0.sym())
    assert vals.min() > 0.0


def test_g2_kernel_low_rank(grid):
    # r^2 = |x|^2 + |y|^2 - 2 x.y separates into at most 6 products; the
    # ball-averaged diagonal adds a small full-rank floor below 1e-4 rel
    g2 = operator.assemble_g_kernel(2, grid)
    s = np.linalg.svd(g2.sym(), compute_uv=False)
    assert np.sum(s > 1.0e-3 * s[0]) <= 6


def test_diagonal_ball_average_numeric_matches_closed_form(grid):
    radii = grid.cell_radius[:8]
    num = operator._diag_average_numeric(specfun.g0_kernel, radii)
    ref = operator._g0_ball_average(radii)
    assert np.max(np.abs(num - ref) / np.abs(ref)) < 1.0e-8
    num1 = operator._diag_average_numeric(specfun.g1_kernel, radii)
    ref1 = operator._g1_ball_average(radii)
    assert np.max(np.abs(num1 - ref1) / np.abs(ref1)) < 1.0e-8


def test_resolvent_assembly_consistent_with_expansion(grid):
    # M-assembly consistency at small lam: R0 ~ g0 + gs1 + lam^2 g1 + ...
    lam = 1.0e-3
    r0 = operator.assemble_resolvent(+1, lam, grid)
    c = specfun.default_constants()
    gs1, gs2 = specfun.g_scalars(+1, lam, c)
    g0 = operator.assemble_g_kernel(0, grid)
    g1 = operator.assemble_g_kernel(1, grid)
    approx = g0.mat + gs1 * (np.ones(grid.size)[:, None]
                             * grid.weights[None, :]) + lam**2 * g1.mat
    rel = np.linalg.norm(r0.mat - approx) / np.linalg.norm(r0.mat)
    assert rel < 1.0e-4


def test_resolution_guard(grid):
    with pytest.raises(ValueError):
        operator.assemble_resolvent(+1, 100.0, grid)
    with pytest.raises(ValueError):
        operator.assemble_resolvent(+1, 0.0, grid)


def test_T_symmetric_and_real(grid, pot_first):
    T = operator.assemble_T(pot_first, grid)
    s = T.sym()
    assert np.max(np.abs(s - s.T)) < 1.0e-12 * np.linalg.norm(s)
    assert np.isrealobj(s) or np.max(np.abs(s.imag)) == 0.0


def test_P_is_rank_one_projection(grid, pot_first):
    P = operator.assemble_P(pot_first, grid)
    # P^2 = P and rank 1
    diff = (P @ P).mat - P.mat
    assert np.max(np.abs(diff)) < 1.0e-10 * np.max(np.abs(P.mat))
    s = np.linalg.svd(P.sym(), compute_uv=False)
    assert np.sum(s > 1.0e-10 * s[0]) == 1


def test_M_reduces_to_T_at_small_lam(grid, pot_first):
    T = operator.assemble_T(pot_first, grid)
    M = operator.assemble_M(+1, 1.0e-4, pot_first, grid)
    rel = np.linalg.norm(M.mat.real - T.mat) / np.linalg.norm(T.mat)
    assert rel < 1.0e-3
