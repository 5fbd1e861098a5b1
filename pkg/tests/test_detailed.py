import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nlrb.affine_delta import CASE1, CASE2, make_partition
from nlrb.affine_s import chebyshev_nodes
from nlrb.detailed import (DELTA, build_delta_model, build_s_model, error_norm, norm_gram, solve_affine_delta,
                           solve_exact_delta, solve_exact_s, solve_regularized_s)
from nlrb.fem import build_mesh

PART = make_partition(1 / 16, 1, 8)


@pytest.fixture(scope="module")
def dmodel():
    return build_delta_model(build_mesh(0, 1, 64), 0.5, PART, CASE2)


@pytest.fixture(scope="module")
def smodel():
    return build_s_model(build_mesh(0, 1, 64), 0.25, chebyshev_nodes(1 / 3, 1 / 2, 4))


def test_zero_load_gives_zero():
    m = build_delta_model(build_mesh(0, 1, 16), 0.5, PART, F=0.0)
    assert np.array_equal(solve_exact_delta(m, 0.3).coeffs, np.zeros(m.n_dofs))
    sm = build_s_model(build_mesh(0, 1, 16), 0.25, chebyshev_nodes(1 / 3, 1 / 2, 2), F=0.0)
    assert np.array_equal(solve_exact_s(sm, 0.4).coeffs, np.zeros(sm.n_dofs))


def test_linearity_in_the_load():
    mesh = build_mesh(0, 1, 32)
    u1 = solve_exact_delta(build_delta_model(mesh, 0.5, PART, F=-1.0), 0.3).coeffs
    u2 = solve_exact_delta(build_delta_model(mesh, 0.5, PART, F=-2.0), 0.3).coeffs
    assert np.allclose(u2, 2 * u1, rtol=1e-13)


def test_energy_norm_stable_under_refinement():
    norms = []
    for n in (64, 128):
        m = build_delta_model(build_mesh(0, 1, n), 0.5, make_partition(1 / 4, 1, 2), pivot_delta=0.5)
        u = solve_exact_delta(m, 0.5).coeffs
        norms.append(math.sqrt(u @ m.pivot_gram @ u))
    assert abs(norms[1] - norms[0]) <= 0.05 * norms[1]


def test_galerkin_residual_is_small(dmodel):
    for d in (0.07, 0.5, 1.0):
        sol = solve_exact_delta(dmodel, d)
        f = dmodel.rhs.vector(d)
        assert sol.solver_residual <= 1e-12 * np.linalg.norm(f)


@pytest.mark.parametrize("case", [CASE1, CASE2])
def test_affine_solve_at_anchor_is_exact(case):
    m = build_delta_model(build_mesh(0, 1, 32), 0.5, PART, case)
    for d in PART.anchors:
        assert np.array_equal(solve_affine_delta(m, float(d)).coeffs, solve_exact_delta(m, float(d)).coeffs)


def test_affine_delta_outside_range_rejected(dmodel):
    with pytest.raises(ValueError):
        solve_affine_delta(dmodel, 1.5)


def _max_affine_error(mesh, case, K, cache):
    p = make_partition(1 / 16, 1, K)
    m = build_delta_model(mesh, 0.5, p, case, truth_cache=cache)
    pts = np.linspace(p.anchors[0], p.anchors[3], 31)
    return max(error_norm(m, solve_exact_delta(m, d), solve_affine_delta(m, d)) for d in pts)


@pytest.mark.parametrize("case,lo,hi", [(CASE1, 1.6, 2.4), (CASE2, 3.2, 4.8)])
def test_halving_the_anchor_step(mesh7, case, lo, hi):
    cache = {}
    ratio = _max_affine_error(mesh7, case, 122, cache) / _max_affine_error(mesh7, case, 244, cache)
    assert lo <= ratio <= hi


def test_case2_beats_case1(mesh7):
    train = 1 / 16 + np.arange(121) / 128
    errs = {}
    cache = {}
    for case in (CASE1, CASE2):
        m = build_delta_model(mesh7, 0.5, make_partition(1 / 16, 1, 9), case, truth_cache=cache)
        errs[case] = max(error_norm(m, solve_exact_delta(m, d), solve_affine_delta(m, d)) for d in train)
    assert errs[CASE2] < errs[CASE1]


@pytest.mark.parametrize("case", [CASE1, CASE2])
def test_affine_error_within_a_priori_bound(case):
    mesh = build_mesh(0, 1, 32)
    m = build_delta_model(mesh, 0.5, PART, case)
    c = m.constants
    for d in np.linspace(1 / 16, 1, 23):
        u = solve_exact_delta(m, d).coeffs
        e = error_norm(m, u, solve_affine_delta(m, d))
        step = PART.local_step(d)
        if case == CASE1:
            bound = c.C_P / c.alpha_a * c.C_a * step * math.sqrt(u @ m.mass @ u)
        else:
            bound = c.C_P / c.alpha_a * c.L_aprime * step**2 * math.sqrt(u @ m.h1_gram @ u)
        assert e <= bound


def test_s_continuity(smodel):
    u = solve_exact_s(smodel, 0.4)
    v = solve_exact_s(smodel, 0.401)
    assert error_norm(smodel, u, v, "V_s", 0.4) <= 1e-2 * error_norm(smodel, u, 0 * u.coeffs, "V_s", 0.4)


def test_full_space_solution_independent_of_splitting_radius():
    mesh = build_mesh(0, 1, 64)
    grid = chebyshev_nodes(1 / 3, 1 / 2, 2)
    u1 = solve_exact_s(build_s_model(mesh, math.inf, grid, delta_p=1.0), 0.5).coeffs
    u2 = solve_exact_s(build_s_model(mesh, math.inf, grid, delta_p=2.0), 0.5).coeffs
    assert np.max(np.abs(u1 - u2)) <= 1e-8 * np.max(np.abs(u1))


def test_regularized_at_node_without_rho_is_exact():
    mesh = build_mesh(0, 1, 32)
    grid = chebyshev_nodes(1 / 3, 1 / 2, 4)
    m = build_s_model(mesh, 0.25, grid)
    s = float(grid.nodes[2])
    A = m.decomposition.matrix(s, rho=0.0)
    u = np.linalg.solve(A, m.rhs.vector(s))
    assert np.allclose(u, solve_exact_s(m, s).coeffs, rtol=1e-12, atol=0)


def test_regularized_error_decreases_in_M(mesh7):
    errs = []
    for M in (4, 8):
        m = build_s_model(mesh7, 0.25, chebyshev_nodes(1 / 3, 1 / 2, M))
        errs.append(max(error_norm(m, solve_exact_s(m, s), solve_regularized_s(m, s), "V_s", s)
                        for s in (0.34, 0.4, 0.45, 0.49)))
    assert errs[1] < errs[0]


def test_smaller_rho_leaves_the_interpolation_error():
    mesh = build_mesh(0, 1, 32)
    grid = chebyshev_nodes(1 / 3, 1 / 2, 6)
    base = build_s_model(mesh, 0.25, grid)
    reg = base.decomposition.reg
    small = build_s_model(mesh, 0.25, grid, rho=1.01 * reg.interp_bound)
    s = 0.41
    u = solve_exact_s(base, s)
    e_big = error_norm(base, u, solve_regularized_s(base, s), "V_s", s)
    e_small = error_norm(small, u, solve_regularized_s(small, s), "V_s", s)
    assert e_small < e_big


def test_regularized_outside_grid_rejected(smodel):
    with pytest.raises(ValueError):
        solve_regularized_s(smodel, 0.6)
    with pytest.raises(ValueError):
        solve_exact_s(smodel, 1.0)


def test_error_norm_tags(dmodel):
    u = solve_exact_delta(dmodel, 0.3)
    assert error_norm(dmodel, u, u) == 0.0
    with pytest.raises(ValueError):
        norm_gram(dmodel, "W")
    with pytest.raises(ValueError):
        error_norm(dmodel, u, np.ones(3))
    with pytest.raises(ValueError):
        norm_gram(dmodel, "V_s", 0.4)
    assert dmodel.variant == DELTA


@given(st.lists(st.floats(-5, 5), min_size=3 * 63, max_size=3 * 63))
def test_triangle_inequality(vals):
    m = build_delta_model(build_mesh(0, 1, 64), 0.5, make_partition(1 / 16, 1, 1))
    a, b, c = np.array(vals).reshape(3, 63)
    for tag in ("V_pivot", "L2", "H1"):
        assert error_norm(m, a, c, tag) <= error_norm(m, a, b, tag) + error_norm(m, b, c, tag) + 1e-9
