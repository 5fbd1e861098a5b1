import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nlrb.affine_delta import (CASE1, CASE2, DeltaPartition, build_affine_delta, case1_switch_point, coeffs_case1,
                               coeffs_case2, combine, compute_delta_constants, make_partition)
from nlrb.assembly import KernelSpec, assemble_nonlocal
from nlrb.fem import assemble_h1_gram, assemble_mass, build_mesh, interpolate

PART = make_partition(1 / 16, 1.0, 8)


def test_graded_partition_values():
    p = make_partition(1 / 16, 1.0, 4, "graded")
    assert np.allclose(p.anchors, [1 / 16, 1 / 8, 1 / 4, 1 / 2, 1])


def test_uniform_partition_values():
    assert np.array_equal(make_partition(1 / 16, 1, 1).anchors, [1 / 16, 1.0])
    p = make_partition(0.0625, 1, 120)
    assert np.allclose(np.diff(p.anchors), 2.0**-7)
    assert p.step == pytest.approx(2.0**-7)


@pytest.mark.parametrize("args", [(0.5, 0.25, 3), (0.0, 1.0, 3), (0.1, 1.0, 0)])
def test_partition_preconditions(args):
    with pytest.raises(ValueError):
        make_partition(*args)


def test_partition_rejects_unsorted_anchors():
    with pytest.raises(ValueError):
        DeltaPartition(np.array([0.1, 0.3, 0.2]))


def test_bracket_uses_left_open_intervals():
    p = make_partition(1, 3, 2)
    assert p.bracket(1.0) == 1 and p.bracket(2.0) == 1 and p.bracket(2.0001) == 2
    with pytest.raises(ValueError):
        p.bracket(3.5)


def test_case1_switch_point_and_tie_rule():
    p = make_partition(0.25, 0.5, 1)
    s = 0.5
    x = case1_switch_point(0.25, 0.5, s)
    assert 0.25 < x < 0.375  # the kernel mass is concentrated near the smaller radius
    assert np.array_equal(coeffs_case1(x * (1 - 1e-9), p, s=s), [1, 0])
    assert np.array_equal(coeffs_case1(x * (1 + 1e-9), p, s=s), [0, 1])


def test_case1_custom_profile_matches_fractional():
    spec = KernelSpec("custom_radial", delta=1.0, radial_profile=lambda r: r**-2.0)
    for d in np.linspace(1 / 16, 1, 37):
        assert np.array_equal(coeffs_case1(d, PART, spec=spec), coeffs_case1(d, PART, s=0.5))


def test_case2_hat_values():
    p = make_partition(1, 2, 1)
    assert np.allclose(coeffs_case2(1.25, p), [0.75, 0.25])


@given(st.floats(1 / 16, 1.0))
def test_partition_of_unity(d):
    for th in (coeffs_case1(d, PART, s=0.4), coeffs_case2(d, PART)):
        assert np.all(th >= 0)
        assert abs(th.sum() - 1) <= 1e-14
        assert np.count_nonzero(th) <= 2


def test_combine_skips_zeros_and_copies_units():
    A, B = np.eye(2), 2 * np.eye(2)
    C = combine(np.array([1.0, 0.0]), [A, B])
    assert np.array_equal(C, A) and C is not A
    assert np.array_equal(combine(np.zeros(2), [A, B]), np.zeros((2, 2)))


@pytest.mark.parametrize("case", [CASE1, CASE2])
def test_nodal_exactness(mesh5, case):
    dec = build_affine_delta(mesh5, PART, 0.5, case)
    for d, A in zip(PART.anchors, dec.matrices):
        assert np.array_equal(dec.matrix(float(d)), A)
        assert np.array_equal(dec.matrix(float(d)), assemble_nonlocal(mesh5, KernelSpec(s=0.5, delta=float(d))))


def test_constants_closed_forms(mesh5):
    c = compute_delta_constants(mesh5, make_partition(1 / 16, 1, 4), 0.5)
    assert c.C_gamma == pytest.approx(256.0)
    assert c.C_gamma1 == pytest.approx(30.0)
    assert c.alpha_a * c.gamma_a == pytest.approx(1.0)
    assert c.C_a == pytest.approx(4 * 2 * 256.0)


def test_poincare_constant_is_the_generalized_eigenvalue(mesh5):
    c = compute_delta_constants(mesh5, PART, 0.5)
    M = assemble_mass(mesh5)
    A = assemble_nonlocal(mesh5, KernelSpec(s=0.5, delta=PART.delta_min))
    lam = np.max(np.linalg.eigvals(np.linalg.solve(A, M)).real)
    assert c.C_P == pytest.approx(np.sqrt(lam), rel=1e-10)


def _forms(mesh, case, d):
    dec = build_affine_delta(mesh, PART, 0.5, case)
    return assemble_nonlocal(mesh, KernelSpec(s=0.5, delta=d)) - dec.matrix(d)


@pytest.mark.parametrize("d", [0.07, 0.1, 0.33, 0.77])
def test_case1_form_error_bound(mesh5, rng, d):
    E = _forms(mesh5, CASE1, d)
    c = compute_delta_constants(mesh5, PART, 0.5)
    M = assemble_mass(mesh5)
    for _ in range(10):
        u, v = rng.standard_normal((2, mesh5.n_dofs))
        bound = c.C_a * PART.local_step(d) * np.sqrt(u @ M @ u) * np.sqrt(v @ M @ v)
        assert abs(u @ E @ v) <= bound


@pytest.mark.parametrize("d", [0.07, 0.1, 0.33, 0.77])
def test_case2_form_error_bound(mesh5, d):
    E = _forms(mesh5, CASE2, d)
    c = compute_delta_constants(mesh5, PART, 0.5)
    M, K = assemble_mass(mesh5), assemble_h1_gram(mesh5)
    u = interpolate(mesh5, lambda x: np.sin(np.pi * x))
    v = interpolate(mesh5, lambda x: x**2 * (1 - x))
    bound = c.L_aprime * PART.local_step(d) ** 2 * np.sqrt(u @ K @ u) * np.sqrt(v @ M @ v)
    assert abs(u @ E @ v) <= bound


def test_snapped_partition_is_mesh_aligned():
    m = build_mesh(0, 1, 64)
    p = make_partition(1 / 16, 1, 7).snapped(m)
    assert np.allclose(p.anchors / m.h, np.round(p.anchors / m.h))
