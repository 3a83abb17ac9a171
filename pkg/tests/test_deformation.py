import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lcskit.deformation import (SingularMatrixError, backward_at_images, cauchy_green,
                                deformation_field, ftle_backward_from_forward, ftle_forward,
                                resample_backward_ftle, svd2, svd2_batch,
                                verify_backward_relations, verify_incompressibility)
from lcskit.dynamics import linear_saddle, nonlinear_saddle, rigid_rotation_sphere
from lcskit.flowmap import Grid2, deformation_gradient_grid, deformation_gradient_points
from lcskit.geometry import SphereChart

E3 = math.exp(-0.3)


def test_svd_identity_is_degenerate():
    p = svd2(np.eye(2))
    assert p.sigma1 == pytest.approx(1.0) and p.sigma2 == pytest.approx(1.0)
    assert p.degenerate


def test_svd_diagonal_example():
    p = svd2(np.diag([0.740818, 1.349859]))
    assert p.sigma1 == pytest.approx(0.740818, abs=1e-15)
    assert p.sigma2 == pytest.approx(1.349859, abs=1e-15)
    np.testing.assert_allclose(np.abs(p.xi1), [1.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(p.xi2, [0.0, 1.0], atol=1e-15)
    assert not p.degenerate


@pytest.mark.parametrize("alpha", [0.0, 0.4, 2.0, -3.0])
def test_svd_rotation(alpha):
    c, s = math.cos(alpha), math.sin(alpha)
    p = svd2([[c, -s], [s, c]])
    assert p.sigma1 == pytest.approx(1.0, abs=1e-14) and p.sigma2 == pytest.approx(1.0, abs=1e-14)


def test_svd_sign_convention():
    p = svd2([[0.0, -2.0], [1.0, 0.0]])
    assert p.xi2[0] > 0 or (p.xi2[0] == 0 and p.xi2[1] >= 0)
    assert p.xi1[0] > 0 or (p.xi1[0] == 0 and p.xi1[1] >= 0)


def test_svd_errors():
    with pytest.raises(SingularMatrixError):
        svd2([[1.0, 2.0], [2.0, 4.0]])
    with pytest.raises(SingularMatrixError):
        svd2([[np.nan, 0.0], [0.0, 1.0]])
    with pytest.raises(ValueError):
        svd2(np.eye(3))
    r = svd2_batch(np.array([np.zeros((2, 2)), np.eye(2)]))
    assert np.isnan(r["s1"][0]) and r["s1"][1] == pytest.approx(1.0)


matrices = arrays(np.float64, (2, 2), elements=st.floats(-1e3, 1e3, allow_nan=False))


@given(matrices)
@settings(max_examples=300, deadline=None)
def test_svd_invariants(m):
    norm = np.linalg.norm(m, 2)
    assume(norm > 1e-6 and abs(np.linalg.det(m)) > 1e-9 * norm ** 2)
    p = svd2(m)
    assert 0 < p.sigma1 <= p.sigma2
    for v in (p.xi1, p.xi2, p.theta1, p.theta2):
        assert abs(np.linalg.norm(v) - 1.0) <= 1e-12
    assert abs(p.xi1 @ p.xi2) <= 1e-10 and abs(p.theta1 @ p.theta2) <= 1e-10
    recon = (p.sigma1 * np.outer(p.theta1, p.xi1) + p.sigma2 * np.outer(p.theta2, p.xi2))
    assert np.linalg.norm(m - recon) <= 1e-10 * np.linalg.norm(m)
    np.testing.assert_allclose(m @ p.xi1, p.sigma1 * p.theta1, atol=1e-10 * norm)
    np.testing.assert_allclose(m @ p.xi2, p.sigma2 * p.theta2, atol=1e-10 * norm)
    ref = np.linalg.svd(m, compute_uv=False)
    np.testing.assert_allclose([p.sigma2, p.sigma1], ref, rtol=1e-10, atol=1e-12 * norm)


@given(matrices)
@settings(max_examples=100, deadline=None)
def test_cauchy_green_eigenvalues(m):
    norm = np.linalg.norm(m, 2)
    assume(norm > 1e-3 and abs(np.linalg.det(m)) > 1e-6 * norm ** 2)
    c, b = cauchy_green(m)
    p = svd2(m)
    want = np.array([p.sigma1 ** 2, p.sigma2 ** 2])
    for t in (c, b):
        np.testing.assert_allclose(t, t.T, atol=0)
        np.testing.assert_allclose(np.linalg.eigvalsh(t), want, rtol=1e-10, atol=1e-10 * norm ** 2)


def test_cauchy_green_examples():
    c, b = cauchy_green(np.eye(2))
    assert np.array_equal(c, np.eye(2)) and np.array_equal(b, np.eye(2))
    c, b = cauchy_green(np.diag([2.0, 3.0]))
    assert np.array_equal(c, np.diag([4.0, 9.0])) and np.array_equal(b, np.diag([4.0, 9.0]))
    c, b = cauchy_green([[0.0, -2.0], [1.0, 0.0]])
    assert np.array_equal(c, np.diag([1.0, 4.0])) and np.array_equal(b, np.diag([4.0, 1.0]))


def test_ftle_examples():
    assert ftle_forward(1.0, 1.0) == 0.0
    assert ftle_forward(math.exp(0.3), 1.0) == pytest.approx(0.3, abs=1e-15)
    assert ftle_forward(math.exp(6.0), 20.0) == pytest.approx(0.3, abs=1e-15)
    assert ftle_forward(math.exp(0.3), -1.0) == pytest.approx(0.3, abs=1e-15)
    assert ftle_backward_from_forward(1.0, 1.0) == 0.0
    assert ftle_backward_from_forward(math.exp(-0.3), 1.0) == pytest.approx(0.3, abs=1e-15)
    s2 = 1.7
    assert ftle_backward_from_forward(1 / s2, 2.0) == pytest.approx(ftle_forward(s2, 2.0), abs=1e-15)


@pytest.mark.parametrize("fn", [ftle_forward, ftle_backward_from_forward])
def test_ftle_errors(fn):
    with pytest.raises(ValueError):
        fn(0.0, 1.0)
    with pytest.raises(ValueError):
        fn(-1.0, 1.0)
    with pytest.raises(ValueError):
        fn(1.0, 0.0)


def test_field_invariants(saddle_T1):
    f = saddle_T1
    ok = f.valid
    assert ok.all()
    np.testing.assert_allclose(f.lambda1, f.s1 ** 2, rtol=1e-10)
    np.testing.assert_allclose(f.kappa2 * f.s1, 1.0, atol=1e-10)
    np.testing.assert_allclose(f.kappa1 * f.s2, 1.0, atol=1e-10)
    j = f.flowmap.jacobians
    np.testing.assert_allclose(np.einsum("nij,nj->ni", j, f.xi2), f.s2[:, None] * f.th2, atol=1e-10)
    np.testing.assert_allclose(np.einsum("nij,nj->ni", j, f.xi1), f.s1[:, None] * f.th1, atol=1e-10)


def test_ftle_nonnegative(saddle_T1, saddle_T20):
    assert saddle_T1.ftle_f.min() >= -1e-6
    assert saddle_T20.ftle_f[saddle_T20.valid].min() >= -1e-6


@pytest.mark.parametrize("which", ["saddle_T1", "saddle_T20"])
def test_saddle_symmetry(which, request):
    f = request.getfixturevalue(which)
    grid = f.grid
    a = f.ftle_f.reshape(grid.shape)
    assert np.max(np.abs(a - a[:, ::-1])) <= 1e-6
    assert np.max(np.abs(a - a[::-1, :])) <= 1e-6


def test_incompressibility_examples(saddle_T1, linear_T1):
    assert verify_incompressibility(linear_T1)["max"] <= 1e-8
    assert verify_incompressibility(saddle_T1)["max"] <= 1e-3
    chart = SphereChart()
    g = Grid2((0.0, 6.0), (-1.4, 1.4), 31, 15)
    rot = deformation_field(deformation_gradient_grid(rigid_rotation_sphere(), g, 0, 1, chart=chart,
                                                      estimator="variational"))
    assert verify_incompressibility(rot)["max"] <= 1e-12
    # central differences at h = 1e-5 bottom out near eps * |x| / h
    rot = deformation_field(deformation_gradient_grid(rigid_rotation_sphere(), g, 0, 1, chart=chart))
    assert verify_incompressibility(rot)["max"] <= 1e-10


def test_incompressibility_halving_h():
    # the FD residual at h shrinks when h halves; both stay under the default threshold
    g = Grid2((-1, 1), (-1, 1), 41, 41)
    r = [verify_incompressibility(deformation_field(
        deformation_gradient_grid(nonlinear_saddle(), g, 0, 1, h=h)))["max"] for h in (0.02, 0.01)]
    assert r[1] < r[0] <= 1e-3


def test_backward_relations_linear(linear_T1):
    bwd = backward_at_images(linear_T1, linear_saddle(0.3))
    rep = verify_backward_relations(linear_T1, bwd)
    assert rep["kappa_sigma"] <= 1e-7 and rep["misalignment"] <= 1e-7 and rep["pullback"] <= 1e-7


def test_backward_relations_saddle(saddle_T1, saddle):
    idx = np.random.default_rng(1).choice(len(saddle_T1.points), 100, replace=False)
    sub = deformation_field(deformation_gradient_points(saddle, saddle_T1.points[idx], 0.0, 1.0))
    rep = verify_backward_relations(sub, backward_at_images(sub, saddle))
    assert rep["kappa_sigma"] <= 1e-3 and rep["misalignment"] <= 1e-3 and rep["pullback"] <= 1e-3


def test_backward_relations_zero_time():
    g = Grid2((-1, 1), (-1, 1), 11, 11)
    f = deformation_field(deformation_gradient_grid(nonlinear_saddle(), g, 0.5, 0.5))
    rep = verify_backward_relations(f, backward_at_images(f, nonlinear_saddle()))
    assert rep["kappa_sigma"] <= 1e-12 and rep["pullback"] <= 1e-12
    assert rep["nondegenerate"] == 0 and rep["misalignment"] is None


def test_backward_relations_mismatched_grid(saddle_T1, linear_T1):
    with pytest.raises(ValueError):
        verify_backward_relations(saddle_T1, linear_T1)


def test_backward_ftle_equals_forward(saddle_T1, saddle):
    bwd = backward_at_images(saddle_T1, saddle)
    # forward FTLE at x1 vs independent backward FTLE at x2 = F(x1)
    assert np.max(np.abs(bwd.ftle_f - saddle_T1.ftle_f)) <= 2e-3
    assert np.max(np.abs(saddle_T1.ftle_b - saddle_T1.ftle_f)) <= 2e-3


def test_resample_backward_ftle(saddle_T1):
    g = Grid2((-0.5, 0.5), (-0.5, 0.5), 11, 11)
    out = resample_backward_ftle(saddle_T1, g)
    assert out.shape == g.shape and np.all(np.isfinite(out))
