import numpy as np
import pytest

from lcskit.deformation import deformation_field
from lcskit.dynamics import integrate_points, linear_saddle, rigid_rotation_sphere
from lcskit.flowmap import Grid2, deformation_gradient_grid
from lcskit.geometry import SphereChart
from lcskit.lcs import (ATTRACTING, REPELLING, UNCLASSIFIED, ClassifyTolerances,
                        ConstantDirection, DirectionField, MaterialCurve, ScalarField,
                        classify_variational, generalized_extrema, height_ridge_test,
                        integrate_line_field, lie_derivative, lie_derivative2,
                        transfer_rule_residual, verify_strain_stretch_duality)

G = Grid2((-1, 1), (-1, 1), 101, 101)
X, Y = ConstantDirection([1, 0]), ConstantDirection([0, 1])


def axis(n=41, half=0.25, along="x"):
    s = np.linspace(-half, half, n)
    return np.c_[s, 0 * s] if along == "x" else np.c_[0 * s, s]


def test_lie_derivative_trivial():
    const = ScalarField.from_function(G, lambda x, y: 0 * x + 3.0)
    fx = ScalarField.from_function(G, lambda x, y: x)
    pts = np.array([[0.1, 0.2], [-0.3, 0.5]])
    np.testing.assert_allclose(lie_derivative(const, X, pts), 0.0, atol=1e-12)
    np.testing.assert_allclose(lie_derivative(fx, Y, pts), 0.0, atol=1e-12)
    np.testing.assert_allclose(lie_derivative(fx, X, pts), 1.0, atol=1e-12)
    np.testing.assert_allclose(lie_derivative(fx, [1.0, 0.0], pts), 1.0, atol=1e-12)


def test_lie_derivative_matches_gradient():
    f = ScalarField.from_function(G, lambda x, y: np.sin(2 * x) * np.cos(y))
    p = np.array([[0.2, -0.1]])
    v = np.array([0.6, 0.8])
    want = 0.6 * 2 * np.cos(0.4) * np.cos(-0.1) - 0.8 * np.sin(0.4) * np.sin(-0.1)
    assert lie_derivative(f, v, p, 1e-3)[0] == pytest.approx(want, abs=1e-6)


def test_stencil_outside_is_invalid():
    fx = ScalarField.from_function(G, lambda x, y: x)
    assert np.isnan(lie_derivative(fx, X, [[0.999, 0.0]], 0.01)[0])


def test_lie_derivative_saddle_axis_vanishes(saddle_T1):
    ftle = saddle_T1.scalar("ftle_f")
    assert np.max(np.abs(lie_derivative(ftle, X, axis(along="y", half=0.9)))) <= 5e-4
    assert np.max(np.abs(lie_derivative(ftle, Y, axis(along="x", half=0.9)))) <= 5e-4


def test_lie_derivative2_quadratic():
    a = 1.7
    f = ScalarField.from_function(G, lambda x, y: -a * (0.6 * x + 0.8 * y) ** 2)
    v = np.array([0.6, 0.8])
    np.testing.assert_allclose(lie_derivative2(f, v, [[0.1, -0.2], [0.0, 0.0]], 0.02), -2 * a,
                               atol=1e-8)


def test_lie_derivative2_saddle_examples(saddle_T1, saddle_T20):
    assert lie_derivative2(saddle_T1.scalar("ftle_f"), Y, [[0.1, 0.0]])[0] < 0
    assert lie_derivative2(saddle_T20.scalar("ftle_f"), X, [[0.0, 0.1]])[0] < 0


def test_lie_derivative2_follow_on_straight_field_matches():
    f = ScalarField.from_function(G, lambda x, y: np.sin(x) * y)
    field = DirectionField.from_vectors(G, np.tile([0.6, 0.8], (G.size, 1)))
    p = np.array([[0.1, 0.2]])
    # v^T H v for f = y sin x
    exact = -0.36 * np.sin(0.1) * 0.2 + 2 * 0.48 * np.cos(0.1)
    assert lie_derivative2(f, field, p, follow=True)[0] == pytest.approx(exact, abs=2e-4)
    assert lie_derivative2(f, [0.6, 0.8], p)[0] == pytest.approx(exact, abs=2e-4)


def test_transfer_rule_zero_time():
    # identity flow map: f = g, sigma = 1, xi = theta
    g = Grid2((-1, 1), (-1, 1), 41, 41)
    s2 = ScalarField.from_function(g, lambda x, y: x ** 2 - y)
    pts = np.array([[0.1, 0.2], [-0.3, 0.05]])
    res = transfer_rule_residual(s2, s2, 1.0, X, X, pts, pts, first_order_tol=np.inf)
    assert np.array_equal(res["r1"], np.zeros(2)) and np.array_equal(res["r2"], np.zeros(2))


def test_transfer_rule_linear_saddle(grid201):
    # tangent-linear Jacobians keep sigma flat to 1e-11; central differences leave ~2e-10 ripple
    f = deformation_field(deformation_gradient_grid(linear_saddle(0.3), grid201, 0, 1,
                                                    estimator="variational"))
    s2 = f.scalar("s2")
    g = f.scalar("inv_s1")
    rng = np.random.default_rng(3)
    idx = rng.choice(np.flatnonzero(np.all(np.abs(f.points) < 0.5, axis=1)), 20, replace=False)
    res = transfer_rule_residual(s2, g, f.s2[idx], f.xi2[idx], f.th2[idx], f.points[idx],
                                 f.images[idx])
    assert np.max(np.abs(res["r1"])) <= 1e-10


def test_generalized_extrema_saddle(saddle_T1):
    ftle = saddle_T1.scalar("ftle_f")
    cell = saddle_T1.grid.dx
    for name, col in (("xi2", 1), ("xi1", 0)):
        p = generalized_extrema(ftle, saddle_T1.direction(name))["points"]
        near = np.all(np.abs(p) < 0.15, axis=1)
        assert near.sum() >= 10
        assert np.max(np.abs(p[near, col])) <= 2 * cell
    p = generalized_extrema(ftle, saddle_T1.direction("xi2"))["points"]
    on_axis = p[(np.abs(p[:, 1]) <= 2 * cell) & (np.abs(p[:, 0]) <= 0.25)]
    assert on_axis.shape[0] >= 20


def test_generalized_extrema_plane_empty():
    plane = ScalarField.from_function(G, lambda x, y: x + 2 * y)
    for v in (X, Y, ConstantDirection([1, 1])):
        for kind in ("max", "min"):
            assert len(generalized_extrema(plane, v, kind=kind)["points"]) == 0
    with pytest.raises(ValueError):
        generalized_extrema(plane, X, kind="saddle")


def test_generalized_minimum_of_bowl():
    bowl = ScalarField.from_function(G, lambda x, y: (x - 0.1) ** 2 + y ** 2)
    e = generalized_extrema(bowl, X, kind="min")
    np.testing.assert_allclose(e["points"][:, 0], 0.1, atol=1e-9)


def test_integrate_constant_field():
    c = integrate_line_field(X, [0.0, 0.3], step=0.01, max_len=0.4)
    assert c.kind == "curve"
    np.testing.assert_allclose(c.vertices[:, 1], 0.3, atol=0)
    assert c.vertices[0, 0] == pytest.approx(-0.2) and c.vertices[-1, 0] == pytest.approx(0.2)
    assert c.arclength == pytest.approx(0.4)
    one = integrate_line_field(X, [0.0, 0.3], step=0.01, max_len=0.4, both_directions=False)
    assert one.vertices[-1, 0] == pytest.approx(0.4)


def test_integrate_stops_at_boundary():
    c = integrate_line_field(DirectionField.from_vectors(G, np.tile([1.0, 0.0], (G.size, 1))),
                             [0.9, 0.0], step=0.01, max_len=0.6)
    assert c.vertices[:, 0].max() <= 1.0
    assert "boundary_or_degenerate" in c.stop_reasons


def test_integrate_invalid_seed():
    rot = rotation_field()
    with pytest.raises(ValueError):
        integrate_line_field(rot.direction("xi1"), [1.0, 0.0])


def test_strain_and_stretchlines(saddle_T1):
    strain = integrate_line_field(saddle_T1.direction("xi1"), [0.01, 0.0])
    stretch = integrate_line_field(saddle_T1.direction("xi2"), [0.0, 0.01])
    assert strain.kind == "strainline" and stretch.kind == "stretchline"
    assert strain.arclength == pytest.approx(0.4, abs=1e-9)
    assert np.max(np.abs(strain.vertices[:, 1])) <= 1e-3
    assert np.max(np.abs(stretch.vertices[:, 0])) <= 1e-3
    assert classify_variational(strain, saddle_T1) == REPELLING
    assert classify_variational(stretch, saddle_T1) == ATTRACTING
    assert strain.diagnostics["s2"].shape == (strain.vertices.shape[0],)


@pytest.mark.parametrize("seed", [[0.3, 0.4], [-0.5, 0.2], [0.01, 0.0]])
def test_line_normality(saddle_T1, seed):
    for name, other in (("xi1", "xi2"), ("xi2", "xi1")):
        c = integrate_line_field(saddle_T1.direction(name), seed, max_len=0.3)
        n = saddle_T1.direction(other)(c.vertices)
        ok = np.all(np.isfinite(n), axis=1)
        assert np.max(np.abs(np.sum(n[ok] * c.tangents()[ok], axis=1))) <= 0.05


def test_orientation_invariance(saddle_T1):
    v = saddle_T1.direction("xi1")
    for seed in ([0.3, 0.4], [-0.2, -0.6]):
        a = integrate_line_field(v, seed, max_len=0.3)
        b = integrate_line_field(v, seed, max_len=0.3, initial_sign=-1.0)
        np.testing.assert_allclose(a.vertices, b.vertices[::-1], atol=1e-12)


def test_classification_axes(saddle_T1):
    assert classify_variational(MaterialCurve(axis(along="x")), saddle_T1) == REPELLING
    assert classify_variational(MaterialCurve(axis(half=0.14, along="y")), saddle_T1) == ATTRACTING


@pytest.mark.parametrize("along,half,fwd_label", [("x", 0.25, REPELLING), ("y", 0.14, ATTRACTING)])
def test_classification_swaps_under_backward_flow(saddle, saddle_T1, saddle_T1_backward, along,
                                                  half, fwd_label):
    pts = axis(half=half, along=along)
    assert classify_variational(MaterialCurve(pts), saddle_T1) == fwd_label
    moved, _, _ = integrate_points(saddle, pts, 0.0, 1.0)
    swapped = {REPELLING: ATTRACTING, ATTRACTING: REPELLING}[fwd_label]
    assert classify_variational(MaterialCurve(moved), saddle_T1_backward) == swapped


def rotation_field():
    chart = SphereChart()
    g = Grid2((0.0, 6.0), (-1.4, 1.4), 61, 29)
    return deformation_field(deformation_gradient_grid(rigid_rotation_sphere(), g, 0, 1, chart=chart))


def test_rotation_unclassified():
    rot = rotation_field()
    line = MaterialCurve(np.c_[np.linspace(1.0, 3.0, 21), np.full(21, 0.3)])
    assert classify_variational(line, rot) == UNCLASSIFIED


def test_classify_short_curve(saddle_T1):
    with pytest.raises(ValueError):
        classify_variational(MaterialCurve([[0, 0], [0.1, 0]]), saddle_T1)


def test_classify_tolerances_are_used(saddle_T1):
    strict = ClassifyTolerances(coverage=1.0, normal_angle=1e-9)
    c = MaterialCurve(np.c_[np.linspace(-0.2, 0.2, 21), np.linspace(-0.05, 0.05, 21)])
    assert classify_variational(c, saddle_T1, strict) == UNCLASSIFIED


def test_height_ridge_examples(saddle_T1, saddle_T20):
    r = height_ridge_test(saddle_T1.scalar("ftle_f"), axis(half=0.25), Y)
    assert r["ridge"] and r["all_first"] and r["all_second"]
    r = height_ridge_test(saddle_T20.scalar("ftle_f"), axis(half=0.14, along="y"), X)
    assert r["ridge"]
    const = ScalarField.from_function(G, lambda x, y: 0 * x + 1.0)
    r = height_ridge_test(const, axis(), Y, tol1=1e-9)
    assert r["all_first"] and not r["all_second"] and not r["ridge"]


def test_height_ridge_invalid_vertices_flagged():
    f = ScalarField.from_function(G, lambda x, y: -y ** 2)
    r = height_ridge_test(f, [[0.0, 0.0], [0.0, 0.999]], Y, h=0.01)
    assert list(r["valid"]) == [True, False] and r["ridge"]


def test_duality_linear(linear_T1):
    b = deformation_field(deformation_gradient_grid(linear_saddle(0.3), linear_T1.grid, 0, 1))
    from lcskit.deformation import backward_at_images
    bwd = backward_at_images(linear_T1, linear_saddle(0.3))
    assert verify_strain_stretch_duality(linear_T1, bwd)["max"] <= 1e-8
    with pytest.raises(ValueError):
        verify_strain_stretch_duality(linear_T1, b)


def test_duality_zero_time_masked():
    from lcskit.deformation import backward_at_images
    g = Grid2((-1, 1), (-1, 1), 11, 11)
    f = deformation_field(deformation_gradient_grid(linear_saddle(0.3), g, 0.0, 0.0))
    rep = verify_strain_stretch_duality(f, backward_at_images(f, linear_saddle(0.3)))
    assert rep["count"] == 0 and rep["masked"] == g.size and rep["max"] is None
