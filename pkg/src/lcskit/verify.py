"""Residual suites for the forward/backward identities and ridge structure.

Every suite returns a dict with ``name``, ``status`` (``pass``, ``fail`` or
``skip``), the measured residuals and the thresholds they were held to.
"""
from __future__ import annotations

import numpy as np

from .deformation import (backward_at_images, deformation_field, verify_backward_relations,
                          verify_incompressibility)
from .flowmap import deformation_gradient_grid, deformation_gradient_points
from .geometry import EuclideanChart
from .lcs import (ConstantDirection, generalized_extrema, height_ridge_test, lie_derivative,
                  transfer_rule_residual, verify_strain_stretch_duality)

PASS, FAIL, SKIP = "pass", "fail", "skip"


def _suite(name, ok, measured, thresholds, note=""):
    status = SKIP if ok is None else (PASS if ok else FAIL)
    out = {"name": name, "status": status, "measured": measured, "thresholds": thresholds}
    if note:
        out["note"] = note
    return out


def _le(value, tol):
    return value is not None and np.isfinite(value) and value <= tol


class Context:
    """Forward grid field plus lazily computed backward data for one run."""

    def __init__(self, run, forward=None):
        self.run = run
        self.rng = np.random.default_rng(run.cfg["verify"]["seed"])
        if forward is None:
            fmg = deformation_gradient_grid(run.field, run.grid, run.t1, run.t2, run.h, run.ip,
                                            run.chart, run.threads, run.estimator)
            forward = deformation_field(fmg, run.chart, run.gap_tol)
        self.forward = forward
        self._samples = None
        self._backward_grid = None

    def _interior(self, pts, margin):
        g = self.run.grid
        mx, my = margin * g.dx, margin * g.dy
        return ((pts[:, 0] >= g.x_range[0] + mx) & (pts[:, 0] <= g.x_range[1] - mx)
                & (pts[:, 1] >= g.y_range[0] + my) & (pts[:, 1] <= g.y_range[1] - my))

    def samples(self):
        """Forward and independent backward fields at sampled grid points."""
        if self._samples is None:
            run, fwd = self.run, self.forward
            cand = np.flatnonzero(fwd.valid)
            n = min(run.cfg["verify"]["samples"], cand.size)
            idx = np.sort(self.rng.choice(cand, n, replace=False)) if n else cand[:0]
            pts = fwd.points[idx]
            f = deformation_field(deformation_gradient_points(
                run.field, pts, run.t1, run.t2, run.h, run.ip, run.chart, run.threads,
                run.estimator), run.chart, run.gap_tol)
            b = backward_at_images(f, run.field, run.ip, run.h, run.threads, run.estimator)
            self._samples = (f, b)
        return self._samples

    def backward_grid(self):
        """Backward flow ``t2 -> t1`` on the same grid, placed at time t2."""
        if self._backward_grid is None:
            run = self.run
            fmg = deformation_gradient_grid(run.field, run.grid, run.t2, run.t1, run.h, run.ip,
                                            run.chart, run.threads, run.estimator)
            self._backward_grid = deformation_field(fmg, run.chart, run.gap_tol)
        return self._backward_grid


def incompressibility_suite(ctx):
    tol = ctx.run.cfg["verify"]["incompressibility_tol"]
    if not ctx.run.field.incompressible:
        return _suite("incompressibility", None, {}, {"max": tol}, "field not incompressible")
    rep = verify_incompressibility(ctx.forward)
    ftle = ctx.forward.ftle_f[ctx.forward.valid]
    rep["min_ftle"] = float(ftle.min()) if ftle.size else None
    return _suite("incompressibility", _le(rep["max"], tol) and rep["count"] > 0, rep,
                  {"max": tol})


def backward_relations_suite(ctx):
    tol = ctx.run.cfg["verify"]["relation_tol"]
    f, b = ctx.samples()
    rep = verify_backward_relations(f, b)
    ok = _le(rep["kappa_sigma"], tol) and _le(rep["pullback"], tol)
    if rep["nondegenerate"]:
        ok = ok and _le(rep["misalignment"], tol)
    return _suite("backward_relations", ok if rep["count"] else None, rep,
                  {"kappa_sigma": tol, "misalignment": tol, "pullback": tol})


def ftle_equality_suite(ctx):
    tol = ctx.run.cfg["verify"]["ftle_tol"]
    f, b = ctx.samples()
    if not ctx.run.field.incompressible:
        return _suite("forward_backward_ftle", None, {}, {"max": tol}, "field not incompressible")
    ok = f.valid & b.valid
    if not ok.any():
        return _suite("forward_backward_ftle", None, {"count": 0}, {"max": tol})
    # backward FTLE at x2 from the independent run vs forward FTLE at x1
    d = np.abs(b.ftle_f[ok] - f.ftle_f[ok])
    rep = {"max": float(d.max()), "mean": float(d.mean()), "count": int(ok.sum())}
    return _suite("forward_backward_ftle", _le(rep["max"], tol), rep, {"max": tol})


def duality_suite(ctx):
    tol = ctx.run.cfg["verify"]["relation_tol"]
    f, b = ctx.samples()
    rep = verify_strain_stretch_duality(f, b)
    if rep["count"] == 0:
        return _suite("strain_stretch_duality", None, rep, {"max": tol},
                      "all sampled points degenerate")
    return _suite("strain_stretch_duality", _le(rep["max"], tol), rep, {"max": tol})


def _relative(res, ref):
    res, ref = np.abs(res), np.abs(ref)
    denom = float(ref.max()) if ref.size else 0.0
    worst = float(res.max()) if res.size else 0.0
    return worst / denom if denom > 1e-12 else worst


RESOLUTION_FRACTION = 0.1
CONSTANT_RTOL = 1e-8
CONSTANT_ABS_TOL = 1e-7


def transfer_rule_suite(ctx):
    """Lie-derivative transfer rule for f = sigma2 (forward) and g = 1/kappa1 (backward).

    First order at random usable points; second order at generalized maxima
    of sigma2 along xi2, where the first derivative vanishes. Skipped when
    the grid cannot resolve the stretched images; a spatially constant
    ``f`` is checked in absolute terms only.
    """
    run = ctx.run
    vc = run.cfg["verify"]
    tol1, tol2 = vc["transfer_tol1"], vc["transfer_tol2"]
    thresholds = {"r1_relative": tol1, "r2_relative": tol2}
    fwd = ctx.forward
    if not fwd.usable.any():
        return _suite("transfer_rule", None, {}, thresholds, "no nondegenerate points")
    g0 = run.grid
    delta = min(g0.dx, g0.dy)
    extent = min(g0.x_range[1] - g0.x_range[0], g0.y_range[1] - g0.y_range[0])
    s2max = float(np.max(fwd.s2[fwd.usable]))
    if s2max * delta > RESOLUTION_FRACTION * extent:
        return _suite("transfer_rule", None, {"max_s2": s2max}, thresholds,
                      "flow map under-resolved: max s2 times grid spacing exceeds "
                      f"{RESOLUTION_FRACTION} of the domain extent")
    vals = fwd.s2[fwd.usable]
    constant = np.ptp(vals) <= CONSTANT_RTOL * np.max(np.abs(vals))
    bwd = ctx.backward_grid()
    f, g, sigma = fwd.scalar("s2"), bwd.scalar("inv_s1"), fwd.scalar("s2")
    xi, theta = fwd.direction("xi2"), bwd.direction("xi1")
    margin = 4
    cand = np.flatnonzero(fwd.usable & ctx._interior(fwd.points, margin)
                          & ctx._interior(fwd.images, margin))
    n = min(vc["transfer_samples"], cand.size)
    if n == 0:
        return _suite("transfer_rule", None, {}, thresholds, "no interior sample points")
    idx = np.sort(ctx.rng.choice(cand, n, replace=False))
    r = transfer_rule_residual(f, g, sigma, xi, theta, fwd.points[idx], fwd.images[idx],
                               fwd.flowmap.jacobians[idx])
    fin = np.isfinite(r["r1"])
    if constant:
        # both sides vanish; what is left is finite-difference noise
        r1max = float(np.max(np.abs(r["r1"][fin]))) if fin.any() else None
        rep = {"mode": "constant", "r1_max_abs": r1max, "r1_count": int(fin.sum())}
        return _suite("transfer_rule", _le(r1max, CONSTANT_ABS_TOL) and fin.any(), rep,
                      {"r1_max_abs": CONSTANT_ABS_TOL})
    rel1 = _relative(r["r1"][fin], np.r_[r["lf"][fin], r["lg"][fin]])

    ext = generalized_extrema(f, xi, kind="max")
    pts = ext["points"]
    rel2, gated = None, 0
    if len(pts):
        sub = deformation_gradient_points(run.field, pts, run.t1, run.t2, run.h, run.ip,
                                          run.chart, run.threads, run.estimator)
        keep = np.flatnonzero(sub.valid_mask & ctx._interior(pts, margin)
                              & ctx._interior(sub.final_positions, margin))
        if keep.size:
            keep = np.sort(ctx.rng.choice(keep, min(vc["transfer_samples"], keep.size),
                                          replace=False))
            r2 = transfer_rule_residual(f, g, sigma, xi, theta, pts[keep],
                                        sub.final_positions[keep], sub.jacobians[keep])
            m = r2["gate"] & np.isfinite(r2["r2"])
            gated = int(m.sum())
            if gated:
                rel2 = _relative(r2["r2"][m], np.r_[r2["lf2"][m], r2["lg2"][m]])
    rep = {"mode": "relative", "r1_relative": rel1, "r1_count": int(fin.sum()), "r2_relative": rel2,
           "r2_count": gated}
    ok = _le(rel1, tol1) and fin.any() and (rel2 is None or _le(rel2, tol2))
    return _suite("transfer_rule", ok, rep, thresholds)


def height_ridge_suite(ctx, half_length=0.1, first_tol=5e-4):
    """Saddle only: both coordinate axes are FTLE height ridges near the origin."""
    run = ctx.run
    thresholds = {"first_order": first_tol, "half_length": half_length}
    if run.cfg["field"]["name"] != "nonlinear_saddle" or not isinstance(run.chart, EuclideanChart):
        return _suite("height_ridge", None, {}, thresholds, "only defined for the nonlinear saddle")
    g = run.grid
    if not (g.x_range[0] < -half_length and g.x_range[1] > half_length
            and g.y_range[0] < -half_length and g.y_range[1] > half_length):
        return _suite("height_ridge", None, {}, thresholds, "grid does not cover the axes")
    f = ctx.forward.scalar("ftle_f")
    rep, ok = {}, True
    for axis, normal in (("x", (0.0, 1.0)), ("y", (1.0, 0.0))):
        lo, hi = (g.x_range if axis == "x" else g.y_range)
        s = np.linspace(lo, hi, (g.nx if axis == "x" else g.ny))
        pts = np.c_[s, 0 * s] if axis == "x" else np.c_[0 * s, s]
        l1 = lie_derivative(f, ConstantDirection(normal), pts)
        near = np.abs(s) <= half_length
        t = height_ridge_test(f, pts[near], ConstantDirection(normal), tol1=first_tol)
        fin = np.isfinite(l1)
        first = float(np.max(np.abs(l1[fin]))) if fin.any() else None
        rep[f"{axis}_axis_max_first"] = first
        rep[f"{axis}_axis_max_second"] = float(np.nanmax(t["l2"])) if t["valid"].any() else None
        ok = ok and _le(first, first_tol) and t["all_second"]
    return _suite("height_ridge", ok, rep, thresholds)


SUITES = (incompressibility_suite, backward_relations_suite, ftle_equality_suite,
          transfer_rule_suite, duality_suite, height_ridge_suite)


def run_verification(run, forward=None):
    """Run every suite; ``passed`` is false if any suite failed."""
    ctx = Context(run, forward)
    suites = [s(ctx) for s in SUITES]
    return {"passed": all(s["status"] != FAIL for s in suites), "suites": suites}
