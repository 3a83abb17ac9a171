"""Lie derivatives, generalized extrema, strain/stretchlines and LCS labels.

Scalar fields are interpolated bicubically from the grid. Line fields are
stored as symmetric tensors whose interpolated eigenvectors give the
direction, so the sign ambiguity of singular vectors never enters the
interpolation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage
from scipy.interpolate import RectBivariateSpline

REPELLING = "repelling"
ATTRACTING = "attracting"
UNCLASSIFIED = "unclassified"


def _inside_grid(grid, pts):
    return ((pts[:, 0] >= grid.x_range[0]) & (pts[:, 0] <= grid.x_range[1])
            & (pts[:, 1] >= grid.y_range[0]) & (pts[:, 1] <= grid.y_range[1]))


def _cell_ok(grid, bad, pts):
    """True where ``pts`` lie in the grid and no corner of their cell is ``bad``."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    inside = _inside_grid(grid, pts) & np.all(np.isfinite(pts), axis=1)
    i = np.clip(np.floor((pts[:, 0] - grid.x_range[0]) / grid.dx), 0, grid.nx - 2)
    j = np.clip(np.floor((pts[:, 1] - grid.y_range[0]) / grid.dy), 0, grid.ny - 2)
    i = np.where(inside, i, 0).astype(int)
    j = np.where(inside, j, 0).astype(int)
    corner_bad = bad[j, i] | bad[j + 1, i] | bad[j, i + 1] | bad[j + 1, i + 1]
    return inside & ~corner_bad


class ScalarField:
    """Bicubic interpolant of gridded values; invalid nodes taint their neighbourhood."""

    def __init__(self, grid, values, valid=None):
        values = np.asarray(values, dtype=float).reshape(grid.shape)
        valid = np.ones(grid.shape, bool) if valid is None else np.asarray(valid).reshape(grid.shape)
        valid = valid & np.isfinite(values)
        self.grid = grid
        self.values = values
        self.valid = valid
        filled = values
        if not valid.all():
            if not valid.any():
                raise ValueError("scalar field has no valid nodes")
            _, (jj, ii) = ndimage.distance_transform_edt(~valid, return_indices=True)
            filled = values[jj, ii]
        # bicubic support reaches two nodes out
        self._bad = ndimage.binary_dilation(~valid, iterations=2) if not valid.all() else ~valid
        self._spline = RectBivariateSpline(grid.y, grid.x, filled, kx=3, ky=3, s=0)

    @classmethod
    def from_flat(cls, grid, flat, valid=None):
        return cls(grid, np.reshape(flat, grid.shape),
                   None if valid is None else np.reshape(valid, grid.shape))

    @classmethod
    def from_function(cls, grid, func):
        pts = grid.points()
        return cls(grid, np.reshape(func(pts[:, 0], pts[:, 1]), grid.shape))

    def ok(self, pts):
        return _cell_ok(self.grid, self._bad, pts)

    def __call__(self, pts):
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        ok = self.ok(pts)
        out = np.full(pts.shape[0], np.nan)
        if ok.any():
            out[ok] = self._spline.ev(pts[ok, 1], pts[ok, 0])
        return out

    def gradient(self, pts):
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        ok = self.ok(pts)
        out = np.full(pts.shape, np.nan)
        if ok.any():
            out[ok, 0] = self._spline.ev(pts[ok, 1], pts[ok, 0], dy=1)
            out[ok, 1] = self._spline.ev(pts[ok, 1], pts[ok, 0], dx=1)
        return out

    def scale(self):
        """Largest gradient magnitude over valid nodes; sets first-order tolerances."""
        g = self.gradient(self.grid.points()[self.valid.ravel()])
        mag = np.linalg.norm(g, axis=1)
        mag = mag[np.isfinite(mag)]
        return float(mag.max()) if mag.size else 0.0


def _major_eigvec(c11, c12, c22):
    phi = 0.5 * np.arctan2(2.0 * c12, c11 - c22)
    return np.stack([np.cos(phi), np.sin(phi)], axis=-1)


def _canonical(v):
    flip = (v[..., 0] < 0) | ((v[..., 0] == 0) & (v[..., 1] < 0))
    return np.where(flip[..., None], -v, v)


class DirectionField:
    """Line field sampled on a grid (``v`` and ``-v`` are the same direction).

    The symmetric tensor components are interpolated bilinearly and the
    ``major`` or minor eigenvector is returned, optionally mapped by a
    per-node ``transform`` (metric to parameter components) and renormalised.
    Returned vectors are canonical: nonnegative leading component.
    """

    def __init__(self, grid, tensor, major=True, mask=None, transform=None, source=""):
        self.grid = grid
        self.tensor = np.asarray(tensor, dtype=float).reshape(grid.shape + (3,))
        self.major = major
        self.mask = (np.ones(grid.shape, bool) if mask is None
                     else np.asarray(mask, bool).reshape(grid.shape))
        self.mask &= np.all(np.isfinite(self.tensor), axis=-1)
        self.transform = None if transform is None else np.asarray(transform).reshape(grid.shape + (2, 2))
        self.source = source

    @classmethod
    def from_vectors(cls, grid, vecs, mask=None, source=""):
        """Rank-one tensors ``v v^T``; the major eigenvector reproduces ``v``."""
        v = np.asarray(vecs, dtype=float).reshape(-1, 2)
        tensor = np.stack([v[:, 0] ** 2, v[:, 0] * v[:, 1], v[:, 1] ** 2], axis=-1)
        return cls(grid, tensor, True, mask, source=source)

    @classmethod
    def from_deformation(cls, df, name):
        if name not in ("xi1", "xi2"):
            raise ValueError("gridded direction fields are xi1 or xi2")
        c = df.right_cauchy_green()
        tensor = np.stack([c[:, 0, 0], c[:, 0, 1], c[:, 1, 1]], axis=-1)
        return cls(df.grid, tensor, major=(name == "xi2"), mask=df.usable,
                   transform=df.inv_modulus, source=name)

    def ok(self, pts):
        return _cell_ok(self.grid, ~self.mask, pts)

    def _bilinear(self, arr, pts):
        g = self.grid
        fx = (pts[:, 0] - g.x_range[0]) / g.dx
        fy = (pts[:, 1] - g.y_range[0]) / g.dy
        i = np.clip(np.floor(fx), 0, g.nx - 2).astype(int)
        j = np.clip(np.floor(fy), 0, g.ny - 2).astype(int)
        tx = (fx - i).reshape((-1,) + (1,) * (arr.ndim - 2))
        ty = (fy - j).reshape((-1,) + (1,) * (arr.ndim - 2))
        return ((1 - tx) * (1 - ty) * arr[j, i] + tx * (1 - ty) * arr[j, i + 1]
                + (1 - tx) * ty * arr[j + 1, i] + tx * ty * arr[j + 1, i + 1])

    def __call__(self, pts):
        """Unit directions at ``pts`` (NaN rows where invalid)."""
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        ok = self.ok(pts)
        out = np.full(pts.shape, np.nan)
        if not ok.any():
            return out
        p = pts[ok]
        t = self._bilinear(self.tensor, p)
        v = _major_eigvec(t[:, 0], t[:, 1], t[:, 2])
        if not self.major:
            v = np.stack([-v[:, 1], v[:, 0]], axis=-1)
        if self.transform is not None:
            a = self._bilinear(self.transform, p)
            v = np.einsum("nij,nj->ni", a, v)
            v /= np.linalg.norm(v, axis=1, keepdims=True)
        out[ok] = _canonical(v)
        return out


class ConstantDirection:
    """Direction field equal to one unit vector everywhere."""

    def __init__(self, v, source="constant"):
        v = np.asarray(v, dtype=float)
        self.v = v / np.linalg.norm(v)
        self.source = source

    def ok(self, pts):
        return np.ones(np.reshape(pts, (-1, 2)).shape[0], bool)

    def __call__(self, pts):
        n = np.reshape(pts, (-1, 2)).shape[0]
        return np.broadcast_to(self.v, (n, 2)).copy()


def _directions(v, pts):
    if callable(v):
        return v(pts)
    vv = np.asarray(v, dtype=float)
    if vv.shape == (2,):
        return np.broadcast_to(vv / np.linalg.norm(vv), pts.shape).copy()
    return vv.reshape(pts.shape)


def _default_step(f):
    return min(f.grid.dx, f.grid.dy)


def lie_derivative(f, v, x, h=None):
    """First Lie derivative ``(f(x + h v) - f(x - h v)) / 2h``.

    ``v`` is a direction field, a fixed 2-vector, or an ``(N, 2)`` array of
    vectors (one per point). NaN marks invalid stencils.
    """
    x = np.asarray(x, dtype=float).reshape(-1, 2)
    h = _default_step(f) if h is None else h
    vv = _directions(v, x)
    hh = np.reshape(h, (-1, 1)) if np.ndim(h) else h
    return (f(x + hh * vv) - f(x - hh * vv)) / (2.0 * np.ravel(h) if np.ndim(h) else 2.0 * h)


def lie_derivative2(f, v, x, h=None, follow=False):
    """Second Lie derivative of ``f`` along ``v``.

    By default the straight second difference
    ``(f(x + h v) - 2 f(x) + f(x - h v)) / h^2`` with ``v = v(x)``, the
    Hessian quadratic form used by ridge tests.

    With ``follow=True`` and a direction field, the first derivative is
    differenced again along the field, ``(L_v f(x + h v) - L_v f(x - h v)) / 2h``
    with ``v`` re-evaluated (and sign-aligned) at the shifted points. This
    keeps the ``(grad_v v) . grad f`` term that a straight difference drops,
    and is the form that commutes with pushforward by the flow map.
    """
    x = np.asarray(x, dtype=float).reshape(-1, 2)
    h = _default_step(f) if h is None else h
    vv = _directions(v, x)
    hh = np.reshape(h, (-1, 1)) if np.ndim(h) else h
    if not follow or not callable(v) or isinstance(v, ConstantDirection):
        h2 = np.ravel(h) ** 2 if np.ndim(h) else h * h
        return (f(x + hh * vv) - 2.0 * f(x) + f(x - hh * vv)) / h2
    xp, xm = x + hh * vv, x - hh * vv
    vp = _align(v(xp), vv)
    vm = _align(v(xm), vv)
    lp = lie_derivative(f, vp, xp, h)
    lm = lie_derivative(f, vm, xm, h)
    return (lp - lm) / (2.0 * np.ravel(h) if np.ndim(h) else 2.0 * h)


def transfer_rule_residual(f, g, sigma, xi, theta, x1, x2, jacobians=None, h=None,
                           first_order_tol=None):
    """Residuals of the Lie-derivative transfer rule between ``x1`` and ``x2 = F(x1)``.

    ``f`` lives at t1 and ``g`` at t2 with ``f = g o F``; ``xi`` and ``theta``
    are F-related with weight ``sigma``. When ``jacobians`` are given,
    ``theta`` is oriented along ``DF xi``. The stencil at ``x2`` is scaled by
    ``sigma`` so both differences cover corresponding material segments; the
    default step is one grid cell divided by ``max(1, sigma)``.

    Returns a dict with ``r1``, ``r2`` (NaN where the first-order gate fails),
    ``lf``, ``lg`` (= sigma * L_theta g) and second-order counterparts.
    """
    x1 = np.asarray(x1, dtype=float).reshape(-1, 2)
    x2 = np.asarray(x2, dtype=float).reshape(-1, 2)
    v1 = _directions(xi, x1)
    v2 = _directions(theta, x2)
    if jacobians is not None:
        push = np.einsum("nij,nj->ni", np.asarray(jacobians), v1)
        v2 = np.where((np.sum(push * v2, axis=1) < 0)[:, None], -v2, v2)
    s = sigma(x1) if callable(sigma) else np.broadcast_to(np.asarray(sigma, float), x1.shape[:1])
    if h is None:
        # neither stencil wider than one grid cell
        h = _default_step(f) / np.maximum(1.0, np.nan_to_num(s, nan=1.0))
    lf = lie_derivative(f, v1, x1, h)
    lg = s * lie_derivative(g, v2, x2, s * h)
    # F maps integral curves of xi onto those of theta, not straight lines onto straight lines
    lf2 = lie_derivative2(f, xi if callable(xi) else v1, x1, h, follow=True)
    lg2 = s ** 2 * lie_derivative2(g, theta if callable(theta) else v2, x2, s * h, follow=True)
    r1 = lf - lg
    if first_order_tol is None:
        first_order_tol = 1e-3 * f.scale()
    gate = np.abs(lf) < first_order_tol
    r2 = np.where(gate, lf2 - lg2, np.nan)
    return {"r1": r1, "r2": r2, "lf": lf, "lg": lg, "lf2": lf2, "lg2": lg2, "gate": gate}


def generalized_extrema(f, v, grid=None, kind="max", h=None):
    """Generalized maxima (or minima) of ``f`` with respect to line field ``v``.

    Around every node ``p`` the directional derivative along ``v(p)`` is
    sampled at ``p -/+ (delta/2) v(p)`` (``delta`` the grid spacing); a sign
    change is refined by linear interpolation and kept if the second Lie
    derivative there has the right sign.

    Returns a dict of arrays: ``points``, ``direction``, ``l1``, ``l2``, ``node``.
    """
    grid = f.grid if grid is None else grid
    if kind not in ("max", "min"):
        raise ValueError("kind must be 'max' or 'min'")
    pts = grid.points()
    delta = min(grid.dx, grid.dy)
    h = delta if h is None else h
    vv = _directions(v, pts)
    good = np.all(np.isfinite(vv), axis=1)
    nodes = np.flatnonzero(good)
    p, d = pts[nodes], vv[nodes]
    gm = lie_derivative(f, d, p - 0.5 * delta * d, h)
    gp = lie_derivative(f, d, p + 0.5 * delta * d, h)
    cross = np.isfinite(gm) & np.isfinite(gp) & (gm * gp <= 0) & (gm != gp)
    p, d, gm, gp, nodes = p[cross], d[cross], gm[cross], gp[cross], nodes[cross]
    s = -0.5 * delta + delta * gm / (gm - gp)
    q = p + s[:, None] * d
    l2 = lie_derivative2(f, d, q, h)
    l1 = lie_derivative(f, d, q, h)
    keep = (l2 < 0) if kind == "max" else (l2 > 0)
    return {"points": q[keep], "direction": d[keep], "l1": l1[keep], "l2": l2[keep],
            "node": nodes[keep]}


@dataclass
class MaterialCurve:
    """Polyline at t1, tagged as strainline/stretchline and classified."""

    vertices: np.ndarray
    kind: str = "curve"
    classification: str = UNCLASSIFIED
    diagnostics: dict = field(default_factory=dict)
    stop_reasons: tuple = ()

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 2)

    @classmethod
    def from_points(cls, points, kind="curve"):
        return cls(np.asarray(points, dtype=float), kind)

    @property
    def arclength(self):
        return float(np.sum(np.linalg.norm(np.diff(self.vertices, axis=0), axis=1)))

    def tangents(self):
        t = np.gradient(self.vertices, axis=0)
        return t / np.linalg.norm(t, axis=1, keepdims=True)


def _kind_for(source):
    return {"xi1": "strainline", "xi2": "stretchline"}.get(source, "curve")


def _align(v, ref):
    return np.where((np.sum(v * ref, axis=-1) < 0)[..., None], -v, v)


def _half_line(v, seed, d0, step, length, min_alignment):
    """Walk from ``seed`` along the line field, starting in direction ``d0``."""
    pts = [np.asarray(seed, float)]
    prev = d0
    s = 0.0
    x = pts[0]
    reason = "max_len"
    while s < length - 1e-15:
        hh = min(step, length - s)
        k1 = _align(v(x[None])[0], prev)
        stages = [k1]
        ok = np.all(np.isfinite(k1))
        for frac in (0.5, 0.5, 1.0):
            if not ok:
                break
            k = v((x + frac * hh * stages[-1])[None])[0]
            ok = np.all(np.isfinite(k))
            if ok:
                stages.append(_align(k, k1))
        if not ok:
            reason = "boundary_or_degenerate"
            break
        if min(abs(float(k1 @ prev)), *(abs(float(k @ k1)) for k in stages[1:])) < min_alignment:
            reason = "tangent_discontinuity"
            break
        k1, k2, k3, k4 = stages
        incr = hh * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        x = x + incr
        s += float(np.linalg.norm(incr))
        pts.append(x)
        prev = incr / np.linalg.norm(incr)
    return np.array(pts), reason


def integrate_line_field(v, seed, step=1e-3, max_len=0.4, kind=None, both_directions=True,
                         initial_sign=1.0, min_alignment=0.7):
    """Integrate a line field from ``seed`` with fixed-step RK4.

    Each stage is sign-aligned with the previous tangent. With
    ``both_directions`` the curve extends ``max_len / 2`` each way from the
    seed. Integration stops at the grid boundary, a masked (degenerate) node,
    ``max_len``, or when consecutive directions disagree by more than
    ``acos(min_alignment)``.

    Raises
    ------
    ValueError
        If the field is invalid at the seed.
    """
    seed = np.asarray(seed, dtype=float)
    d0 = v(seed[None])[0]
    if not np.all(np.isfinite(d0)):
        raise ValueError(f"direction field is invalid or degenerate at seed {tuple(map(float, seed))}")
    d0 = initial_sign * d0
    kind = kind or _kind_for(getattr(v, "source", ""))
    if both_directions:
        fwd, rf = _half_line(v, seed, d0, step, 0.5 * max_len, min_alignment)
        bwd, rb = _half_line(v, seed, -d0, step, 0.5 * max_len, min_alignment)
        verts = np.concatenate([bwd[::-1], fwd[1:]])
        reasons = (rb, rf)
    else:
        verts, rf = _half_line(v, seed, d0, step, max_len, min_alignment)
        reasons = (rf,)
    return MaterialCurve(verts, kind, stop_reasons=reasons)


@dataclass(frozen=True)
class ClassifyTolerances:
    """Relaxed tests used on sampled curves.

    ``first_order`` is relative to the largest gradient of the tested field;
    ``normal_angle`` in degrees; ``coverage`` is the passing vertex fraction.
    """

    first_order: float = 1e-3
    normal_angle: float = 5.0
    coverage: float = 0.9
    gap: float = 1e-9
    h: Optional[float] = None


def classify_variational(curve, field, tolerances=ClassifyTolerances()):
    """Label a curve repelling, attracting, or unclassified.

    Repelling: ``xi2`` normal to the curve, ``sigma2`` a generalized maximum
    along ``xi2``, ``sigma1 != sigma2 > 1``. Attracting: ``xi1`` normal,
    ``sigma1`` a generalized minimum along ``xi1``, ``sigma2 != sigma1 < 1``.
    A label needs ``tolerances.coverage`` of the vertices to pass. The curve
    is updated in place (``classification``, ``diagnostics``) and returned
    label is the same string.
    """
    verts = curve.vertices
    if verts.shape[0] < 3:
        raise ValueError("curve needs at least 3 vertices")
    tol = tolerances
    sin_tol = np.sin(np.deg2rad(tol.normal_angle))
    s1f, s2f = field.scalar("s1"), field.scalar("s2")
    xi1, xi2 = field.direction("xi1"), field.direction("xi2")
    tang = curve.tangents()
    s1, s2 = s1f(verts), s2f(verts)
    h = tol.h

    def test(f, v, want_max):
        n = v(verts)
        normal = np.abs(np.sum(n * tang, axis=1)) <= sin_tol
        l1 = lie_derivative(f, n, verts, h)
        l2 = lie_derivative2(f, n, verts, h)
        tol1 = tol.first_order * f.scale()
        extremum = (np.abs(l1) <= tol1) & ((l2 < 0) if want_max else (l2 > 0))
        return normal, extremum, l1, l2

    distinct = (s2 - s1) > tol.gap * s2
    rn, rx, rl1, rl2 = test(s2f, xi2, True)
    rep = rn & rx & distinct & (s2 > 1.0)
    an, ax, al1, al2 = test(s1f, xi1, False)
    att = an & ax & distinct & (s1 < 1.0)

    label = UNCLASSIFIED
    if np.mean(rep) >= tol.coverage:
        label = REPELLING
    elif np.mean(att) >= tol.coverage:
        label = ATTRACTING
    use_att = label == ATTRACTING or (label == UNCLASSIFIED and curve.kind == "stretchline")
    curve.classification = label
    curve.diagnostics = {
        "s1": s1, "s2": s2,
        "L1": al1 if use_att else rl1, "L2": al2 if use_att else rl2,
        "repelling_fraction": float(np.mean(rep)), "attracting_fraction": float(np.mean(att)),
    }
    return label


def height_ridge_test(f, curve, normal, tol1=None, h=None):
    """Height-ridge conditions of ``f`` along ``curve`` in the ``normal`` direction.

    Per vertex: ``|L_n f| <= tol1`` and ``L_n^2 f < 0``. Vertices with invalid
    stencils are flagged and excluded from the summary.
    """
    verts = curve.vertices if isinstance(curve, MaterialCurve) else np.asarray(curve, float)
    tol1 = 1e-3 * f.scale() if tol1 is None else tol1
    l1 = lie_derivative(f, normal, verts, h)
    l2 = lie_derivative2(f, normal, verts, h)
    valid = np.isfinite(l1) & np.isfinite(l2)
    first = valid & (np.abs(l1) <= tol1)
    second = valid & (l2 < 0)
    return {
        "l1": l1, "l2": l2, "valid": valid, "first": first, "second": second,
        "all_first": bool(first[valid].all()) if valid.any() else False,
        "all_second": bool(second[valid].all()) if valid.any() else False,
        "ridge": bool((first & second)[valid].all()) if valid.any() else False,
        "tol1": tol1,
    }


def verify_strain_stretch_duality(fwd, bwd):
    """Alignment of forward left-singular vectors with backward right-singular vectors.

    ``bwd`` is evaluated at ``fwd.images`` for the flow ``t2 -> t1``. Forward
    ``theta1`` pairs with the backward stretch direction and ``theta2`` with
    the backward strain direction.
    """
    if len(fwd.points) != len(bwd.points):
        raise ValueError("forward and backward fields sample different points")
    if not np.allclose(bwd.points, fwd.images, rtol=0, atol=1e-12, equal_nan=True):
        raise ValueError("backward field is not evaluated at the forward images")
    ok = fwd.valid & bwd.valid & ~fwd.degenerate & ~bwd.degenerate
    if not ok.any():
        return {"max": None, "mean": None, "count": 0, "masked": int(len(ok))}
    m1 = 1.0 - np.abs(np.sum(fwd.th1[ok] * bwd.xi2[ok], axis=1))
    m2 = 1.0 - np.abs(np.sum(fwd.th2[ok] * bwd.xi1[ok], axis=1))
    mis = np.clip(np.maximum(m1, m2), 0.0, None)
    return {"max": float(mis.max()), "mean": float(mis.mean()), "count": int(ok.sum()),
            "masked": int((~ok).sum())}
