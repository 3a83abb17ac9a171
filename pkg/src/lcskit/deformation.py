"""Singular value analysis of deformation gradients.

Index convention: ``sigma1 <= sigma2``. ``xi`` are right-singular vectors at
the initial point, ``theta`` left-singular vectors at the image point, with
``DF @ xi_i = sigma_i * theta_i``. Every ``xi`` has a nonnegative first
component (nonnegative second on ties); ``theta`` follows from ``DF``.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .flowmap import DEFAULT_FD_STEP, FlowMapGrid, deformation_gradient_points, metric_jacobians
from .geometry import EuclideanChart

GAP_TOL = 1e-9


class SingularMatrixError(ArithmeticError):
    pass


@dataclass(frozen=True)
class SvdPoint:
    sigma1: float
    sigma2: float
    xi1: np.ndarray
    xi2: np.ndarray
    theta1: np.ndarray
    theta2: np.ndarray
    degenerate: bool


def _canonical(v):
    """Flip rows of ``v`` (N, 2) to a nonnegative leading component."""
    flip = (v[:, 0] < 0) | ((v[:, 0] == 0) & (v[:, 1] < 0))
    return np.where(flip[:, None], -v, v), np.where(flip, -1.0, 1.0)


def svd2_batch(m, gap_tol=GAP_TOL):
    """Closed-form SVD of an ``(N, 2, 2)`` stack.

    Writes ``M = Q*Rot + R*Refl``; the largest stretch is ``Q + R`` along the
    angle where the rotation and reflection parts align. The small singular
    value comes from ``|det| / sigma2`` to avoid cancellation.

    Returns a dict with ``s1, s2, xi1, xi2, th1, th2, degenerate``.
    Singular or non-finite inputs give NaN rows.
    """
    m = np.asarray(m, dtype=float).reshape(-1, 2, 2)
    a, b, c, d = m[:, 0, 0], m[:, 0, 1], m[:, 1, 0], m[:, 1, 1]
    e, f = 0.5 * (a + d), 0.5 * (a - d)
    g, h = 0.5 * (c + b), 0.5 * (c - b)
    q, r = np.hypot(e, h), np.hypot(f, g)
    s2 = q + r
    det = a * d - b * c
    with np.errstate(divide="ignore", invalid="ignore"):
        # rounding can lift |det|/s2 an ulp above s2 when degenerate
        s1 = np.minimum(np.abs(det) / s2, s2)
    beta = 0.5 * (np.arctan2(g, f) - np.arctan2(h, e))
    xi2, _ = _canonical(np.stack([np.cos(beta), np.sin(beta)], axis=-1))
    xi1, sgn1 = _canonical(np.stack([-xi2[:, 1], xi2[:, 0]], axis=-1))
    with np.errstate(divide="ignore", invalid="ignore"):
        th2 = np.einsum("nij,nj->ni", m, xi2) / s2[:, None]
    th2 /= np.linalg.norm(th2, axis=1, keepdims=True)
    orient = sgn1 * np.sign(det)
    th1 = orient[:, None] * np.stack([-th2[:, 1], th2[:, 0]], axis=-1)
    bad = ~np.isfinite(det) | (det == 0.0) | ~np.all(np.isfinite(m), axis=(1, 2))
    out = {"s1": s1, "s2": s2, "xi1": xi1, "xi2": xi2, "th1": th1, "th2": th2}
    for k in out:
        out[k] = np.where(bad.reshape((-1,) + (1,) * (out[k].ndim - 1)), np.nan, out[k])
    out["degenerate"] = ~bad & ((s2 - s1) < gap_tol * s2)
    return out


def svd2(m, gap_tol=GAP_TOL):
    """SVD of one 2x2 matrix as an :class:`SvdPoint`.

    Raises
    ------
    SingularMatrixError
        If ``m`` is singular or contains NaN/inf.
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (2, 2):
        raise ValueError("expected a 2x2 matrix")
    if not np.all(np.isfinite(m)):
        raise SingularMatrixError("non-finite matrix")
    if m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0] == 0.0:
        raise SingularMatrixError("singular matrix")
    r = svd2_batch(m[None], gap_tol)
    return SvdPoint(float(r["s1"][0]), float(r["s2"][0]), r["xi1"][0], r["xi2"][0],
                    r["th1"][0], r["th2"][0], bool(r["degenerate"][0]))


def cauchy_green(df):
    """Right and left Cauchy-Green tensors ``(DF^T DF, DF DF^T)``."""
    df = np.asarray(df, dtype=float)
    dft = np.swapaxes(df, -1, -2)
    return dft @ df, df @ dft


def ftle_forward(sigma2, T):
    """Forward FTLE ``log(sigma2) / |T|``."""
    sigma2 = np.asarray(sigma2, dtype=float)
    if T == 0:
        raise ValueError("FTLE needs a nonzero time span")
    if np.any(sigma2 <= 0):
        raise ValueError("stretch ratios must be positive")
    return np.log(sigma2) / abs(T)


def ftle_backward_from_forward(sigma1, T):
    """Backward FTLE at the image point, ``-log(sigma1) / |T|``."""
    sigma1 = np.asarray(sigma1, dtype=float)
    if T == 0:
        raise ValueError("FTLE needs a nonzero time span")
    if np.any(sigma1 <= 0):
        raise ValueError("stretch ratios must be positive")
    return -np.log(sigma1) / abs(T)


@dataclass(frozen=True)
class DeformationField:
    """Per-point SVD data of a flow map, in metric coordinates.

    ``inv_modulus`` maps metric-coordinate vectors at the initial points back
    to parameter components (identity for Euclidean charts).
    """

    flowmap: FlowMapGrid
    s1: np.ndarray
    s2: np.ndarray
    xi1: np.ndarray
    xi2: np.ndarray
    th1: np.ndarray
    th2: np.ndarray
    degenerate: np.ndarray
    inv_modulus: Optional[np.ndarray] = None

    @property
    def grid(self):
        return self.flowmap.grid

    @property
    def points(self):
        return self.flowmap.points

    @property
    def images(self):
        return self.flowmap.final_positions

    @property
    def valid(self):
        return self.flowmap.valid_mask

    @property
    def T(self):
        return self.flowmap.T

    @property
    def lambda1(self):
        return self.s1 ** 2

    @property
    def lambda2(self):
        return self.s2 ** 2

    @property
    def kappa1(self):
        """Smaller backward stretch ratio at the image point."""
        return 1.0 / self.s2

    @property
    def kappa2(self):
        return 1.0 / self.s1

    @property
    def ftle_f(self):
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.log(self.s2) / abs(self.T)

    @property
    def ftle_b(self):
        """Backward FTLE attached to the image points."""
        with np.errstate(invalid="ignore", divide="ignore"):
            return -np.log(self.s1) / abs(self.T)

    @property
    def usable(self):
        """Valid and nondegenerate points."""
        return self.valid & ~self.degenerate

    def right_cauchy_green(self):
        """``C = Xi diag(s^2) Xi^T`` assembled from the SVD (metric coordinates)."""
        return (self.s1[:, None, None] ** 2 * np.einsum("ni,nj->nij", self.xi1, self.xi1)
                + self.s2[:, None, None] ** 2 * np.einsum("ni,nj->nij", self.xi2, self.xi2))

    def columns(self):
        cols = self.flowmap.columns()
        cols.update({
            "s1": self.s1, "s2": self.s2,
            "xi1x": self.xi1[:, 0], "xi1y": self.xi1[:, 1],
            "xi2x": self.xi2[:, 0], "xi2y": self.xi2[:, 1],
            "th1x": self.th1[:, 0], "th1y": self.th1[:, 1],
            "th2x": self.th2[:, 0], "th2y": self.th2[:, 1],
            "ftle_f": self.ftle_f, "ftle_b": self.ftle_b,
            "degenerate": self.degenerate.astype(float),
        })
        return cols

    def scalar(self, name):
        """Gridded scalar field (``s1``, ``s2``, ``ftle_f``, ...) for interpolation."""
        from .lcs import ScalarField
        values = {"s1": self.s1, "s2": self.s2, "ftle_f": self.ftle_f,
                  "inv_s1": 1.0 / self.s1, "inv_s2": 1.0 / self.s2,
                  "kappa1": self.kappa1, "kappa2": self.kappa2}[name]
        return ScalarField.from_flat(self.grid, values, self.valid)

    def direction(self, name):
        """Gridded line field ``xi1`` or ``xi2``."""
        from .lcs import DirectionField
        return DirectionField.from_deformation(self, name)


def deformation_field(fmg, chart=None, gap_tol=GAP_TOL):
    """SVD analysis of a flow map (metric representation applied first)."""
    fm = metric_jacobians(fmg, chart)
    res = svd2_batch(fm.jacobians, gap_tol)
    valid = fm.valid_mask & np.isfinite(res["s1"]) & (res["s1"] > 0)
    fm = dataclasses.replace(fm, valid_mask=valid)
    inv_mod = None
    if not isinstance(fm.chart, EuclideanChart):
        inv_mod = np.full((len(fm), 2, 2), np.nan)
        inside = fm.chart.contains(fm.points)
        inv_mod[inside] = fm.chart.inverse_modulus(fm.points[inside])
    return DeformationField(flowmap=fm, s1=res["s1"], s2=res["s2"], xi1=res["xi1"],
                            xi2=res["xi2"], th1=res["th1"], th2=res["th2"],
                            degenerate=res["degenerate"] & valid, inv_modulus=inv_mod)


def backward_at_images(field, vf, ip=None, h=DEFAULT_FD_STEP, threads=1, estimator="fd"):
    """Independent backward computation: advect the image points ``t2 -> t1``."""
    from .dynamics import IntegratorParams
    fm = field.flowmap
    ip = ip if ip is not None else IntegratorParams()
    bwd = deformation_gradient_points(vf, fm.final_positions, fm.t2, fm.t1, h, ip, fm.chart,
                                      threads, estimator)
    bwd = dataclasses.replace(bwd, valid_mask=bwd.valid_mask & fm.valid_mask)
    return deformation_field(bwd)


def resample_backward_ftle(field, grid):
    """Nearest-image resampling of the backward FTLE onto a regular t2 grid."""
    from scipy.spatial import cKDTree
    ok = field.valid
    tree = cKDTree(field.images[ok])
    _, idx = tree.query(grid.points())
    return field.ftle_b[ok][idx].reshape(grid.shape)


def verify_incompressibility(field):
    """Max and mean of ``|sigma1 sigma2 - 1|`` over valid points."""
    ok = field.valid
    res = np.abs(field.s1[ok] * field.s2[ok] - 1.0)
    return {"max": float(res.max()) if res.size else 0.0,
            "mean": float(res.mean()) if res.size else 0.0,
            "count": int(ok.sum())}


def _abs_dot(u, v):
    return np.abs(np.sum(u * v, axis=-1))


def verify_backward_relations(field, backward):
    """Residuals of the forward/backward stretch and direction relations.

    ``backward`` must be evaluated at ``field.images`` for the flow ``t2 -> t1``.

    Reports
    -------
    kappa_sigma : max of ``|kappa2 sigma1 - 1|`` and ``|kappa1 sigma2 - 1|``
    misalignment : max of ``1 - |<theta_j, xi_bwd_(3-j)>|`` at nondegenerate points
    pullback : max ``||DF_bwd theta_j - xi_j / sigma_j||`` relative to ``1/sigma_j``
    """
    if len(field.points) != len(backward.points) or not np.allclose(
            backward.points, field.images, rtol=0, atol=1e-12, equal_nan=True):
        raise ValueError("backward field is not evaluated at the forward images")
    ok = field.valid & backward.valid
    nd = ok & ~field.degenerate & ~backward.degenerate
    f, b = field, backward
    ks = np.maximum(np.abs(b.s2 * f.s1 - 1.0), np.abs(b.s1 * f.s2 - 1.0))
    # |dot| may exceed 1 by an ulp
    mis = np.clip(np.maximum(1.0 - _abs_dot(f.th1, b.xi2), 1.0 - _abs_dot(f.th2, b.xi1)), 0.0, None)
    jb = b.flowmap.jacobians
    pb1 = np.linalg.norm(np.einsum("nij,nj->ni", jb, f.th1) - f.xi1 / f.s1[:, None], axis=1) * f.s1
    pb2 = np.linalg.norm(np.einsum("nij,nj->ni", jb, f.th2) - f.xi2 / f.s2[:, None], axis=1) * f.s2
    pb = np.maximum(pb1, pb2)

    def agg(x, mask):
        return float(np.max(x[mask])) if mask.any() else None

    return {"kappa_sigma": agg(ks, ok), "misalignment": agg(mis, nd),
            "pullback": agg(pb, ok), "count": int(ok.sum()), "nondegenerate": int(nd.sum())}
