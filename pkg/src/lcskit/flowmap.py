"""Grid advection and deformation-gradient estimation."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dynamics import OK, IntegratorParams, integrate_points
from .geometry import EuclideanChart, metric_representation

DEFAULT_FD_STEP = 1e-5


@dataclass(frozen=True)
class Grid2:
    """Uniform rectilinear grid; flattened point index is ``j * nx + i``."""

    x_range: tuple
    y_range: tuple
    nx: int
    ny: int

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError("grid needs at least 2 points per axis")
        if not (self.x_range[1] > self.x_range[0] and self.y_range[1] > self.y_range[0]):
            raise ValueError("grid ranges must be strictly increasing")
        object.__setattr__(self, "x_range", (float(self.x_range[0]), float(self.x_range[1])))
        object.__setattr__(self, "y_range", (float(self.y_range[0]), float(self.y_range[1])))

    @property
    def x(self):
        return np.linspace(self.x_range[0], self.x_range[1], self.nx)

    @property
    def y(self):
        return np.linspace(self.y_range[0], self.y_range[1], self.ny)

    @property
    def dx(self):
        return (self.x_range[1] - self.x_range[0]) / (self.nx - 1)

    @property
    def dy(self):
        return (self.y_range[1] - self.y_range[0]) / (self.ny - 1)

    @property
    def shape(self):
        return (self.ny, self.nx)

    @property
    def size(self):
        return self.nx * self.ny

    def points(self):
        xx, yy = np.meshgrid(self.x, self.y)
        return np.stack([xx.ravel(), yy.ravel()], axis=-1)

    def index(self, i, j):
        return j * self.nx + i


@dataclass(frozen=True)
class FlowMapGrid:
    """Flow map ``t1 -> t2`` sampled at ``points``.

    ``grid`` is ``None`` for scattered point sets. ``jacobians`` are in
    parameter coordinates unless ``metric`` is set.
    """

    points: np.ndarray
    t1: float
    t2: float
    final_positions: np.ndarray
    valid_mask: np.ndarray
    jacobians: Optional[np.ndarray] = None
    grid: Optional[Grid2] = None
    chart: object = EuclideanChart()
    metric: bool = False

    @property
    def T(self):
        return self.t2 - self.t1

    def __len__(self):
        return self.points.shape[0]

    def columns(self):
        """Columns for the field dumps (``x,y,fx,fy,j11,j12,j21,j22,valid``)."""
        jac = self.jacobians if self.jacobians is not None else np.full((len(self), 2, 2), np.nan)
        return {
            "x": self.points[:, 0], "y": self.points[:, 1],
            "fx": self.final_positions[:, 0], "fy": self.final_positions[:, 1],
            "j11": jac[:, 0, 0], "j12": jac[:, 0, 1], "j21": jac[:, 1, 0], "j22": jac[:, 1, 1],
            "valid": self.valid_mask.astype(float),
        }


def advect_grid(field, grid, t1, t2, ip=IntegratorParams(), chart=EuclideanChart(), threads=1):
    """Advect every grid point; failed trajectories are masked, not raised."""
    pts = grid.points() if isinstance(grid, Grid2) else np.asarray(grid, dtype=float)
    inside = chart.contains(pts)
    final, _, status = integrate_points(field, pts, t1, t2, ip, chart.bounds(), threads=threads)
    valid = (status == OK) & inside
    return FlowMapGrid(points=pts, t1=t1, t2=t2, final_positions=final, valid_mask=valid,
                       grid=grid if isinstance(grid, Grid2) else None, chart=chart)


def _stencil(pts, h):
    offsets = np.array([[h, 0.0], [-h, 0.0], [0.0, h], [0.0, -h]])
    return (pts[None, :, :] + offsets[:, None, :]).reshape(-1, 2)


def deformation_gradient_points(field, pts, t1, t2, h=DEFAULT_FD_STEP, ip=IntegratorParams(),
                                chart=EuclideanChart(), threads=1, estimator="fd", grid=None):
    """Flow map and deformation gradient at scattered points.

    ``estimator="fd"`` differences four auxiliary stencil trajectories per
    point (central differences, step ``h``); ``"variational"`` integrates the
    tangent-linear equation alongside each trajectory.
    """
    pts = np.ascontiguousarray(np.asarray(pts, dtype=float).reshape(-1, 2))
    n = pts.shape[0]
    bounds = chart.bounds()
    inside = chart.contains(pts)
    if estimator == "variational":
        final, jac, status = integrate_points(field, pts, t1, t2, ip, bounds,
                                              variational=True, threads=threads)
        valid = (status == OK) & inside
    elif estimator == "fd":
        if not h > 0:
            raise ValueError("finite-difference step must be positive")
        stencil = _stencil(pts, h)
        allpts = np.concatenate([pts, stencil])
        # near a fixed point positions are O(h); atol must not swamp the offsets
        ip_fd = dataclasses.replace(ip, atol=min(ip.atol, ip.rtol * h))
        out, _, status = integrate_points(field, allpts, t1, t2, ip_fd, bounds, threads=threads)
        final = out[:n]
        s = out[n:].reshape(4, n, 2)
        jac = np.empty((n, 2, 2))
        jac[:, :, 0] = (s[0] - s[1]) / (2.0 * h)
        jac[:, :, 1] = (s[2] - s[3]) / (2.0 * h)
        st_ok = np.all(status[n:].reshape(4, n) == OK, axis=0)
        st_in = np.all(chart.contains(stencil).reshape(4, n), axis=0)
        valid = (status[:n] == OK) & st_ok & st_in & inside
    else:
        raise ValueError(f"unknown estimator {estimator!r}")
    if t1 == t2:
        # identity flow map; differencing it would only measure rounding
        jac[:] = np.eye(2)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    valid &= np.all(np.isfinite(jac), axis=(1, 2)) & (det != 0.0)
    return FlowMapGrid(points=pts, t1=t1, t2=t2, final_positions=final, valid_mask=valid,
                       jacobians=jac, grid=grid, chart=chart)


def deformation_gradient_fd(field, x, t1, t2, h=DEFAULT_FD_STEP, ip=IntegratorParams(),
                            chart=EuclideanChart()):
    """Central-difference deformation gradient at a single point.

    Returns the 2x2 matrix, or ``None`` if any stencil trajectory failed.
    """
    fmg = deformation_gradient_points(field, np.reshape(x, (1, 2)), t1, t2, h, ip, chart)
    return fmg.jacobians[0] if fmg.valid_mask[0] else None


def deformation_gradient_grid(field, grid, t1, t2, h=DEFAULT_FD_STEP, ip=IntegratorParams(),
                              chart=EuclideanChart(), threads=1, estimator="fd"):
    return deformation_gradient_points(field, grid.points(), t1, t2, h, ip, chart, threads,
                                       estimator, grid=grid)


def metric_jacobians(fmg, chart=None):
    """Replace parameter Jacobians by their metric representation.

    Points whose image falls outside the chart domain are invalidated.
    """
    chart = chart if chart is not None else fmg.chart
    if fmg.jacobians is None:
        raise ValueError("flow map has no Jacobians")
    if fmg.metric:
        return fmg
    if isinstance(chart, EuclideanChart):
        return dataclasses.replace(fmg, metric=True, chart=chart)
    valid = fmg.valid_mask & chart.contains(fmg.points) & chart.contains(fmg.final_positions)
    jac = np.full_like(fmg.jacobians, np.nan)
    if valid.any():
        jac[valid] = metric_representation(chart, fmg.points[valid],
                                           fmg.final_positions[valid], fmg.jacobians[valid])
    return dataclasses.replace(fmg, jacobians=jac, valid_mask=valid, metric=True, chart=chart)
