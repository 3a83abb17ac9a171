"""Parametrised 2D charts and metric coordinates.

A chart maps parameters ``p = (p1, p2)`` into Euclidean three-space. The
Gramian ``G = P'^T P'`` of its pushforward represents the pulled-back metric,
and its square root ``|P_*|`` (the modulus) turns parameter components into
metric coordinates where inner products are Euclidean.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DomainError(ValueError):
    """A point lies outside the chart's parameter domain."""


class NumericalError(ArithmeticError):
    """Non-finite or singular values where finite ones were required."""


def sqrt_spd2(m):
    """Square root of symmetric positive-definite 2x2 matrices.

    Closed-form eigendecomposition; ``m`` may have shape ``(2, 2)`` or
    ``(..., 2, 2)``.
    """
    m = np.asarray(m, dtype=float)
    a = m[..., 0, 0]
    b = 0.5 * (m[..., 0, 1] + m[..., 1, 0])
    d = m[..., 1, 1]
    half_tr = 0.5 * (a + d)
    rad = np.hypot(0.5 * (a - d), b)
    l_max = half_tr + rad
    # product form keeps the small eigenvalue accurate
    l_min = (a * d - b * b) / l_max
    phi = 0.5 * np.arctan2(2.0 * b, a - d)
    c, s = np.cos(phi), np.sin(phi)
    r_max, r_min = np.sqrt(l_max), np.sqrt(l_min)
    out = np.empty(m.shape)
    out[..., 0, 0] = r_max * c * c + r_min * s * s
    out[..., 1, 1] = r_max * s * s + r_min * c * c
    out[..., 0, 1] = out[..., 1, 0] = (r_max - r_min) * c * s
    return out


@dataclass(frozen=True)
class Chart:
    """Base class for a single parametrisation of an embedded surface.

    Subclasses implement :meth:`embed` and :meth:`pushforward`; the Gramian and
    modulus default to products of the pushforward.
    """

    name: str = "chart"
    param_domain: tuple = (-np.inf, np.inf, -np.inf, np.inf)

    def bounds(self):
        """``(p1_min, p1_max, p2_min, p2_max)`` used by the integrators."""
        return tuple(float(v) for v in self.param_domain)

    def contains(self, p):
        p = np.asarray(p, dtype=float)
        lo1, hi1, lo2, hi2 = self.bounds()
        return ((p[..., 0] >= lo1) & (p[..., 0] <= hi1)
                & (p[..., 1] >= lo2) & (p[..., 1] <= hi2))

    def check(self, p):
        p = np.asarray(p, dtype=float)
        if not np.all(np.isfinite(p)):
            raise NumericalError("non-finite chart parameters")
        if not np.all(self.contains(p)):
            raise DomainError(f"point outside the {self.name} chart domain")
        return p

    def embed(self, p):
        raise NotImplementedError

    def pushforward(self, p):
        """3x2 matrix whose columns are the parameter derivatives of the embedding."""
        raise NotImplementedError

    def gramian(self, p):
        pf = self.pushforward(p)
        return np.swapaxes(pf, -1, -2) @ pf

    def modulus(self, p):
        return sqrt_spd2(self.gramian(p))

    def inverse_modulus(self, p):
        return np.linalg.inv(self.modulus(p))


@dataclass(frozen=True)
class EuclideanChart(Chart):
    """The plane as the ``z = 0`` slice of three-space; metric is the identity."""

    name: str = "euclidean"

    def embed(self, p):
        p = self.check(p)
        return np.concatenate([p, np.zeros(p.shape[:-1] + (1,))], axis=-1)

    def pushforward(self, p):
        p = self.check(p)
        out = np.zeros(p.shape[:-1] + (3, 2))
        out[..., 0, 0] = 1.0
        out[..., 1, 1] = 1.0
        return out

    def gramian(self, p):
        p = self.check(p)
        return np.broadcast_to(np.eye(2), p.shape[:-1] + (2, 2)).copy()

    def modulus(self, p):
        return self.gramian(p)

    def inverse_modulus(self, p):
        return self.gramian(p)


@dataclass(frozen=True)
class SphereChart(Chart):
    """Geographic (longitude, latitude) chart of a sphere of ``radius``.

    Longitude is unbounded (periodic); latitudes within ``pole_clamp`` of the
    poles are rejected.
    """

    name: str = "sphere"
    radius: float = 1.0
    pole_clamp: float = 1e-3

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("sphere radius must be positive")
        if not 0 < self.pole_clamp < np.pi / 2:
            raise ValueError("pole_clamp must lie in (0, pi/2)")
        lat = np.pi / 2 - self.pole_clamp
        object.__setattr__(self, "param_domain", (-np.inf, np.inf, -lat, lat))

    def embed(self, p):
        p = self.check(p)
        lon, lat = p[..., 0], p[..., 1]
        r = self.radius
        return np.stack([r * np.cos(lat) * np.cos(lon),
                         r * np.cos(lat) * np.sin(lon),
                         r * np.sin(lat)], axis=-1)

    def pushforward(self, p):
        p = self.check(p)
        lon, lat = p[..., 0], p[..., 1]
        r = self.radius
        out = np.zeros(p.shape[:-1] + (3, 2))
        out[..., 0, 0] = -r * np.cos(lat) * np.sin(lon)
        out[..., 1, 0] = r * np.cos(lat) * np.cos(lon)
        out[..., 0, 1] = -r * np.sin(lat) * np.cos(lon)
        out[..., 1, 1] = -r * np.sin(lat) * np.sin(lon)
        out[..., 2, 1] = r * np.cos(lat)
        return out

    def gramian(self, p):
        p = self.check(p)
        out = np.zeros(p.shape[:-1] + (2, 2))
        out[..., 0, 0] = (self.radius * np.cos(p[..., 1])) ** 2
        out[..., 1, 1] = self.radius ** 2
        return out

    def modulus(self, p):
        p = self.check(p)
        out = np.zeros(p.shape[:-1] + (2, 2))
        out[..., 0, 0] = self.radius * np.cos(p[..., 1])
        out[..., 1, 1] = self.radius
        return out

    def inverse_modulus(self, p):
        p = self.check(p)
        out = np.zeros(p.shape[:-1] + (2, 2))
        out[..., 0, 0] = 1.0 / (self.radius * np.cos(p[..., 1]))
        out[..., 1, 1] = 1.0 / self.radius
        return out


def gramian(chart, p):
    """Metric representing matrix of ``chart`` at ``p``."""
    g = chart.gramian(p)
    if not np.all(np.isfinite(g)):
        raise NumericalError("non-finite Gramian")
    return g


def modulus(chart, p):
    """Transformation ``|P_*(p)| = G(p)^(1/2)`` to metric coordinates."""
    m = chart.modulus(p)
    if not np.all(np.isfinite(m)):
        raise NumericalError("non-finite modulus")
    return m


def metric_representation(chart, x1, x2, df):
    """Deformation gradient ``df`` (parameter coordinates) in metric coordinates.

    Returns ``|P_*(x2)| @ df @ |P_*(x1)|^-1``; its singular values are the true
    metric stretch ratios. Broadcasts over leading axes.
    """
    df = np.asarray(df, dtype=float)
    if not np.all(np.isfinite(df)):
        raise NumericalError("non-finite deformation gradient")
    m2 = modulus(chart, x2)
    m1_inv = chart.inverse_modulus(x1)
    if not np.all(np.isfinite(m1_inv)):
        raise DomainError("singular modulus at the initial point")
    return m2 @ df @ m1_inv


def make_chart(name, **params):
    """Build a chart by configuration name (``euclidean`` or ``sphere``)."""
    if name == "euclidean":
        return EuclideanChart()
    if name == "sphere":
        return SphereChart(radius=float(params.get("radius", 1.0)),
                           pole_clamp=float(params.get("pole_clamp", 1e-3)))
    raise ValueError(f"unknown chart {name!r}")
