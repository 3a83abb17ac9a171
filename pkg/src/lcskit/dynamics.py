"""Velocity fields and trajectory integration in chart parameters."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _backend, _pykernels
from ._pykernels import LEFT_DOMAIN, MAX_STEPS, NONFINITE, OK  # noqa: F401


class IntegrationError(RuntimeError):
    """A single trajectory could not be integrated to its end time."""

    def __init__(self, message, status):
        super().__init__(message)
        self.status = status


@dataclass(frozen=True)
class SaddleParams:
    """Parameters of the tanh saddle Hamiltonian ``H = -L tanh(q1 x) tanh(q2 y)``."""

    L: float = 2.0
    q1: float = 1.0
    q2: float = 0.15

    def __post_init__(self):
        if not (self.L > 0 and self.q1 > 0 and self.q2 > 0):
            raise ValueError("saddle parameters must be strictly positive")


@dataclass(frozen=True)
class IntegratorParams:
    """Integrator selection.

    ``method`` is ``"dopri45"`` (adaptive Dormand-Prince 5(4)) or ``"rk4"``
    (fixed step ``step``). For the adaptive method ``step`` is only the
    initial trial step.
    """

    method: str = "dopri45"
    rtol: float = 1e-10
    atol: float = 1e-10
    step: float = 1e-2
    max_steps: int = 100_000

    def __post_init__(self):
        if self.method not in ("dopri45", "rk4"):
            raise ValueError(f"unknown integrator {self.method!r}")
        if not (self.rtol > 0 and self.atol > 0 and self.step > 0):
            raise ValueError("tolerances and step must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")

    @property
    def code(self):
        return _pykernels.RK4 if self.method == "rk4" else _pykernels.DOPRI

    @property
    def tolerance(self):
        """Representative accuracy of one trajectory."""
        if self.method == "rk4":
            return self.step ** 4
        return max(self.rtol, self.atol)


@dataclass(frozen=True)
class VelocityField:
    """Time-dependent planar velocity field in chart parameters.

    ``rhs(t, x, y) -> (u, v)`` must accept numpy arrays. ``jac`` returns the
    four entries of the velocity gradient and enables the variational
    estimator. Built-in fields also carry ``kernel`` = ``(code, params)`` for
    the compiled backend.
    """

    name: str
    rhs: Callable
    jac: Optional[Callable] = None
    time_domain: tuple = (-math.inf, math.inf)
    incompressible: bool = False
    kernel: Optional[tuple] = None
    params: dict = field(default_factory=dict)

    def __call__(self, t, x):
        x = np.asarray(x, dtype=float)
        u, v = self.rhs(t, x[..., 0], x[..., 1])
        return np.stack(np.broadcast_arrays(u, v), axis=-1)

    @classmethod
    def autonomous(cls, name, func, jac=None, **kwargs):
        """Wrap ``func(x, y) -> (u, v)``; the time argument is ignored."""
        rhs = lambda t, x, y: func(x, y)  # noqa: E731
        j = None if jac is None else (lambda t, x, y: jac(x, y))
        return cls(name=name, rhs=rhs, jac=j, **kwargs)


def saddle_velocity(params, x):
    """Velocity of the nonlinear incompressible saddle at ``x`` (shape ``(..., 2)``)."""
    x = np.asarray(x, dtype=float)
    tx = np.tanh(params.q1 * x[..., 0])
    ty = np.tanh(params.q2 * x[..., 1])
    u = -params.L * params.q2 * (1.0 - ty ** 2) * tx
    v = params.L * params.q1 * ty * (1.0 - tx ** 2)
    return np.stack([u, v], axis=-1)


def linear_saddle_velocity(lam, x):
    x = np.asarray(x, dtype=float)
    return np.stack([-lam * x[..., 0], lam * x[..., 1]], axis=-1)


def _builtin(name, code, values, **kwargs):
    rhs, jac = _pykernels.builtin_rhs(code, np.asarray(values, dtype=float))
    return VelocityField(name=name, rhs=rhs, jac=jac, incompressible=True,
                         kernel=(code, tuple(float(v) for v in values)), **kwargs)


def nonlinear_saddle(params: SaddleParams = SaddleParams()):
    return _builtin("nonlinear_saddle", _pykernels.NONLINEAR_SADDLE,
                    (params.L, params.q1, params.q2),
                    params={"L": params.L, "q1": params.q1, "q2": params.q2})


def linear_saddle(lam=0.3):
    """Linear saddle ``(-lam x, lam y)``; flow map ``diag(e^-lam T, e^lam T)``."""
    return _builtin("linear_saddle", _pykernels.LINEAR_SADDLE, (lam,),
                    params={"lambda": lam})


def rigid_rotation_sphere(omega=1.0):
    """Solid-body rotation about the polar axis in (longitude, latitude)."""
    return _builtin("sphere_rotation", _pykernels.SPHERE_ROTATION, (omega,),
                    params={"omega": omega})


def make_field(name, **params):
    """Build a built-in field by configuration name."""
    if name == "nonlinear_saddle":
        return nonlinear_saddle(SaddleParams(**{k: float(params[k]) for k in ("L", "q1", "q2")
                                                if k in params}))
    if name == "linear_saddle":
        return linear_saddle(float(params.get("lambda", 0.3)))
    if name == "sphere_rotation":
        return rigid_rotation_sphere(float(params.get("omega", 1.0)))
    raise ValueError(f"unknown velocity field {name!r}")


def _check_times(vf, t1, t2):
    lo, hi = vf.time_domain
    for t in (t1, t2):
        if not lo <= t <= hi:
            raise ValueError(f"time {t} outside the field's time domain {vf.time_domain}")


def _run_chunk(vf, pts, t1, t2, ip, bounds, variational, force_python):
    ck = _backend.ckernels
    if vf.kernel is not None and ck is not None and not force_python:
        code, values = vf.kernel
        return ck.integrate_batch(code, np.asarray(values, dtype=float),
                                  np.ascontiguousarray(pts), float(t1), float(t2),
                                  ip.code, ip.rtol, ip.atol, ip.step, ip.max_steps,
                                  bounds, variational)
    if variational and vf.jac is None:
        raise ValueError(f"field {vf.name!r} has no velocity gradient")
    return _pykernels.integrate_batch(vf.rhs, vf.jac, pts, t1, t2, ip.code, ip.rtol,
                                      ip.atol, ip.step, ip.max_steps, bounds, variational)


def integrate_points(vf, pts, t1, t2, ip=IntegratorParams(), bounds=None,
                     variational=False, threads=1, force_python=False):
    """Advect an ``(N, 2)`` array of points from ``t1`` to ``t2``.

    Work is split into ``threads`` contiguous chunks; output order and values
    do not depend on the split.

    Returns
    -------
    final : ndarray (N, 2)
    jacobian : ndarray (N, 2, 2) or None
    status : ndarray (N,) int8, ``OK`` where the end time was reached
    """
    _check_times(vf, t1, t2)
    pts = np.ascontiguousarray(np.asarray(pts, dtype=float).reshape(-1, 2))
    n = pts.shape[0]
    threads = max(1, int(threads))
    if threads == 1 or n < 2 * threads:
        final, jac, status, _ = _run_chunk(vf, pts, t1, t2, ip, bounds, variational,
                                           force_python)
        return final, jac, status
    edges = np.linspace(0, n, threads + 1).astype(int)
    chunks = [pts[a:b] for a, b in zip(edges[:-1], edges[1:])]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda c: _run_chunk(vf, c, t1, t2, ip, bounds,
                                                   variational, force_python), chunks))
    final = np.concatenate([p[0] for p in parts])
    jac = np.concatenate([p[1] for p in parts]) if variational else None
    status = np.concatenate([p[2] for p in parts])
    return final, jac, status


def integrate_trajectory(vf, x0, t1, t2, ip=IntegratorParams(), bounds=None):
    """Final position of the trajectory through ``x0`` at ``t1``, taken to ``t2``.

    Raises
    ------
    IntegrationError
        If the step budget is exhausted, the solution blows up, or it leaves
        ``bounds``.
    """
    final, _, status = integrate_points(vf, np.reshape(x0, (1, 2)), t1, t2, ip, bounds)
    code = int(status[0])
    if code != OK:
        reason = {MAX_STEPS: "step budget exhausted", LEFT_DOMAIN: "left the chart domain",
                  NONFINITE: "non-finite state"}[code]
        raise IntegrationError(f"trajectory from {tuple(np.ravel(x0))}: {reason}", code)
    return final[0]
