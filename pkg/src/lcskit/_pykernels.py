"""Vectorised numpy trajectory integrators.

This is the pure-Python backend. Every trajectory carries its own step size,
so results do not depend on how points are batched. The algorithm mirrors
``_ckernels.pyx`` step for step; the two backends agree to rounding.
"""
import numpy as np

OK = 0
MAX_STEPS = 1
LEFT_DOMAIN = 2
NONFINITE = 3

DOPRI = 0
RK4 = 1

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])

_SAFETY = 0.9
_FACMIN = 0.2
_FACMAX = 5.0


# built-in field codes shared with the compiled kernel
NONLINEAR_SADDLE = 0
LINEAR_SADDLE = 1
SPHERE_ROTATION = 2


def builtin_rhs(kind, params):
    """Return vectorised ``(rhs, jac)`` callables for a built-in field code."""
    if kind == NONLINEAR_SADDLE:
        L, q1, q2 = params[0], params[1], params[2]

        def rhs(t, x, y):
            tx = np.tanh(q1 * x)
            ty = np.tanh(q2 * y)
            return -L * q2 * (1.0 - ty * ty) * tx, L * q1 * ty * (1.0 - tx * tx)

        def jac(t, x, y):
            tx = np.tanh(q1 * x)
            ty = np.tanh(q2 * y)
            sx = 1.0 - tx * tx
            sy = 1.0 - ty * ty
            return (-L * q1 * q2 * sx * sy,
                    2.0 * L * q2 * q2 * tx * ty * sy,
                    -2.0 * L * q1 * q1 * tx * ty * sx,
                    L * q1 * q2 * sx * sy)

    elif kind == LINEAR_SADDLE:
        lam = params[0]

        def rhs(t, x, y):
            return -lam * x, lam * y

        def jac(t, x, y):
            z = np.zeros_like(x)
            return z - lam, z, z, z + lam

    elif kind == SPHERE_ROTATION:
        omega = params[0]

        def rhs(t, x, y):
            return np.full_like(x, omega), np.zeros_like(y)

        def jac(t, x, y):
            z = np.zeros_like(x)
            return z, z, z, z

    else:
        raise ValueError(f"unknown field code {kind}")
    return rhs, jac


def _make_system(rhs, jac, variational):
    """State layout: rows are (x, y[, j11, j12, j21, j22])."""
    if not variational:
        def f(t, s):
            u, v = rhs(t, s[0], s[1])
            return np.stack([np.broadcast_to(u, s[0].shape), np.broadcast_to(v, s[0].shape)])
        return f

    def f(t, s):
        x, y = s[0], s[1]
        u, v = rhs(t, x, y)
        a, b, c, d = jac(t, x, y)
        j11, j12, j21, j22 = s[2], s[3], s[4], s[5]
        return np.stack([
            np.broadcast_to(u, x.shape), np.broadcast_to(v, x.shape),
            a * j11 + b * j21, a * j12 + b * j22,
            c * j11 + d * j21, c * j12 + d * j22,
        ])
    return f


def _inside(s, bounds):
    return (s[0] >= bounds[0]) & (s[0] <= bounds[1]) & (s[1] >= bounds[2]) & (s[1] <= bounds[3])


def integrate_batch(rhs, jac, pts, t1, t2, method=DOPRI, rtol=1e-10, atol=1e-10,
                    step=1e-2, max_steps=100000, bounds=None, variational=False):
    """Integrate many trajectories from ``t1`` to ``t2``.

    Parameters
    ----------
    rhs : callable
        ``rhs(t, x, y) -> (u, v)`` evaluated on arrays.
    jac : callable or None
        ``jac(t, x, y) -> (du/dx, du/dy, dv/dx, dv/dy)``; needed when
        ``variational`` is set.
    pts : ndarray, shape (N, 2)
    bounds : sequence of 4 floats
        ``(xmin, xmax, ymin, ymax)``; trajectories leaving the box stop with
        status ``LEFT_DOMAIN``.

    Returns
    -------
    final : ndarray (N, 2)
    jacobian : ndarray (N, 2, 2) or None
    status : ndarray (N,) int8
    nsteps : ndarray (N,) int64
    """
    pts = np.ascontiguousarray(pts, dtype=float).reshape(-1, 2)
    n = pts.shape[0]
    if bounds is None:
        bounds = (-np.inf, np.inf, -np.inf, np.inf)
    bounds = np.asarray(bounds, dtype=float)
    dim = 6 if variational else 2
    f = _make_system(rhs, jac, variational)

    state = np.zeros((dim, n))
    state[0] = pts[:, 0]
    state[1] = pts[:, 1]
    if variational:
        state[2] = 1.0
        state[5] = 1.0

    status = np.zeros(n, dtype=np.int8)
    nsteps = np.zeros(n, dtype=np.int64)
    inside = _inside(state, bounds)
    status[~inside] = LEFT_DOMAIN
    span = t2 - t1
    if span == 0.0 or n == 0:
        return _finish(state, status, nsteps, variational)

    if method == RK4:
        _rk4(f, state, status, nsteps, t1, span, step, max_steps, bounds)
    else:
        _dopri(f, state, status, nsteps, t1, span, rtol, atol, step, max_steps, bounds)
    return _finish(state, status, nsteps, variational)


def _finish(state, status, nsteps, variational):
    final = np.ascontiguousarray(state[:2].T)
    jacobian = None
    if variational:
        jacobian = np.ascontiguousarray(state[2:].T).reshape(-1, 2, 2)
    return final, jacobian, status, nsteps


def _rk4(f, state, status, nsteps, t1, span, step, max_steps, bounds):
    nstep = max(1, int(np.ceil(abs(span) / step - 1e-12)))
    if nstep > max_steps:
        status[status == OK] = MAX_STEPS
        return
    h = span / nstep
    act = np.flatnonzero(status == OK)
    for k in range(nstep):
        if act.size == 0:
            break
        t = t1 + k * h
        s = state[:, act]
        k1 = f(t, s)
        k2 = f(t + 0.5 * h, s + 0.5 * h * k1)
        k3 = f(t + 0.5 * h, s + 0.5 * h * k2)
        k4 = f(t + h, s + h * k3)
        s = s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        state[:, act] = s
        nsteps[act] += 1
        bad = ~np.all(np.isfinite(s), axis=0)
        out = ~_inside(s, bounds) & ~bad
        status[act[bad]] = NONFINITE
        status[act[out]] = LEFT_DOMAIN
        act = act[~(bad | out)]


def _dopri(f, state, status, nsteps, t1, span, rtol, atol, step, max_steps, bounds):
    n = state.shape[1]
    direction = 1.0 if span > 0 else -1.0
    total = abs(span)
    # elapsed |t - t1| per trajectory; step sizes are magnitudes
    elapsed = np.zeros(n)
    h = np.full(n, min(step, total))
    rejected_last = np.zeros(n, dtype=bool)
    act = np.flatnonzero(status == OK)
    k1 = f(t1, state[:, act]) if act.size else None

    while act.size:
        s = state[:, act]
        remaining = total - elapsed[act]
        last = h[act] >= remaining
        hh = np.where(last, remaining, h[act])
        hs = direction * hh
        t = t1 + direction * elapsed[act]
        ks = [k1]
        for i in range(1, 7):
            acc = s.copy()
            for j, a in enumerate(_A[i]):
                if a != 0.0:
                    acc += (hs * a) * ks[j]
            ks.append(f(t + _C[i] * hs, acc))
            if i == 6:
                new = acc
        err_vec = np.zeros_like(s)
        for j, e in enumerate(_E):
            if e != 0.0:
                err_vec += e * ks[j]
        err_vec *= hs
        scale = atol + rtol * np.maximum(np.abs(s), np.abs(new))
        err = np.sqrt(np.mean((err_vec / scale) ** 2, axis=0))

        finite = np.all(np.isfinite(new), axis=0) & np.isfinite(err)
        accept = (err <= 1.0) & finite
        with np.errstate(divide="ignore"):
            fac = np.where(err == 0.0, _FACMAX,
                           np.clip(_SAFETY * err ** -0.2, _FACMIN, _FACMAX))
        fac = np.where(accept & rejected_last[act], np.minimum(fac, 1.0), fac)
        fac = np.where(~finite, _FACMIN, fac)

        # accepted steps
        ia = act[accept]
        state[:, ia] = new[:, accept]
        elapsed[ia] = np.where(last[accept], total, elapsed[ia] + hh[accept])
        nsteps[ia] += 1
        k1_next = ks[6].copy()
        rejected_last[act] = ~accept
        h[act] = hh * fac

        done = np.zeros(act.size, dtype=bool)
        out = accept & ~_inside(new, bounds)
        reached = accept & (elapsed[act] >= total) & ~out
        too_many = (nsteps[act] >= max_steps) & ~reached & ~out
        tiny = ~accept & (h[act] < 1e-14 * max(total, 1.0))
        status[act[out]] = LEFT_DOMAIN
        status[act[too_many]] = MAX_STEPS
        status[act[tiny & ~finite]] = NONFINITE
        status[act[tiny & finite]] = MAX_STEPS
        done = reached | out | too_many | tiny

        # FSAL: accepted trajectories reuse the last stage, rejected keep k1
        k1_new = np.where(accept, k1_next, k1)
        keep = ~done
        act = act[keep]
        k1 = k1_new[:, keep]
