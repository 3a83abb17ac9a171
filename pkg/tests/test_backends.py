import os
import subprocess
import sys

import numpy as np
import pytest

from lcskit import _backend
from lcskit.dynamics import (IntegratorParams, integrate_points, linear_saddle, nonlinear_saddle,
                             rigid_rotation_sphere)
from lcskit.geometry import SphereChart

compiled = pytest.mark.skipif(_backend.ckernels is None, reason="compiled kernels not built")


@compiled
@pytest.mark.parametrize("vf", [nonlinear_saddle(), linear_saddle(0.3), rigid_rotation_sphere()])
@pytest.mark.parametrize("ip", [IntegratorParams(), IntegratorParams("rk4", step=0.05)])
@pytest.mark.parametrize("T", [1.0, -3.0])
def test_backends_agree(vf, ip, T, rng):
    pts = rng.uniform(-1, 1, (200, 2))
    a = integrate_points(vf, pts, 0.0, T, ip, variational=True)
    b = integrate_points(vf, pts, 0.0, T, ip, variational=True, force_python=True)
    np.testing.assert_allclose(a[0], b[0], rtol=0, atol=1e-12)
    np.testing.assert_allclose(a[1], b[1], rtol=0, atol=1e-11)
    assert np.array_equal(a[2], b[2])


@compiled
def test_backends_agree_on_domain_exit():
    bounds = SphereChart().bounds()
    pts = np.array([[0.0, 1.56], [0.0, 0.0], [0.0, -1.5]])
    vf = nonlinear_saddle()
    a = integrate_points(vf, pts, 0.0, 5.0, bounds=bounds)
    b = integrate_points(vf, pts, 0.0, 5.0, bounds=bounds, force_python=True)
    assert np.array_equal(a[2], b[2])
    ok = a[2] == 0
    np.testing.assert_allclose(a[0][ok], b[0][ok], atol=1e-12)


def test_pure_python_switch():
    env = dict(os.environ, LCSKIT_PURE_PYTHON="1")
    res = subprocess.run([sys.executable, "-c", "import lcskit; print(lcskit.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert res.stdout.strip() == "python"
