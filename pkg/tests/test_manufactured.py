import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from adlrom import manufactured as mf

H = 1e-4


def d1(f, x):
    return (-f(x + 2 * H) + 8 * f(x + H) - 8 * f(x - H) + f(x - 2 * H)) / (12 * H)


def d2(f, x):
    return (-f(x + 2 * H) + 16 * f(x + H) - 30 * f(x) + 16 * f(x - H) - f(x - 2 * H)) / (12 * H * H)


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-2)


unit = st.floats(0.01, 0.99)


def test_zero_on_layer_center_and_walls():
    for t in (0.0, 0.3, 0.77):
        u, _ = mf.exact_velocity(0.4, t, t)
        assert u == 0.0
        assert mf.exact_velocity(0.2, 0.0, t)[0] == 0.0
        assert abs(mf.exact_velocity(0.2, 1.0, t)[0]) < 1e-15
        assert abs(mf.exact_velocity(1.0, 0.2, t)[1]) < 1e-15


def test_value_at_midline():
    mpmath.mp.dps = 30
    ref = float(2 / mpmath.pi * mpmath.atan(-250))
    u, _ = mf.exact_velocity(0.123, 0.5, 0.0)
    assert abs(u - ref) < 1e-15
    assert abs(u - (-0.997454)) < 1e-6


def test_components_depend_on_one_coordinate(rng):
    x, y, t = rng.uniform(0, 1, (3, 50))
    u1, v1 = mf.exact_velocity(x, y, t)
    u2, v2 = mf.exact_velocity(rng.uniform(0, 1, 50), y, t)
    u3, v3 = mf.exact_velocity(x, rng.uniform(0, 1, 50), t)
    assert np.array_equal(u1, u2) and np.array_equal(v1, v3)


def test_divergence_free(rng):
    worst = 0.0
    for x, y, t in rng.uniform(0, 1, (100, 3)):
        u = lambda s: float(mf.exact_velocity(s, y, t)[0])  # noqa: E731
        v = lambda s: float(mf.exact_velocity(x, s, t)[1])  # noqa: E731
        div = (u(x + H) - u(x - H) + v(y + H) - v(y - H)) / (2 * H)
        worst = max(worst, abs(div))
    assert worst <= 1e-13


@given(unit, unit)
def test_partials_against_differences(z, t):
    w, w_t, w_z, w_zz = mf.profile_partials(z, t)
    fd_t = d1(lambda s: mf.profile(z, s), t)
    fd_z = d1(lambda s: mf.profile(s, t), z)
    fd_zz = d2(lambda s: mf.profile(s, t), z)
    tol = 1e-6 if abs(z - t) > 0.05 else 1e-3
    assert rel(fd_t, w_t) <= tol
    assert rel(fd_z, w_z) <= tol
    assert rel(fd_zz, w_zz) <= tol


def test_partials_two_tier_sweep(rng):
    z, t = rng.uniform(0, 1, (2, 200))
    far = np.abs(z - t) > 0.05
    w, w_t, w_z, w_zz = mf.profile_partials(z, t)
    scale = lambda e: np.maximum(np.abs(e), 1e-2)  # noqa: E731
    for exact, fd in ((w_t, d1(lambda s: mf.profile(z, s), t)),
                      (w_z, d1(lambda s: mf.profile(s, t), z)),
                      (w_zz, d2(lambda s: mf.profile(s, t), z))):
        err = np.abs(exact - fd) / scale(exact)
        assert err[far].max() <= 1e-6
        assert err[~far].max() <= 1e-3


def test_forcing_point_check():
    x, y, t, nu = 0.3, 0.7, 0.4, 1e-3
    h = 1e-5
    u = lambda X, Y, T: mf.exact_velocity(X, Y, T)  # noqa: E731
    ut = (u(x, y, t + h)[0] - u(x, y, t - h)[0]) / (2 * h)
    uy = (u(x, y + h, t)[0] - u(x, y - h, t)[0]) / (2 * h)
    uyy = (u(x, y + h, t)[0] - 2 * u(x, y, t)[0] + u(x, y - h, t)[0]) / h**2
    vt = (u(x, y, t + h)[1] - u(x, y, t - h)[1]) / (2 * h)
    vx = (u(x + h, y, t)[1] - u(x - h, y, t)[1]) / (2 * h)
    vxx = (u(x + h, y, t)[1] - 2 * u(x, y, t)[1] + u(x - h, y, t)[1]) / h**2
    U, V = u(x, y, t)
    f1, f2 = mf.exact_forcing(x, y, t, nu)
    assert rel(f1, ut - nu * uyy + V * uy) <= 1e-5
    assert rel(f2, vt - nu * vxx + U * vx) <= 1e-5


def test_forcing_is_assembled_from_partials(rng):
    x, y, t = rng.uniform(0, 1, (3, 40))
    p = mf.velocity_partials(x, y, t)
    f1, f2 = mf.exact_forcing(x, y, t, 2e-3)
    g1 = p["u_t"] - 2e-3 * p["u_yy"] + p["v"] * p["u_y"]
    g2 = p["v_t"] - 2e-3 * p["v_xx"] + p["u"] * p["v_x"]
    assert np.array_equal(f1, g1) and np.array_equal(f2, g2)


def test_closures_match_functions():
    fv = mf.velocity_at(0.25)
    ff = mf.forcing_at(0.25, 1e-3)
    assert fv(0.1, 0.6) == mf.exact_velocity(0.1, 0.6, 0.25)
    assert ff(0.1, 0.6) == mf.exact_forcing(0.1, 0.6, 0.25)


@pytest.mark.parametrize("kw", [dict(nu=0.0), dict(nu=-1.0), dict(steepness=0.0)])
def test_params_validation(kw):
    with pytest.raises(ValueError):
        mf.BenchmarkParams(**kw)
