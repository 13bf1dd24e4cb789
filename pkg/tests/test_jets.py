import numpy as np
from numpy.testing import assert_allclose

from curv4.jets import Jet, jsqrt, jlog, jexp, seed1, seed2, value, grad1, hess2


def f_scalar(x):
    # smooth test function of 3 variables
    return jlog(1.0 + x[0] * x[0] + x[1] * x[2]) + jsqrt(2.0 + x[1] * x[1]) / (1.0 + x[2] ** 2)


def fd_grad(f, x, h=1e-6):
    g = np.zeros(len(x))
    for i in range(len(x)):
        xp = list(x); xm = list(x)
        xp[i] += h; xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def fd_hess(f, x, h=1e-4):
    n = len(x)
    H = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            xpp = list(x); xpm = list(x); xmp = list(x); xmm = list(x)
            xpp[i] += h; xpp[j] += h
            xpm[i] += h; xpm[j] -= h
            xmp[i] -= h; xmp[j] += h
            xmm[i] -= h; xmm[j] -= h
            H[i, j] = (f(xpp) - f(xpm) - f(xmp) + f(xmm)) / (4 * h * h)
    return H


def test_first_order_matches_finite_differences():
    x = [0.3, -0.7, 0.45]
    out = f_scalar(seed1(x))
    assert_allclose(value(out), f_scalar(x))
    assert_allclose(grad1(out, 3), fd_grad(f_scalar, x), rtol=1e-8, atol=1e-8)


def test_second_order_matches_finite_differences():
    x = [0.3, -0.7, 0.45]
    out = f_scalar(seed2(x))
    assert_allclose(value(out), f_scalar(x))
    assert_allclose(grad1(out, 3), fd_grad(f_scalar, x), rtol=1e-8, atol=1e-8)
    H = np.array(hess2(out, 3))
    assert_allclose(H, H.T, atol=1e-15)
    assert_allclose(H, fd_hess(f_scalar, x), rtol=1e-5, atol=1e-5)


def test_batched_coefficients():
    rng = np.random.default_rng(0)
    pts = rng.uniform(-0.8, 0.8, size=(50, 3))
    out = f_scalar(seed2([pts[:, 0], pts[:, 1], pts[:, 2]]))
    vals = value(out)
    assert vals.shape == (50,)
    for n in (0, 17, 49):
        single = f_scalar(seed2(list(pts[n])))
        assert_allclose(vals[n], value(single))
        assert_allclose([g[n] for g in grad1(out, 3)], grad1(single, 3), rtol=1e-12)
        Hb = np.array(hess2(out, 3))[:, :, n]
        assert_allclose(Hb, np.array(hess2(single, 3)), rtol=1e-12)


def test_triple_nesting_third_derivative():
    # d^3/dx^3 of x**5 at x=1.3 is 60 x^2
    x0 = 1.3
    x = Jet(Jet(Jet(x0, (1.0,)), (1.0,)), (1.0,))
    out = x ** 5
    third = out.d[0].d[0].d[0]
    assert_allclose(value(third), 60 * x0 ** 2, rtol=1e-12)


def test_division_and_rops():
    x = seed1([2.0])[0]
    y = 3.0 / (1.0 + x)
    assert_allclose(y.f, 1.0)
    assert_allclose(y.d[0], -3.0 / 9.0)
    z = (1.0 - x) * (x - 0.5) - x / 2.0
    assert_allclose(z.f, (1 - 2) * (2 - 0.5) - 1.0)
    w = jexp(x * 0.0)
    assert_allclose(value(w), 1.0)
