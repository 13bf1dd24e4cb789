import numpy as np
from numpy.testing import assert_allclose
import pytest

from curv4.errors import MetricConstructionError, SpecParseError
from curv4.jets import seed1, value
from curv4.metrics import (
    QuadSpec, flat_space, fubini_study, hessian_metric, ht_metric,
    kaehler_residuals, parse_metric_spec, product_spheres, round_sphere4,
    twisted_eps_max, twisted_metric, volume,
)

RNG = np.random.default_rng(42)


def builtin_fields():
    return [flat_space(), round_sphere4(1.0), product_spheres(1.0, 1.0),
            ht_metric(0.7), twisted_metric(0.3, 0.01), fubini_study()]


# ---------------------------------------------------------------- derivatives

def fd_deriv1(m, chart, p, h):
    out = np.zeros((4, 4, 4))
    for k in range(4):
        pp, pm = p.copy(), p.copy()
        pp[k] += h
        pm[k] -= h
        out[k] = (m.eval(chart, pp) - m.eval(chart, pm)) / (2 * h)
    return out


def fd_deriv2(m, chart, p, h):
    out = np.zeros((4, 4, 4, 4))
    for l in range(4):
        pp, pm = p.copy(), p.copy()
        pp[l] += h
        pm[l] -= h
        out[l] = (fd_deriv1(m, chart, pp, h) - fd_deriv1(m, chart, pm, h)) / (2 * h)
    return out


@pytest.mark.parametrize("m", builtin_fields(), ids=lambda m: m.name)
def test_derivatives_match_central_differences(m):
    # O(h^2) truncation: the error must fall by ~100 from h=1e-4 to h=1e-5
    rng = np.random.default_rng(7)
    for chart, pts in m.sample_points(rng, 2):
        for p in pts:
            g, dg, d2g = m.jets(chart, p)
            assert_allclose(g, m.eval(chart, p), atol=1e-14)
            scale = max(1.0, np.abs(dg).max())
            e1 = np.abs(dg - fd_deriv1(m, chart, p, 1e-4)).max() / scale
            e2 = np.abs(dg - fd_deriv1(m, chart, p, 1e-5)).max() / scale
            assert e1 < 5e-7
            assert e2 < 5e-9 or e1 / max(e2, 1e-16) > 20
            s2 = max(1.0, np.abs(d2g).max())
            err2 = np.abs(d2g - fd_deriv2(m, chart, p, 1e-4)).max() / s2
            assert err2 < 1e-5


@pytest.mark.parametrize("m", builtin_fields()[1:], ids=lambda m: m.name)
def test_chart_overlap_consistency(m):
    # pull back the metric through every declared transition at random
    # overlap points; agreement to 1e-8
    rng = np.random.default_rng(11)
    for src in m.chart_order:
        chart = m.charts[src]
        for dst, fmap in chart.transitions.items():
            # overlap annulus 0.5 < |z| < 2 on the flipped coordinates
            n = 100
            pts = chart.sample(rng, n)
            if m.name in ("round4",):
                r = rng.uniform(0.6, 1.9, n)
                pts = pts / np.linalg.norm(pts, axis=1)[:, None] * r[:, None]
            else:
                for pair in ((0, 1), (2, 3)):
                    r = rng.uniform(0.6, 1.9, n)
                    cur = np.hypot(pts[:, pair[0]], pts[:, pair[1]])
                    for i in pair:
                        pts[:, i] *= r / cur
            x = [pts[:, i] for i in range(4)]
            ximg = fmap(seed1(x))
            img = np.stack([value(c) for c in ximg], axis=-1)
            Jac = np.empty((n, 4, 4))
            for i in range(4):
                for k in range(4):
                    d = ximg[i].d[k]
                    Jac[:, i, k] = value(d) * np.ones(n)
            g_src = m.eval(src, pts)
            g_dst = m.eval(dst, img)
            pulled = np.einsum("nij,nik,njl->nkl", g_dst, Jac, Jac)
            assert np.abs(pulled - g_src).max() < 1e-8


def test_transition_involution():
    m = product_spheres(1.0, 2.0)
    rng = np.random.default_rng(3)
    pts = m.charts["aa"].sample(rng, 20) + np.array([0.5, 0, 0.5, 0])
    there = m.transition("aa", "ba", pts)
    back = m.transition("ba", "aa", there)
    assert_allclose(back, pts, atol=1e-12)


# ---------------------------------------------------------------- round S4

def test_round_sphere_values():
    m = round_sphere4(1.0)
    assert m.eval("n", np.zeros(4))[0, 0] == 4.0
    with pytest.raises(MetricConstructionError):
        round_sphere4(-1.0)


def test_round_sphere_volume():
    v = volume(round_sphere4(1.0), QuadSpec(48))
    assert abs(v - 8 * np.pi ** 2 / 3) / (8 * np.pi ** 2 / 3) < 1e-3


# ---------------------------------------------------------------- products

def test_product_volume():
    v = volume(product_spheres(1.0, 2.0), QuadSpec(48))
    expect = (4 * np.pi) * (16 * np.pi)
    assert abs(v - expect) / expect < 1e-3


def test_ht_family_parameters():
    with pytest.raises(MetricConstructionError):
        ht_metric(1.5)
    m0 = ht_metric(0.0)
    mp = product_spheres(1.0, 1.0)
    rng = np.random.default_rng(5)
    for chart, pts in m0.sample_points(rng, 10):
        assert_allclose(m0.eval(chart, pts), mp.eval(chart, pts), atol=1e-15)


def test_ht_volume_constant_16pi2():
    for t in (0.0, 0.5, 1.0):
        v = volume(ht_metric(t), QuadSpec(48))
        assert abs(v - 16 * np.pi ** 2) / (16 * np.pi ** 2) < 1e-3


# ---------------------------------------------------------------- twisted

def test_twisted_eps0_equals_ht():
    mt = twisted_metric(0.4, 0.0)
    mh = ht_metric(0.4)
    rng = np.random.default_rng(9)
    for chart, pts in mt.sample_points(rng, 250):
        assert np.abs(mt.eval(chart, pts) - mh.eval(chart, pts)).max() < 1e-10


def test_twisted_volume_16pi2():
    emax = twisted_eps_max(0.5)
    m = twisted_metric(0.5, emax / 2)
    v = volume(m, QuadSpec(48))
    assert abs(v - 16 * np.pi ** 2) / (16 * np.pi ** 2) < 1e-3


def test_twisted_rejects_large_eps():
    emax = twisted_eps_max(0.2)
    assert emax > 0
    with pytest.raises(MetricConstructionError):
        twisted_metric(0.2, 2.0 * emax)


def test_twisted_is_potential_hessian_of_full_potential():
    # the closed-form base + eps * perturbation equals the nested-dual
    # Hessian metric of the assembled potential
    m = twisted_metric(0.3, 0.008)
    rng = np.random.default_rng(13)
    for chart, pts in m.sample_points(rng, 5):
        x = [pts[:, i] for i in range(4)]
        rows = hessian_metric(m.kaehler.potential, chart, x)
        direct = m.eval(chart, pts)
        for i in range(4):
            for j in range(4):
                assert_allclose(np.asarray(rows[i][j], dtype=float) * np.ones(len(pts)),
                                direct[:, i, j], atol=1e-11)


# ---------------------------------------------------------------- Kahler

def test_kaehler_residuals_builtins():
    for m in (product_spheres(1.0, 1.0), fubini_study(), twisted_metric(0.6, 0.005)):
        res = kaehler_residuals(m)
        assert res["j_squared"] < 1e-12
        assert res["compatibility"] < 1e-10
        assert res["nabla_j"] < 1e-6


def test_kaehler_residuals_requires_structure():
    with pytest.raises(MetricConstructionError):
        kaehler_residuals(round_sphere4(1.0))


def test_fubini_study_volume():
    # lines have area pi at this normalization, so vol = pi^2/2
    v = volume(fubini_study(), QuadSpec(48))
    assert abs(v - np.pi ** 2 / 2) / (np.pi ** 2 / 2) < 1e-3


# ---------------------------------------------------------------- quadrature

def test_volume_stable_under_doubling():
    for m in (round_sphere4(1.0), product_spheres(1.0, 1.0), ht_metric(0.8),
              twisted_metric(0.4, 0.01), fubini_study()):
        v1 = volume(m, QuadSpec(48))
        v2 = volume(m, QuadSpec(96))
        assert abs(v1 - v2) / abs(v2) < 1e-3


def test_quadspec_minimum():
    with pytest.raises(ValueError):
        QuadSpec(4)


# ---------------------------------------------------------------- grammar

def test_parse_metric_spec():
    assert parse_metric_spec("round4(r=2)").params["r"] == 2.0
    assert parse_metric_spec("product(a=1,b=1)").name == "product"
    assert parse_metric_spec("fubini-study").name == "fubini-study"
    m = parse_metric_spec("twisted(t=0.5,eps=0.001,phi=height-product)")
    assert m.params["eps"] == 0.001
    for bad in ("nope", "round4(r=x)", "ht()", "round4(r=1"):
        with pytest.raises(SpecParseError):
            parse_metric_spec(bad)
