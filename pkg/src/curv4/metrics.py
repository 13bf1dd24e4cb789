"""Chart atlases and analytic metric fields for the model 4-manifolds.

Built-ins: flat space, the round 4-sphere, products of round 2-spheres,
the volume-normalized squashed product family, its potential-twisted
Kahler deformations, and Fubini-Study CP^2.

Every metric is a closed-form expression over a generic scalar ring, so
exact first and second derivatives come from nested dual numbers
(curv4.jets); central finite differences are used only as a cross check
in the test suite.

Conventions
-----------
* All charts are positively oriented; stereographic pairs are glued by the
  holomorphic inversion z -> 1/z (realized on real coordinates), so that
  per-chart Kahler potentials differ by pluriharmonic terms only.
* A potential Phi produces the metric g = 2 Re(d^2 Phi / dz_a dzbar_b),
  i.e. a round 2-sphere of radius r is the potential 2 r^2 log(1+|z|^2)
  with line element 4 r^2 |dz|^2 / (1+|z|^2)^2.
"""

import itertools

import numpy as np

from .errors import ChartDomainError, MetricConstructionError, SpecParseError
from .jets import Jet, jlog, seed2

CHART_MARGIN = 0.1

# coordinate layout on product-type charts: (x1, y1, x2, y2), complex
# coordinates z_a = x_a + i y_a
_RE = (0, 2)
_IM = (1, 3)


class Chart:
    """A coordinate chart: open ball |x| < radius (or a box) in R^4.

    ``sample_box`` is the closed sub-box used for random sampling and grid
    scans; it keeps at least CHART_MARGIN away from the domain boundary.
    """

    def __init__(self, name, radius=None, box=None, factor_radius=None,
                 sample_box=1.0):
        self.name = name
        self.radius = radius
        self.box = None if box is None else float(box)
        self.factor_radius = factor_radius
        if np.isscalar(sample_box):
            sample_box = [(-sample_box, sample_box)] * 4
        self.sample_box = np.asarray(sample_box, dtype=float)
        self.transitions = {}  # target chart name -> ring-generic map

    def contains(self, pts, margin=CHART_MARGIN):
        pts = np.asarray(pts, dtype=float)
        ok = np.ones(pts.shape[:-1], dtype=bool)
        if self.radius is not None:
            ok &= np.linalg.norm(pts, axis=-1) < self.radius - margin
        if self.box is not None:
            ok &= np.all(np.abs(pts) < self.box - margin, axis=-1)
        if self.factor_radius is not None:
            ok &= np.hypot(pts[..., 0], pts[..., 1]) < self.factor_radius - margin
            ok &= np.hypot(pts[..., 2], pts[..., 3]) < self.factor_radius - margin
        return ok

    def grid(self, n):
        axes = [np.linspace(lo, hi, n) for lo, hi in self.sample_box]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 4)
        return pts

    def sample(self, rng, n):
        lo = self.sample_box[:, 0]
        hi = self.sample_box[:, 1]
        return rng.uniform(lo, hi, size=(n, 4))


class KaehlerStructure:
    """Almost complex structure + per-chart potential of a Kahler built-in.

    J is ring-generic: J(chart, x) -> 4x4 nested list (columns J(e_j)).
    """

    def __init__(self, jfun, potential=None):
        self.jfun = jfun
        self.potential = potential

    def matrix(self, chart, pts):
        pts = np.asarray(pts, dtype=float)
        one = np.ones(pts.shape[:-1])
        rows = self.jfun(chart, [pts[..., i] for i in range(4)])
        out = np.empty(pts.shape[:-1] + (4, 4))
        for i in range(4):
            for j in range(4):
                out[..., i, j] = np.asarray(rows[i][j], dtype=float) * one
        return out


def _as_batch(pts):
    pts = np.asarray(pts, dtype=float)
    single = pts.ndim == 1
    if single:
        pts = pts[None, :]
    return pts, single


def _extract_d(entry, k):
    """k-th partial coefficient of a jet (constants differentiate to 0)."""
    return entry.d[k] if isinstance(entry, Jet) else 0.0


def _ring_float(entry, shape):
    v = entry
    while isinstance(v, Jet):
        v = v.f
    a = np.asarray(v, dtype=float)
    if a.shape != shape:
        a = np.broadcast_to(a, shape)
    return a


class MetricField:
    """A smooth metric on an atlas, with exact derivatives to second order.

    comps(chart_name, x) returns the 4x4 symmetric matrix of components as
    a nested list over the scalar ring of x.
    """

    def __init__(self, name, charts, comps, params=None, kaehler=None,
                 regions=None, validate=True):
        self.name = name
        self.params = dict(params or {})
        self.charts = {c.name: c for c in charts}
        self.chart_order = [c.name for c in charts]
        self._comps = comps
        self.kaehler = kaehler
        self.regions = regions or []
        if validate:
            self._validate()

    @property
    def is_kaehler(self):
        return self.kaehler is not None

    def comps_ring(self, chart, x):
        """Metric components over an arbitrary scalar ring (jets allowed)."""
        return self._comps(chart, x)

    def eval(self, chart, pts):
        pts, single = _as_batch(pts)
        shape = pts.shape[:-1]
        rows = self._comps(chart, [pts[:, i] for i in range(4)])
        g = np.empty(shape + (4, 4))
        for i in range(4):
            for j in range(4):
                g[..., i, j] = _ring_float(rows[i][j], shape)
        return g[0] if single else g

    def jets(self, chart, pts):
        """(g, dg, d2g) with dg[...,k,i,j] = d_k g_ij, d2g[...,l,k,i,j]."""
        pts, single = _as_batch(pts)
        shape = pts.shape[:-1]
        x = seed2([pts[:, i] for i in range(4)])
        rows = self._comps(chart, x)
        g = np.empty(shape + (4, 4))
        dg = np.zeros(shape + (4, 4, 4))
        d2g = np.zeros(shape + (4, 4, 4, 4))
        for i in range(4):
            for j in range(4):
                ent = rows[i][j]
                g[..., i, j] = _ring_float(ent, shape)
                if not isinstance(ent, Jet):
                    continue
                for k in range(4):
                    dk = ent.d[k]
                    dg[..., k, i, j] = _ring_float(dk, shape)
                    if isinstance(dk, Jet):
                        for l in range(4):
                            d2g[..., l, k, i, j] = _ring_float(dk.d[l], shape)
        if single:
            return g[0], dg[0], d2g[0]
        return g, dg, d2g

    def deriv1(self, chart, pts):
        return self.jets(chart, pts)[1]

    def deriv2(self, chart, pts):
        return self.jets(chart, pts)[2]

    def require_inside(self, chart, pts, margin=CHART_MARGIN):
        ok = self.charts[chart].contains(pts, margin)
        if not np.all(ok):
            raise ChartDomainError(
                "%s: point outside chart %r domain" % (self.name, chart))

    def sample_points(self, rng, n_per_chart):
        return [(name, self.charts[name].sample(rng, n_per_chart))
                for name in self.chart_order]

    def grid_points(self, n):
        return [(name, self.charts[name].grid(n)) for name in self.chart_order]

    def transition(self, src, dst, pts):
        """Map points from chart src to chart dst (plain values)."""
        fmap = self.charts[src].transitions[dst]
        pts, single = _as_batch(pts)
        out = fmap([pts[:, i] for i in range(4)])
        res = np.stack([np.asarray(c, dtype=float) for c in out], axis=-1)
        return res[0] if single else res

    def _validate(self):
        for name in self.chart_order:
            pts = self.charts[name].grid(5)
            g = self.eval(name, pts)
            if not np.allclose(g, np.swapaxes(g, -1, -2), atol=1e-12):
                raise MetricConstructionError(
                    "%s: asymmetric components on chart %r" % (self.name, name))
            w = np.linalg.eigvalsh(g)
            if w.min() <= 1e-10:
                raise MetricConstructionError(
                    "%s: metric not positive definite on chart %r "
                    "(min eigenvalue %.3e)" % (self.name, name, w.min()))


# ---------------------------------------------------------------------
# ring-generic building blocks

def _zeros4():
    return [[0.0] * 4 for _ in range(4)]


def _sq_norm(x, idx):
    s = 0.0
    for i in idx:
        s = s + x[i] * x[i]
    return s


def _inversion2(x, y):
    """Real form of the holomorphic chart flip z -> 1/z."""
    r2 = x * x + y * y
    return x / r2, -(y / r2)


def hessian_metric(potential, chart, x):
    """Metric components of a Kahler potential, g = 2 Re(ddbar Phi).

    Works over any scalar ring: the potential is evaluated with two extra
    nested dual layers seeded on the incoming coordinates.
    """
    X = seed2(x)
    F = potential(chart, X)
    H = [[_extract_d(_extract_d(F, a), b) for b in range(4)] for a in range(4)]
    g = _zeros4()
    for a in range(2):
        for b in range(2):
            xa, ya = _RE[a], _IM[a]
            xb, yb = _RE[b], _IM[b]
            P = H[xa][xb] + H[ya][yb]
            Q = H[xa][yb] - H[ya][xb]
            g[xa][xb] = 0.5 * P
            g[ya][yb] = 0.5 * P
            g[xa][yb] = 0.5 * Q
            g[yb][xa] = 0.5 * Q
            g[ya][xb] = -0.5 * Q
            g[xb][ya] = -0.5 * Q
    return g


_J_STANDARD = [[0.0, -1.0, 0.0, 0.0],
               [1.0, 0.0, 0.0, 0.0],
               [0.0, 0.0, 0.0, -1.0],
               [0.0, 0.0, 1.0, 0.0]]


def _j_standard(chart, x):
    return [row[:] for row in _J_STANDARD]


# ---------------------------------------------------------------------
# quadrature

class QuadSpec:
    """Single-knob quadrature resolution (Gauss-Legendre node count)."""

    MIN_N = 8

    def __init__(self, n=48):
        if n < self.MIN_N:
            raise ValueError("quadrature resolution must be >= %d" % self.MIN_N)
        self.n = int(n)


def _gl(n, a, b):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


def sphere_chart_nodes(n):
    """Quadrature for one round-sphere factor, split across its two charts.

    Gauss-Legendre in cos(theta) x uniform phi; returns
    [(hemisphere_id, u (N,2), w (N,))] where w includes the Jacobian of the
    (c, phi) -> chart-coordinate substitution, so sum w * sqrt(det g2)
    integrates the factor area.
    """
    c, wc = _gl(n, -1.0, 1.0)
    nphi = 2 * n
    phi = (np.arange(nphi) + 0.5) * (2 * np.pi / nphi)
    wphi = 2 * np.pi / nphi
    out = []
    for hemi, sel in (("a", c > 0), ("b", c < 0)):
        ch = c[sel] if hemi == "a" else -c[sel]
        C, PH = np.meshgrid(ch, phi, indexing="ij")
        R = np.sqrt((1 - C) / (1 + C))
        sgn = 1.0 if hemi == "a" else -1.0
        u = np.stack([R * np.cos(PH), sgn * R * np.sin(PH)], axis=-1).reshape(-1, 2)
        jac = 1.0 / (1 + C) ** 2
        w = (wc[sel][:, None] * wphi * jac).reshape(-1)
        out.append((hemi, u, w))
    return out


def _vol_n(spec):
    # volume integrands are smooth; a quarter of the surface resolution is
    # already far inside the 0.1% budget
    return max(QuadSpec.MIN_N, spec.n // 4)


class ProductS2Region:
    """Volume nodes for product-of-spheres charts named 'ab' etc."""

    def nodes(self, spec):
        per_factor = sphere_chart_nodes(_vol_n(spec))
        for (h1, u1, w1), (h2, u2, w2) in itertools.product(per_factor, per_factor):
            pts = np.concatenate([
                np.repeat(u1, len(u2), axis=0),
                np.tile(u2, (len(u1), 1)),
            ], axis=1)
            w = (w1[:, None] * w2[None, :]).reshape(-1)
            yield h1 + h2, pts, w


class Ball4Region:
    """Volume nodes for two-chart stereographic atlases of S^4."""

    def nodes(self, spec):
        n = _vol_n(spec)
        r, wr = _gl(n, 0.0, 1.0)
        psi, wpsi = _gl(n, 0.0, np.pi)
        c, wc = _gl(n, -1.0, 1.0)
        nphi = 2 * n
        phi = (np.arange(nphi) + 0.5) * (2 * np.pi / nphi)
        wphi = 2 * np.pi / nphi
        R, PS, C, PH = np.meshgrid(r, psi, c, phi, indexing="ij")
        s = np.sqrt(1 - C ** 2)
        pts = np.stack([
            R * np.cos(PS),
            R * np.sin(PS) * C,
            R * np.sin(PS) * s * np.cos(PH),
            R * np.sin(PS) * s * np.sin(PH),
        ], axis=-1).reshape(-1, 4)
        W = (wr[:, None, None, None] * wpsi[None, :, None, None]
             * wc[None, None, :, None] * wphi)
        w = (W * R ** 3 * np.sin(PS) ** 2).reshape(-1)
        for chart in ("n", "s"):
            yield chart, pts, w


class CP2Region:
    """Volume nodes for CP^2 through the dense affine chart u0."""

    def nodes(self, spec):
        n = 2 * _vol_n(spec)
        chi, wchi = _gl(n, 0.0, np.pi / 2)
        nphi = 2 * _vol_n(spec)
        phi = (np.arange(nphi) + 0.5) * (2 * np.pi / nphi)
        wphi = 2 * np.pi / nphi
        C1, P1, C2, P2 = np.meshgrid(chi, phi, chi, phi, indexing="ij")
        t1, t2 = np.tan(C1), np.tan(C2)
        pts = np.stack([t1 * np.cos(P1), t1 * np.sin(P1),
                        t2 * np.cos(P2), t2 * np.sin(P2)], axis=-1).reshape(-1, 4)
        jac = (t1 / np.cos(C1) ** 2) * (t2 / np.cos(C2) ** 2)
        W = wchi[:, None, None, None] * wphi * wchi[None, None, :, None] * wphi
        w = (W * jac).reshape(-1)
        yield "u0", pts, w


class BoxRegion:
    """Volume nodes over a coordinate box of a flat single-chart field."""

    def __init__(self, chart, half_width):
        self.chart = chart
        self.h = float(half_width)

    def nodes(self, spec):
        n = max(QuadSpec.MIN_N, spec.n // 4)
        x, w = _gl(n, -self.h, self.h)
        grids = np.meshgrid(*([x] * 4), indexing="ij")
        pts = np.stack(grids, axis=-1).reshape(-1, 4)
        W = w[:, None, None, None] * w[None, :, None, None] \
            * w[None, None, :, None] * w[None, None, None, :]
        yield self.chart, pts, W.reshape(-1)


def volume(m, quad=None):
    """Integral of sqrt(det g) over the atlas partition of the field."""
    quad = quad or QuadSpec()
    total = 0.0
    for region in m.regions:
        for chart, pts, w in region.nodes(quad):
            g = m.eval(chart, pts)
            total += float(np.sum(w * np.sqrt(np.linalg.det(g))))
    return total


# ---------------------------------------------------------------------
# built-in metric fields

def _stereo_pair_charts_s4():
    cn = Chart("n", radius=2.5, sample_box=1.1)
    cs = Chart("s", radius=2.5, sample_box=1.1)

    def flip4(x):
        r2 = _sq_norm(x, range(4))
        return [x[0] / r2, x[1] / r2, x[2] / r2, -(x[3] / r2)]

    cn.transitions["s"] = flip4
    cs.transitions["n"] = flip4
    return [cn, cs]


def flat_space(half_width=4.0):
    """Euclidean R^4 on a single box chart (identity test metric)."""
    chart = Chart("e", box=half_width, sample_box=half_width / 4)

    def comps(name, x):
        g = _zeros4()
        for i in range(4):
            g[i][i] = 1.0 + 0.0 * x[0]
        return g

    return MetricField("flat", [chart], comps,
                       regions=[BoxRegion("e", half_width / 4)])


def round_sphere4(radius):
    """Round 4-sphere of the given radius on two stereographic charts."""
    if radius <= 0:
        raise MetricConstructionError("round_sphere4: radius must be positive")
    r2 = 4.0 * radius * radius

    def comps(name, x):
        q = 1.0 + _sq_norm(x, range(4))
        c = r2 / (q * q)
        g = _zeros4()
        for i in range(4):
            g[i][i] = c
        return g

    return MetricField("round4", _stereo_pair_charts_s4(), comps,
                       params={"r": radius}, regions=[Ball4Region()])


def _product_charts():
    charts = {}
    for h1 in "ab":
        for h2 in "ab":
            charts[h1 + h2] = Chart(h1 + h2, factor_radius=2.5, sample_box=1.1)

    def flip1(x):
        u, v = _inversion2(x[0], x[1])
        return [u, v, x[2], x[3]]

    def flip2(x):
        u, v = _inversion2(x[2], x[3])
        return [x[0], x[1], u, v]

    for h1 in "ab":
        for h2 in "ab":
            name = h1 + h2
            charts[name].transitions[("b" if h1 == "a" else "a") + h2] = flip1
            charts[name].transitions[h1 + ("b" if h2 == "a" else "a")] = flip2
    return [charts[k] for k in ("aa", "ab", "ba", "bb")]


def _product_potential(a2, b2):
    def potential(name, x):
        return (2.0 * a2 * jlog(1.0 + _sq_norm(x, (0, 1)))
                + 2.0 * b2 * jlog(1.0 + _sq_norm(x, (2, 3))))
    return potential


def product_spheres(a, b):
    """S^2(a) x S^2(b) with the product round metric, four-chart atlas."""
    if a <= 0 or b <= 0:
        raise MetricConstructionError("product_spheres: radii must be positive")
    fa, fb = 4.0 * a * a, 4.0 * b * b

    def comps(name, x):
        q1 = 1.0 + _sq_norm(x, (0, 1))
        q2 = 1.0 + _sq_norm(x, (2, 3))
        c1 = fa / (q1 * q1)
        c2 = fb / (q2 * q2)
        g = _zeros4()
        g[0][0] = g[1][1] = c1
        g[2][2] = g[3][3] = c2
        return g

    kae = KaehlerStructure(_j_standard, potential=_product_potential(a * a, b * b))
    return MetricField("product", _product_charts(), comps,
                       params={"a": a, "b": b}, kaehler=kae,
                       regions=[ProductS2Region()])


def ht_metric(t):
    """Volume-preserving squashed product: factors scaled by (1 - t^2/4)^{+-1}."""
    if not 0.0 <= t <= 1.0:
        raise MetricConstructionError("ht_metric: t must lie in [0, 1]")
    lam = 1.0 - t * t / 4.0
    m = product_spheres(np.sqrt(lam), 1.0 / np.sqrt(lam))
    m.name = "ht"
    m.params = {"t": t}
    return m


# built-in global perturbation potentials for the twisted family
def _phi_height_product(name, x):
    """(|z1|^2/(1+|z1|^2)) * (|z2|^2/(1+|z2|^2)), smooth on S^2 x S^2.

    Expressed per chart: on a 'b' factor chart the first fraction becomes
    1/(1+|w|^2).
    """
    parts = []
    for k, idx in enumerate(((0, 1), (2, 3))):
        q = 1.0 + _sq_norm(x, idx)
        if name[k] == "a":
            parts.append(1.0 - 1.0 / q)
        else:
            parts.append(1.0 / q)
    return parts[0] * parts[1]


PERTURBATIONS = {"height-product": _phi_height_product}

_EPS_MAX_CACHE = {}


def _twisted_parts(t, phi_id):
    if phi_id not in PERTURBATIONS:
        raise MetricConstructionError("unknown perturbation potential %r" % phi_id)
    base = ht_metric(t)
    phi = PERTURBATIONS[phi_id]

    def dg_comps(name, x):
        return hessian_metric(phi, name, x)

    return base, dg_comps


def _stack_validation(base, dg_comps, grid_n):
    Gs, Ps = [], []
    for name in base.chart_order:
        pts = np.stack(np.meshgrid(
            *[np.linspace(-1, 1, grid_n)] * 4, indexing="ij"), axis=-1).reshape(-1, 4)
        G = base.eval(name, pts)
        rows = dg_comps(name, [pts[:, i] for i in range(4)])
        P = np.empty_like(G)
        for i in range(4):
            for j in range(4):
                P[:, i, j] = _ring_float(rows[i][j], (len(pts),))
        Gs.append(G)
        Ps.append(P)
    return np.concatenate(Gs), np.concatenate(Ps)


def twisted_eps_max(t, phi_id="height-product", grid_n=16):
    """Largest eps keeping min eig(g) above 1e-3 of its eps=0 floor.

    Determined by bisection on a validation grid spanning all four charts;
    cached per (t, phi_id, grid_n).
    """
    key = (round(float(t), 12), phi_id, grid_n)
    if key in _EPS_MAX_CACHE:
        return _EPS_MAX_CACHE[key]
    base, dg_comps = _twisted_parts(t, phi_id)
    G, P = _stack_validation(base, dg_comps, grid_n)
    floor = 1e-3 * np.linalg.eigvalsh(G)[:, 0].min()
    shifted = G - floor * np.eye(4)

    def ok(eps):
        # min eig > floor  <=>  G + eps P - floor I admits a Cholesky factor
        try:
            np.linalg.cholesky(shifted + eps * P)
            return True
        except np.linalg.LinAlgError:
            return False

    hi = 1.0
    for _ in range(24):
        if not ok(hi):
            break
        hi *= 2.0
    else:
        raise MetricConstructionError("twisted_eps_max: no upper bracket found")
    lo = 0.0
    for _ in range(32):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    _EPS_MAX_CACHE[key] = lo
    return lo


def twisted_metric(t, eps, phi_id="height-product", grid_n=16):
    """Kahler deformation g = h_t + eps * (2 Re ddbar phi) on S^2 x S^2."""
    base, dg_comps = _twisted_parts(t, phi_id)
    emax = twisted_eps_max(t, phi_id, grid_n)
    if abs(eps) > emax:
        raise MetricConstructionError(
            "twisted_metric: |eps|=%.4g exceeds eps_max(t=%.3g)=%.4g "
            "(metric loses positive definiteness)" % (abs(eps), t, emax))
    base_comps = base._comps
    phi = PERTURBATIONS[phi_id]

    def comps(name, x):
        g = base_comps(name, x)
        if eps == 0.0:
            return g
        dg = dg_comps(name, x)
        return [[g[i][j] + eps * dg[i][j] for j in range(4)] for i in range(4)]

    lam = 1.0 - t * t / 4.0
    base_pot = _product_potential(lam, 1.0 / lam)

    def potential(name, x):
        return base_pot(name, x) + eps * phi(name, x)

    kae = KaehlerStructure(_j_standard, potential=potential)
    m = MetricField("twisted", _product_charts(), comps,
                    params={"t": t, "eps": eps, "phi": phi_id}, kaehler=kae,
                    regions=[ProductS2Region()])
    m.eps_max = emax
    return m


def _cp2_charts():
    names = ["u0", "u1", "u2"]
    charts = {n: Chart(n, radius=None, sample_box=1.0) for n in names}

    # transitions of the standard affine atlas, realized on real coordinates:
    # from chart i with coords (z1, z2), chart met by dividing through z1 is
    # (1/z1, z2/z1), by z2 is (z1/z2, 1/z2).
    def div_first(x):
        r2 = _sq_norm(x, (0, 1))
        w1r, w1i = x[0] / r2, -(x[1] / r2)
        w2r = (x[2] * x[0] + x[3] * x[1]) / r2
        w2i = (x[3] * x[0] - x[2] * x[1]) / r2
        return [w1r, w1i, w2r, w2i]

    def div_second(x):
        r2 = _sq_norm(x, (2, 3))
        w1r = (x[0] * x[2] + x[1] * x[3]) / r2
        w1i = (x[1] * x[2] - x[0] * x[3]) / r2
        return [w1r, w1i, x[2] / r2, -(x[3] / r2)]

    # chart gluing of [1:z1:z2]: u0 -> u1 swaps the roles so that in u1 the
    # homogeneous form is [w1:1:w2] with w1 = 1/z1, w2 = z2/z1.
    charts["u0"].transitions["u1"] = div_first
    charts["u1"].transitions["u0"] = div_first
    charts["u0"].transitions["u2"] = div_second
    charts["u2"].transitions["u0"] = div_second
    charts["u1"].transitions["u2"] = lambda x: div_second(div_first(x))
    charts["u2"].transitions["u1"] = lambda x: div_first(div_second(x))
    return [charts[n] for n in names]


FS_SCALE = 0.5  # potential prefactor fixing holomorphic sectional curvature 4


def fubini_study():
    """Fubini-Study CP^2 normalized to holomorphic sectional curvature 4.

    Three affine charts with potential FS_SCALE * log(1 + |z1|^2 + |z2|^2);
    at this normalization s = 24, Ric = 6 g and lines have area pi.
    """
    k = FS_SCALE

    def comps(name, x):
        q = 1.0 + _sq_norm(x, range(4))
        g = _zeros4()
        # H_ab = k [(1+|z|^2) delta_ab - zbar_a z_b] / (1+|z|^2)^2
        for a in range(2):
            for b in range(2):
                xa, ya = _RE[a], _IM[a]
                xb, yb = _RE[b], _IM[b]
                re = -(x[xa] * x[xb] + x[ya] * x[yb])
                if a == b:
                    re = re + q
                im = -(x[xa] * x[yb] - x[ya] * x[xb])
                ree = 2.0 * k * re / (q * q)
                ime = 2.0 * k * im / (q * q)
                g[xa][xb] = ree
                g[ya][yb] = ree
                g[xa][yb] = ime
                g[yb][xa] = ime
                g[ya][xb] = -ime
                g[xb][ya] = -ime
        return g

    def potential(name, x):
        return k * jlog(1.0 + _sq_norm(x, range(4)))

    kae = KaehlerStructure(_j_standard, potential=potential)
    return MetricField("fubini-study", _cp2_charts(), comps, kaehler=kae,
                       regions=[CP2Region()])


# ---------------------------------------------------------------------
# Kahler diagnostics

def _christoffel_arrays(g, dg):
    ginv = np.linalg.inv(g)
    S = (np.einsum("...ijl->...lij", dg) + np.einsum("...jil->...lij", dg)
         - np.einsum("...lij->...lij", dg))
    return ginv, 0.5 * np.einsum("...kl,...lij->...kij", ginv, S)


def kaehler_residuals(m, grid_n=4, rng=None):
    """Max-norm residuals of J^2 + Id, g(J.,J.) - g and nabla J over a grid."""
    if not m.is_kaehler:
        raise MetricConstructionError("%s has no complex structure" % m.name)
    out = {"j_squared": 0.0, "compatibility": 0.0, "nabla_j": 0.0}
    for chart in m.chart_order:
        pts = m.charts[chart].grid(grid_n) if rng is None \
            else m.charts[chart].sample(rng, grid_n ** 4)
        g, dg, _ = m.jets(chart, pts)
        _, Gamma = _christoffel_arrays(g, dg)
        J = m.kaehler.matrix(chart, pts)
        out["j_squared"] = max(out["j_squared"], np.abs(
            np.einsum("...ij,...jk->...ik", J, J) + np.eye(4)).max())
        out["compatibility"] = max(out["compatibility"], np.abs(
            np.einsum("...ij,...ik,...jl->...kl", g, J, J) - g).max())
        # dJ = 0 for the built-ins (chart-constant J); covariant derivative
        # reduces to the bracket with the connection
        nj = (np.einsum("...ikm,...mj->...kij", Gamma, J)
              - np.einsum("...mkj,...im->...kij", Gamma, J))
        out["nabla_j"] = max(out["nabla_j"], np.abs(nj).max())
    return out


# ---------------------------------------------------------------------
# specification grammar: name(param=value,...)

def parse_metric_spec(spec):
    """Build a metric field from a CLI string like 'twisted(t=0.5,eps=0.01)'."""
    spec = spec.strip()
    if "(" in spec:
        if not spec.endswith(")"):
            raise SpecParseError("malformed metric spec %r" % spec)
        name, rest = spec.split("(", 1)
        args = {}
        body = rest[:-1].strip()
        if body:
            for item in body.split(","):
                if "=" not in item:
                    raise SpecParseError("malformed parameter %r in %r" % (item, spec))
                key, val = item.split("=", 1)
                args[key.strip()] = val.strip()
    else:
        name, args = spec, {}
    name = name.strip()

    def fnum(key, default=None):
        if key not in args:
            if default is None:
                raise SpecParseError("metric %r needs parameter %r" % (name, key))
            return default
        try:
            return float(args[key])
        except ValueError:
            raise SpecParseError("parameter %s=%r is not a number" % (key, args[key]))

    if name == "flat":
        return flat_space()
    if name == "round4":
        return round_sphere4(fnum("r", 1.0))
    if name == "product":
        return product_spheres(fnum("a", 1.0), fnum("b", 1.0))
    if name == "ht":
        return ht_metric(fnum("t"))
    if name == "twisted":
        return twisted_metric(fnum("t"), fnum("eps"),
                              args.get("phi", "height-product"))
    if name in ("fubini-study", "fs"):
        return fubini_study()
    raise SpecParseError("unknown metric %r" % name)
