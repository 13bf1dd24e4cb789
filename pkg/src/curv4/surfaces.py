"""Immersed 2-spheres in a 4-manifold: induced geometry, second fundamental
form, normal connection, the normal-bundle curvature, and the pointwise
second-variation integrands.

Surfaces are parametrized by the two-chart stereographic atlas of S^2
(charts 'a' and 'b', glued by the holomorphic inversion), each surface
chart landing in a single ambient chart.  All per-node geometry is computed
with nested dual numbers: the immersion is evaluated three jet layers deep,
which yields the frame derivatives needed for the intrinsic normal-bundle
curvature.

Adapted frames use the deterministic recipe: e1, e2 from Gram-Schmidt of
the coordinate tangent vectors, n3, n4 from Gram-Schmidt of two fixed
ambient coordinate directions, with n4 flipped where needed so that
(e1, e2, n3, n4) is positively oriented in M.  The tangent rotation I and
the normal rotation J are the +90-degree turns in these oriented planes.
"""

import re

import numpy as np

from . import bivector as bv
from .curvature import curvature_from_arrays
from .errors import NonMinimalSurfaceError, SectionError
from .jets import Jet, jlog, jsqrt, seedn
from .metrics import QuadSpec, sphere_chart_nodes

TOL_MIN = 1e-8  # minimality threshold on the mean curvature vector


# ---------------------------------------------------------------------
# jet plumbing

def _jval(x):
    while isinstance(x, Jet):
        x = x.f
    return x


def _jd(x, a):
    """Partial coefficient a (one layer down); constants give 0."""
    return x.d[a] if isinstance(x, Jet) else 0.0


def _arr(x, shape):
    v = np.asarray(_jval(x), dtype=float)
    return np.broadcast_to(v, shape) if v.shape != shape else v


def _dot(g, u, v):
    """<u, v> with a 4x4 metric, all entries in a common jet ring."""
    acc = 0.0
    for i in range(4):
        gi = g[i]
        ui = u[i]
        for j in range(4):
            acc = acc + gi[j] * ui * v[j]
    return acc


def _axpy(a, x, y):
    return [y[i] + a * x[i] for i in range(4)]


def _scale(a, x):
    return [a * x[i] for i in range(4)]


def _jet1_of(x):
    """First-order view of a deeper jet (drop the outermost layer)."""
    return x.f if isinstance(x, Jet) else x


# ---------------------------------------------------------------------
# real embedding functions of S^2, per chart (rational expressions)

def sphere_functions(chart, u):
    """The R^3 embedding components (N1, N2, N3) as chart expressions."""
    x, y = u[0], u[1]
    q = 1.0 + x * x + y * y
    if chart == "a":
        return 2.0 * x / q, 2.0 * y / q, 1.0 - 2.0 / q
    # chart b: w = 1/z, i.e. z = (x - i y)/|w|^2
    return 2.0 * x / q, -(2.0 * y / q), 2.0 / q - 1.0


def _surface_transition(u):
    """Chart a -> chart b of the surface atlas (w = 1/z on real coords)."""
    r2 = u[0] * u[0] + u[1] * u[1]
    return [u[0] / r2, -(u[1] / r2)]


class SurfaceImmersion:
    """Parametrized 2-sphere inside a metric field's atlas.

    chart_map: dict chart -> ambient chart name;
    fmap(chart, u) -> list of 4 ambient coordinates over the ring of u;
    normal_seeds: ambient coordinate indices Gram-Schmidted into the
    normal frame;
    normal_generators: optional list of ambient vector fields
    gen(chart, u, F) -> 4 ring components, spanning the normal bundle
    globally (used where no global normal frame exists, e.g. c1 != 0).
    """

    def __init__(self, name, chart_map, fmap, normal_seeds=(2, 3),
                 normal_generators=None):
        self.name = name
        self.chart_map = dict(chart_map)
        self.fmap = fmap
        self.normal_seeds = tuple(normal_seeds)
        self.normal_generators = normal_generators
        self._geom_cache = {}

    def map_ring(self, chart, u):
        return self.fmap(chart, u)

    def transition(self, u):
        return _surface_transition(u)


# ---------------------------------------------------------------------
# built-in immersions

def product_slice(factor=1, point=(0.0, 0.0)):
    """The slice S^2 x {q} (or {q} x S^2) inside a product metric."""
    q0, q1 = float(point[0]), float(point[1])
    if factor == 1:
        chart_map = {"a": "aa", "b": "ba"}

        def fmap(chart, u):
            one = 1.0 + 0.0 * u[0]
            return [u[0], u[1], q0 * one, q1 * one]
        seeds = (2, 3)
    elif factor == 2:
        chart_map = {"a": "aa", "b": "ab"}

        def fmap(chart, u):
            one = 1.0 + 0.0 * u[0]
            return [q0 * one, q1 * one, u[0], u[1]]
        seeds = (0, 1)
    else:
        raise ValueError("factor must be 1 or 2")
    return SurfaceImmersion("slice", chart_map, fmap, normal_seeds=seeds)


def equator_sphere():
    """The great 2-sphere x3 = x4 = 0 inside the round S^4 atlas."""
    chart_map = {"a": "n", "b": "s"}

    def fmap(chart, u):
        z = 0.0 * u[0]
        if chart == "a":
            return [u[0], u[1], z, z]
        return [u[0], -u[1], z, z]

    return SurfaceImmersion("equator4", chart_map, fmap, normal_seeds=(2, 3))


def cp1_line():
    """The projective line z2 = 0 in CP^2 (affine charts u0, u1).

    Its normal bundle has c1 = 1, so no global orthonormal frame exists;
    sections are spanned by projections of the four global linear fields
    below (real and J-rotated forms of d/dz2 and z1 d/dz2).
    """
    chart_map = {"a": "u0", "b": "u1"}

    def fmap(chart, u):
        z = 0.0 * u[0]
        return [u[0], u[1], z, z]

    def gen_re_dz2(chart, u, F):
        one = 1.0 + 0.0 * u[0]
        if chart == "a":
            return [0.0, 0.0, one, 0.0]
        return [0.0, 0.0, F[0] * one, F[1] * one]       # w1 d/dw2

    def gen_im_dz2(chart, u, F):
        one = 1.0 + 0.0 * u[0]
        if chart == "a":
            return [0.0, 0.0, 0.0, one]
        return [0.0, 0.0, -(F[1] * one), F[0] * one]    # i w1 d/dw2

    def gen_re_z1dz2(chart, u, F):
        one = 1.0 + 0.0 * u[0]
        if chart == "a":
            return [0.0, 0.0, F[0] * one, F[1] * one]   # z1 d/dz2
        return [0.0, 0.0, one, 0.0]

    def gen_im_z1dz2(chart, u, F):
        one = 1.0 + 0.0 * u[0]
        if chart == "a":
            return [0.0, 0.0, -(F[1] * one), F[0] * one]
        return [0.0, 0.0, 0.0, one]

    return SurfaceImmersion(
        "cp1-line", chart_map, fmap, normal_seeds=(2, 3),
        normal_generators=[gen_re_dz2, gen_im_dz2, gen_re_z1dz2, gen_im_z1dz2])


def perturbed_slice(c=0.1):
    """Graphical perturbation of the product slice: z2 = c (N1 + i N2)(z1).

    Not minimal; used for cross-path identity checks only.
    """
    chart_map = {"a": "aa", "b": "ba"}

    def fmap(chart, u):
        n1, n2, _ = sphere_functions(chart, u)
        return [u[0], u[1], c * n1, c * n2]

    return SurfaceImmersion("perturbed-slice", chart_map, fmap,
                            normal_seeds=(2, 3))


def parse_surface_spec(spec):
    from .errors import SpecParseError
    spec = spec.strip()
    name, args = spec, {}
    point = (0.0, 0.0)
    if "(" in spec:
        if not spec.endswith(")"):
            raise SpecParseError("malformed surface spec %r" % spec)
        name, rest = spec.split("(", 1)
        body = rest[:-1]
        pm = re.search(r"point=\(([^)]*)\)", body)
        if pm:
            try:
                point = tuple(float(t) for t in pm.group(1).split(","))
            except ValueError:
                raise SpecParseError("malformed point in %r" % spec)
            body = body[:pm.start()] + body[pm.end():]
        for item in body.split(","):
            if not item.strip():
                continue
            if "=" not in item:
                raise SpecParseError("malformed parameter %r" % item)
            k, v = item.split("=", 1)
            args[k.strip()] = v.strip()
        name = name.strip()
    if name == "slice":
        return product_slice(factor=int(args.get("factor", "1")), point=point)
    if name == "equator4":
        return equator_sphere()
    if name == "cp1-line":
        return cp1_line()
    if name == "perturbed-slice":
        return perturbed_slice(c=float(args.get("c", "0.1")))
    raise SpecParseError("unknown surface %r" % name)


# ---------------------------------------------------------------------
# per-node geometry

class ChartGeometry:
    """All pointwise geometric data of a surface chart at quadrature nodes."""

    def __init__(self, S, m, chart, u_nodes, weights):
        self.chart = chart
        self.amb = S.chart_map[chart]
        self.u = np.asarray(u_nodes, dtype=float)
        self.w = np.asarray(weights, dtype=float)
        n = len(self.u)
        shape = (n,)
        self.shape = shape

        # immersion three jet layers deep; tangents are then 2-layer jets
        uj = seedn([self.u[:, 0], self.u[:, 1]], 3)
        Fj = S.map_ring(chart, uj)
        self.Fj = Fj
        self.F = np.stack([_arr(f, shape) for f in Fj], axis=-1)
        self.dF = np.stack(
            [np.stack([_arr(_jd(f, a), shape) for a in range(2)], axis=-1)
             for f in Fj], axis=-2)
        self.d2F = np.stack(
            [np.stack([np.stack([_arr(_jd(_jd(f, a), b), shape)
                                 for b in range(2)], axis=-1)
                       for a in range(2)], axis=-2)
             for f in Fj], axis=-3)

        # ambient metric composed with the immersion, as 2-layer jets
        F2 = [_jet1_of(f) for f in Fj]
        self.g2 = m.comps_ring(self.amb, F2)
        self.g = np.empty(shape + (4, 4))
        for i in range(4):
            for j in range(4):
                self.g[..., i, j] = _arr(self.g2[i][j], shape)

        # tangent 2-jets and adapted frames
        t = [[Fj[i].d[a] for i in range(4)] for a in range(2)]
        self.t2 = t
        h11 = _dot(self.g2, t[0], t[0])
        h12 = _dot(self.g2, t[0], t[1])
        h22 = _dot(self.g2, t[1], t[1])
        self.h_jets = ((h11, h12), (h12, h22))
        self.h = np.empty(shape + (2, 2))
        self.h[..., 0, 0] = _arr(h11, shape)
        self.h[..., 0, 1] = self.h[..., 1, 0] = _arr(h12, shape)
        self.h[..., 1, 1] = _arr(h22, shape)
        det = self.h[..., 0, 0] * self.h[..., 1, 1] - self.h[..., 0, 1] ** 2
        if det.min() <= 1e-20:
            raise NonMinimalSurfaceError(
                "%s: rank-deficient differential" % S.name)
        self.sqrt_h = np.sqrt(det)

        n1 = jsqrt(h11)
        e1 = _scale(1.0 / n1, t[0])
        p = _dot(self.g2, t[1], e1)
        e2r = _axpy(-p, e1, t[1])
        n2 = jsqrt(_dot(self.g2, e2r, e2r))
        e2 = _scale(1.0 / n2, e2r)
        self.e_jets = (e1, e2)
        # coefficients of (e1, e2) on the coordinate tangents
        c = np.zeros(shape + (2, 2))
        c[..., 0, 0] = 1.0 / _arr(n1, shape)
        c[..., 1, 0] = -_arr(p, shape) / (_arr(n1, shape) * _arr(n2, shape))
        c[..., 1, 1] = 1.0 / _arr(n2, shape)
        self.c = c

        # normal frame from the fixed seed directions
        s3, s4 = S.normal_seeds
        v3 = [1.0 if i == s3 else 0.0 for i in range(4)]
        v4 = [1.0 if i == s4 else 0.0 for i in range(4)]
        n3r = _axpy(-_dot(self.g2, v3, e2), e2,
                    _axpy(-_dot(self.g2, v3, e1), e1, v3))
        n3 = _scale(1.0 / jsqrt(_dot(self.g2, n3r, n3r)), n3r)
        n4r = _axpy(-_dot(self.g2, v4, n3), n3,
                    _axpy(-_dot(self.g2, v4, e2), e2,
                          _axpy(-_dot(self.g2, v4, e1), e1, v4)))
        n4 = _scale(1.0 / jsqrt(_dot(self.g2, n4r, n4r)), n4r)

        # positive orientation of (e1, e2, n3, n4) in the ambient chart
        mat = np.stack([
            np.stack([_arr(v[i], shape) for i in range(4)], axis=-1)
            for v in (e1, e2, n3, n4)], axis=-1)
        sgn = np.sign(np.linalg.det(mat))
        n4 = _scale(sgn, n4)
        self.n_jets = (n3, n4)
        self.e = np.stack([np.stack([_arr(v[i], shape) for i in range(4)],
                                    axis=-1) for v in (e1, e2)], axis=-1)
        self.n = np.stack([np.stack([_arr(v[i], shape) for i in range(4)],
                                    axis=-1) for v in (n3, n4)], axis=-1)

        # ambient curvature data at the immersed points
        gA, dgA, d2gA = m.jets(self.amb, self.F)
        self.curv = curvature_from_arrays(gA, dgA, d2gA)
        self.Gamma = self.curv["Gamma"]
        self.dGamma = self.curv["dGamma"]
        self.Rm = self.curv["Rm"]
        self.s = self.curv["s"]

        # Christoffel symbols along the surface as 1-jets in u (chain rule)
        dGam_u = np.einsum("...mkij,...ma->...akij", self.dGamma, self.dF)
        self.Gamma_j = [[[Jet(self.Gamma[..., k, i, j],
                              (dGam_u[..., 0, k, i, j], dGam_u[..., 1, k, i, j]))
                          for j in range(4)] for i in range(4)] for k in range(4)]

        # second fundamental form: normal part of F_ab + Gamma(F_a, F_b)
        dd = self.d2F + np.einsum("...kij,...ia,...jb->...kab",
                                  self.Gamma, self.dF, self.dF)
        npart = self._project_normal_arr(np.moveaxis(dd, -3, -1))  # (...,2,2,4)
        self.A_amb = npart
        Aef = np.einsum("...ia,...jb,...abk->...ijk", c, c, npart)
        # components <A(e_i, e_j), n_sigma>
        self.A = np.einsum("...ijk,...kl,...ls->...ijs", Aef, self.g, self.n)
        self.H_amb = Aef[..., 0, 0, :] + Aef[..., 1, 1, :]
        self.H_norm = np.sqrt(np.einsum("...i,...ij,...j->...",
                                        self.H_amb, self.g, self.H_amb))

        # normal connection form and intrinsic bundle curvature:
        # omega_a = <nabla_a n3, n4>, K_perp = (d1 w2 - d2 w1)/sqrt(det h)
        omega = []
        n3_1, n4_1 = _jet1_of_vec(n3), _jet1_of_vec(n4)
        g1 = [[_jet1_of(self.g2[i][j]) for j in range(4)] for i in range(4)]
        dF1 = [[_jet1_of(t[a][i]) for i in range(4)] for a in range(2)]
        for a in range(2):
            # d_a n3 as a 1-jet: the derivative slot of the 2-jet frame
            cov = [_jd(n3[i], a) for i in range(4)]
            for i in range(4):
                acc = cov[i]
                for p_ in range(4):
                    for q_ in range(4):
                        acc = acc + self.Gamma_j[i][p_][q_] * dF1[a][p_] * n3_1[q_]
                cov[i] = acc
            omega.append(_dot(g1, cov, n4_1))
        self.omega = np.stack([_arr(o, shape) for o in omega], axis=-1)
        # K_perp pairs R_perp(e1,e2) n4 against n3; with nabla n4 = -omega n3
        # this is the negative curl of the connection form
        curl = _arr(_jd(omega[1], 0), shape) - _arr(_jd(omega[0], 1), shape)
        self.kperp = -curl / self.sqrt_h

        # frame-basis data for Theorem-3.18-type pairings
        E = self.curv["frame"]
        Einv = np.linalg.inv(E)
        ef = np.einsum("...ij,...jk->...ik", Einv, self.e)
        nf = np.einsum("...ij,...jk->...ik", Einv, self.n)
        self.eta6 = bv.wedge(ef[..., 0], ef[..., 1]) + bv.wedge(nf[..., 0], nf[..., 1])
        W6 = self._weyl6()
        self.W6 = W6
        self.s6_pairing = (self.s / 6.0 * np.sum(self.eta6 ** 2, axis=-1)
                           - np.einsum("...i,...ij,...j->...", self.eta6, W6,
                                       self.eta6))

        # curvature term of the index form on the normal components
        self.Rterm = np.einsum("...ijkl,...im,...jp,...km,...lq->...pq",
                               self.Rm, self.e, self.n, self.e, self.n,
                               optimize=True)

    def _weyl6(self):
        from .bivector import kn_tensor4, operator6
        I4 = np.eye(4)
        Rf = self.curv["Rm_frame"]
        s = self.s[..., None, None, None, None]
        W4 = Rf - s / 12.0 * kn_tensor4(I4, I4) \
            - kn_tensor4(self.curv["ric0"], I4)
        return operator6(W4)

    def _project_normal_arr(self, V):
        """Normal projection of (n, 2, 2, 4) ambient vector arrays."""
        gn = np.einsum("nij,njs->nis", self.g, self.n)
        comp = np.einsum("nabi,nis->nabs", V, gn)
        return np.einsum("nabs,nis->nabi", comp, self.n)


def _jet1_of_vec(v):
    return [_jet1_of(vi) for vi in v]


class SurfaceGeometry:
    """Cached per-chart geometry at sphere quadrature nodes."""

    def __init__(self, S, m, quad=None):
        quad = quad or QuadSpec()
        self.S = S
        self.m = m
        self.quad = quad
        self.charts = []
        for hemi, u, w in sphere_chart_nodes(quad.n):
            self.charts.append(ChartGeometry(S, m, hemi, u, w))
        self.min_residual = max(float(cg.H_norm.max()) for cg in self.charts)

    def integrate(self, values_per_chart):
        total = 0.0
        for cg, vals in zip(self.charts, values_per_chart):
            total += float(np.sum(cg.w * cg.sqrt_h * vals))
        return total

    def area(self):
        return self.integrate([np.ones(cg.shape) for cg in self.charts])

    def require_minimal(self, tol=TOL_MIN):
        if self.min_residual > tol:
            raise NonMinimalSurfaceError(
                "%s is not minimal under %s (max |H| = %.3e)"
                % (self.S.name, self.m.name, self.min_residual))


def surface_geometry(S, m, quad=None):
    quad = quad or QuadSpec()
    key = (id(m), quad.n)
    geom = S._geom_cache.get(key)
    if geom is None or geom.m is not m:
        geom = SurfaceGeometry(S, m, quad)
        S._geom_cache[key] = geom
    return geom


def _point_geometry(S, m, chart, u):
    u = np.atleast_2d(np.asarray(u, dtype=float))
    return ChartGeometry(S, m, chart, u, np.ones(len(u)))


# ---------------------------------------------------------------------
# normal sections

class NormalSection:
    """Base: provides per-node frame coefficients (c3, c4) as u-jets."""

    def coeff_jets(self, cg, order=1):
        raise NotImplementedError

    def rotated(self):
        return JRotated(self)


class FrameSection(NormalSection):
    """sigma = a3 n3 + a4 n4 with ring-generic coefficient functions.

    Valid as a global section only where the adapted normal frame is
    globally smooth (trivial normal bundles: slices, the equator).
    """

    def __init__(self, a3, a4):
        self.a3 = a3
        self.a4 = a4

    def coeff_jets(self, cg, order=1):
        uj = seedn([cg.u[:, 0], cg.u[:, 1]], order)
        return self.a3(cg.chart, uj), self.a4(cg.chart, uj)


def parallel_section(c3=1.0, c4=0.0):
    return FrameSection(lambda chart, u: c3 + 0.0 * u[0],
                        lambda chart, u: c4 + 0.0 * u[0])


class ProjectedSection(NormalSection):
    """sigma = P_N(sum_k f_k V_k) for ambient fields V_k along the surface.

    Globally smooth whenever the fields and coefficient functions are, so
    it works on twisted normal bundles where no global frame exists.
    """

    def __init__(self, fields, coeffs):
        self.fields = list(fields)
        self.coeffs = list(coeffs)

    def coeff_jets(self, cg, order=1):
        uj = seedn([cg.u[:, 0], cg.u[:, 1]], order)
        if order == 1:
            # immersion jets are 3 layers deep, frames and metric 2 deep
            Fj = [_jet1_of(_jet1_of(f)) for f in cg.Fj]
            g = [[_jet1_of(cg.g2[i][j]) for j in range(4)] for i in range(4)]
            n3 = _jet1_of_vec(cg.n_jets[0])
            n4 = _jet1_of_vec(cg.n_jets[1])
        elif order == 2:
            Fj = [_jet1_of(f) for f in cg.Fj]
            g = cg.g2
            n3 = cg.n_jets[0]
            n4 = cg.n_jets[1]
        else:
            raise ValueError("order must be 1 or 2")
        sig = [0.0, 0.0, 0.0, 0.0]
        for f, cf in zip(self.fields, self.coeffs):
            V = f(cg.chart, uj, Fj)
            a = cf(cg.chart, uj)
            sig = _axpy(a, V, sig)
        return _dot(g, sig, n3), _dot(g, sig, n4)


class JRotated(NormalSection):
    """J sigma: rotate the frame coefficients by +90 degrees."""

    def __init__(self, base):
        self.base = base

    def coeff_jets(self, cg, order=1):
        c3, c4 = self.base.coeff_jets(cg, order)
        return -1.0 * c4, c3


# ---------------------------------------------------------------------
# pointwise operators on sections

def _covariant_coeffs(cg, c3, c4):
    """(nabla^perp_{d_a} sigma) frame coefficients, a = 1, 2 (arrays)."""
    sh = cg.shape
    d3 = np.stack([_arr(_jd(c3, a), sh) for a in range(2)], axis=-1)
    d4 = np.stack([_arr(_jd(c4, a), sh) for a in range(2)], axis=-1)
    v3 = _arr(c3, sh)
    v4 = _arr(c4, sh)
    cov3 = d3 - cg.omega * v4[..., None]
    cov4 = d4 + cg.omega * v3[..., None]
    return v3, v4, cov3, cov4


def section_data(cg, sigma):
    """Values, frame covariant derivatives along e1/e2, and norms."""
    c3, c4 = sigma.coeff_jets(cg, order=1)
    v3, v4, cov3, cov4 = _covariant_coeffs(cg, c3, c4)
    # along the orthonormal tangent frame: e_i = c[i,a] d_a
    e3 = np.einsum("...ia,...a->...i", cg.c, cov3)
    e4 = np.einsum("...ia,...a->...i", cg.c, cov4)
    return {"c3": v3, "c4": v4, "D3": e3, "D4": e4,
            "norm2": v3 ** 2 + v4 ** 2,
            "grad2": e3[..., 0] ** 2 + e3[..., 1] ** 2
                     + e4[..., 0] ** 2 + e4[..., 1] ** 2}


def normal_connection(S, m, sigma, X, chart, u):
    """Ambient components of nabla^perp_X sigma at a single point.

    X is a tangent vector in surface chart coordinates.
    """
    cg = _point_geometry(S, m, chart, u)
    c3, c4 = sigma.coeff_jets(cg, order=1)
    _, _, cov3, cov4 = _covariant_coeffs(cg, c3, c4)
    X = np.asarray(X, dtype=float)
    a3 = cov3[0] @ X
    a4 = cov4[0] @ X
    return a3 * cg.n[0, :, 0] + a4 * cg.n[0, :, 1]


def dbar_vector(cg, sigma, tau=0.0):
    """dbar(sigma; e) = nabla^perp_e sigma + nabla^perp_{Ie}(J sigma), in
    frame coefficients, for e = cos(tau) e1 + sin(tau) e2."""
    d = section_data(cg, sigma)
    ct, st = np.cos(tau), np.sin(tau)
    # I e = -sin(tau) e1 + cos(tau) e2
    D3_e = ct * d["D3"][..., 0] + st * d["D3"][..., 1]
    D4_e = ct * d["D4"][..., 0] + st * d["D4"][..., 1]
    # J sigma has coefficients (-c4, c3): covariant derivative rotates too
    D3J_Ie = -(-st * d["D4"][..., 0] + ct * d["D4"][..., 1])
    D4J_Ie = (-st * d["D3"][..., 0] + ct * d["D3"][..., 1])
    return D3_e + D3J_Ie, D4_e + D4J_Ie


def dbar_perp_sq_field(cg, sigma, tau=0.0):
    b3, b4 = dbar_vector(cg, sigma, tau)
    return 0.5 * (b3 ** 2 + b4 ** 2)


def dbar_perp_sq(S, m, sigma, chart, u, tau=0.0):
    cg = _point_geometry(S, m, chart, u)
    return float(dbar_perp_sq_field(cg, sigma, tau)[0])


def k_perp_intrinsic(S, m, chart, u):
    return float(_point_geometry(S, m, chart, u).kperp[0])


def _kperp_extrinsic_field(cg):
    # Ricci equation in the sign conventions of curv4.curvature:
    # Kperp = Rm(e1,e2,e3,e4) + <A3(e1), A4(e2)> - <A4(e1), A3(e2)>
    amb = np.einsum("...ijkl,...i,...j,...k,...l->...",
                    cg.Rm, cg.e[..., 0], cg.e[..., 1],
                    cg.n[..., 0], cg.n[..., 1])
    A3, A4 = cg.A[..., 0], cg.A[..., 1]
    corr = (np.einsum("...j,...j->...", A3[..., 0, :], A4[..., 1, :])
            - np.einsum("...j,...j->...", A4[..., 0, :], A3[..., 1, :]))
    return amb + corr


def k_perp_extrinsic(S, m, chart, u):
    return float(_kperp_extrinsic_field(_point_geometry(S, m, chart, u))[0])


def chern_number(S, m, quad=None):
    """(1/2pi) * integral of the normal-bundle curvature."""
    geom = surface_geometry(S, m, quad)
    return geom.integrate([cg.kperp for cg in geom.charts]) / (2 * np.pi)


class SecondFundamentalForm:
    """A(e_i, e_j) components in the adapted frames at one point."""

    def __init__(self, A, H_amb, H_norm):
        self.A = np.asarray(A, dtype=float)          # (2, 2, 2): i, j, sigma
        self.H = np.asarray(H_amb, dtype=float)
        self.H_norm = float(H_norm)

    @property
    def minimal(self):
        return self.H_norm < TOL_MIN

    def shape_norms(self):
        return (float(np.sum(self.A[..., 0] ** 2)),
                float(np.sum(self.A[..., 1] ** 2)))


def second_fundamental(S, m, chart, u):
    cg = _point_geometry(S, m, chart, u)
    return SecondFundamentalForm(cg.A[0], cg.H_amb[0], cg.H_norm[0])


def a_wedge_a_sq(A):
    """|A ^ A|^2 from the component arrays of a SecondFundamentalForm.

    Accepts a SecondFundamentalForm or a raw (..., 2, 2, 2) array.
    """
    arr = A.A if isinstance(A, SecondFundamentalForm) else np.asarray(A)
    A3 = arr[..., 0]
    A4 = arr[..., 1]
    v1 = A3[..., 0, :] + A4[..., 1, :]
    v2 = A3[..., 1, :] - A4[..., 0, :]
    return np.sum(v1 ** 2, axis=-1) + np.sum(v2 ** 2, axis=-1)


def a_wedge_a_sq_expansion(A):
    """The expanded form: |A3|^2 + |A4|^2 + 2<A3 e1, A4 e2> - 2<A4 e1, A3 e2>."""
    arr = A.A if isinstance(A, SecondFundamentalForm) else np.asarray(A)
    A3 = arr[..., 0]
    A4 = arr[..., 1]
    return (np.sum(A3 ** 2, axis=(-1, -2)) + np.sum(A4 ** 2, axis=(-1, -2))
            + 2 * np.sum(A3[..., 0, :] * A4[..., 1, :], axis=-1)
            - 2 * np.sum(A4[..., 0, :] * A3[..., 1, :], axis=-1))


def induced_geometry(S, m, chart, u):
    """Induced metric, area element and adapted frame at a point."""
    cg = _point_geometry(S, m, chart, u)
    return {
        "induced": cg.h[0],
        "area_element": float(cg.sqrt_h[0]),
        "tangent_frame": cg.e[0],
        "normal_frame": cg.n[0],
    }


def area(S, m, quad=None):
    return surface_geometry(S, m, quad).area()


# ---------------------------------------------------------------------
# variational integrals

def _second_variation_fields(cg, sigma):
    d = section_data(cg, sigma)
    sig_amb = (d["c3"][..., None] * cg.n[..., 0]
               + d["c4"][..., None] * cg.n[..., 1])
    curv = np.einsum("...ijkl,...ir,...j,...kr,...l->...",
                     cg.Rm, cg.e, sig_amb, cg.e, sig_amb, optimize=True)
    Asig = np.einsum("...ijs,...s->...ij", cg.A,
                     np.stack([d["c3"], d["c4"]], axis=-1))
    ashear = np.sum(Asig ** 2, axis=(-1, -2))
    return d, d["grad2"] - curv - ashear


def second_variation(S, m, sigma, quad=None):
    """delta^2(sigma) for a minimal surface (unnormalized curvature term)."""
    geom = surface_geometry(S, m, quad)
    geom.require_minimal()
    vals = [_second_variation_fields(cg, sigma)[1] for cg in geom.charts]
    return geom.integrate(vals)


def variational_identity_lemma310(S, m, sigma, quad=None):
    """| int |nabla sigma|^2 - int (2 |dbar sigma|^2 + Kperp |sigma|^2) |."""
    geom = surface_geometry(S, m, quad)
    lhs, rhs = 0.0, 0.0
    for cg in geom.charts:
        d = section_data(cg, sigma)
        lhs += float(np.sum(cg.w * cg.sqrt_h * d["grad2"]))
        rhs += float(np.sum(cg.w * cg.sqrt_h *
                            (2 * dbar_perp_sq_field(cg, sigma)
                             + cg.kperp * d["norm2"])))
    return {"lhs": lhs, "rhs": rhs, "residual": abs(lhs - rhs)}


def weitzenboeck_variation(S, m, sigma, quad=None):
    """Both sides of the averaged second-variation identity.

    lhs = delta^2(sigma) + delta^2(J sigma); rhs integrates
    4 |dbar sigma|^2 - [ <(s/6 - W+) eta, eta> + |A ^ A|^2 ] |sigma|^2.
    """
    geom = surface_geometry(S, m, quad)
    geom.require_minimal()
    jsig = sigma.rotated()
    lhs = (second_variation(S, m, sigma, quad)
           + second_variation(S, m, jsig, quad))
    t_dbar, t_weyl, t_shear = 0.0, 0.0, 0.0
    for cg in geom.charts:
        d = section_data(cg, sigma)
        base = cg.w * cg.sqrt_h
        t_dbar += float(np.sum(base * 4.0 * dbar_perp_sq_field(cg, sigma)))
        t_weyl -= float(np.sum(base * cg.s6_pairing * d["norm2"]))
        t_shear -= float(np.sum(base * a_wedge_a_sq(cg.A) * d["norm2"]))
    rhs = t_dbar + t_weyl + t_shear
    return {"lhs": lhs, "rhs": rhs, "residual": abs(lhs - rhs),
            "terms": {"dbar": t_dbar, "weyl_pairing": t_weyl,
                      "shear": t_shear}}


def log_norm_check(S, m, sigma, quad=None, holo_tol=1e-6, norm_floor=1e-3,
                   chart_filter=None):
    """max | Kperp + 1/2 Laplacian_S log |sigma|^2 | over the grid.

    Requires sigma holomorphic (max pointwise dbar norm below holo_tol) and
    bounded away from zero.  The 1/2 is forced by this package's
    normal-curvature normalization: on the projective line Kperp = 2 while
    the holomorphic sections give Laplacian_S log |sigma|^2 = -4.
    """
    geom = surface_geometry(S, m, quad)
    worst = 0.0
    for cg in geom.charts:
        if chart_filter is not None and not chart_filter(cg):
            continue
        dbar = dbar_perp_sq_field(cg, sigma)
        if dbar.max() > holo_tol:
            raise SectionError(
                "section is not holomorphic at tolerance (max |dbar|^2 = %.3e)"
                % float(dbar.max()))
        c3, c4 = sigma.coeff_jets(cg, order=2)
        norm2 = c3 * c3 + c4 * c4
        if np.sqrt(_arr(norm2, cg.shape)).min() < norm_floor:
            raise SectionError("section norm falls below the floor")
        lap = _surface_laplacian(cg, jlog(norm2))
        worst = max(worst, float(np.abs(cg.kperp + 0.5 * lap).max()))
    return worst


def _surface_laplacian(cg, f):
    """Laplace-Beltrami of a 2-jet scalar on the induced metric
    (div grad convention: <= 0 at interior maxima)."""
    sh = cg.shape
    df = np.stack([_arr(_jd(f, a), sh) for a in range(2)], axis=-1)
    d2f = np.stack([np.stack([_arr(_jd(_jd(f, a), b), sh) for b in range(2)],
                             axis=-1) for a in range(2)], axis=-2)
    h = cg.h
    hinv = np.linalg.inv(h)
    dh = np.empty(sh + (2, 2, 2))
    for a in range(2):
        for b in range(2):
            dh[..., 0, a, b] = _arr(_jd(cg.h_jets[a][b], 0), sh)
            dh[..., 1, a, b] = _arr(_jd(cg.h_jets[a][b], 1), sh)
    S2 = (np.einsum("...abd->...dab", dh) + np.einsum("...bad->...dab", dh)
          - dh)
    GamS = 0.5 * np.einsum("...cd,...dab->...cab", hinv, S2)
    hess = d2f - np.einsum("...cab,...c->...ab", GamS, df)
    return np.einsum("...ab,...ab->...", hinv, hess)


def ric_perp_identity_residual(cg):
    """Pointwise residual of the Bianchi/(2.3) identity relating
    -2<R(e1,e2)e4,e3> + Ric_perp(e3) + Ric_perp(e4) to the eta pairing."""
    amb = np.einsum("...ijkl,...i,...j,...k,...l->...",
                    cg.Rm, cg.e[..., 0], cg.e[..., 1],
                    cg.n[..., 0], cg.n[..., 1])
    ric3 = sum(np.einsum("...ijkl,...i,...j,...k,...l->...",
                         cg.Rm, cg.e[..., k], cg.n[..., 0],
                         cg.e[..., k], cg.n[..., 0]) for k in range(2))
    ric4 = sum(np.einsum("...ijkl,...i,...j,...k,...l->...",
                         cg.Rm, cg.e[..., k], cg.n[..., 1],
                         cg.e[..., k], cg.n[..., 1]) for k in range(2))
    lhs = -2.0 * amb + ric3 + ric4
    return np.abs(lhs - cg.s6_pairing).max()
