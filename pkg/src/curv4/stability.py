"""Second-variation index forms over minimal 2-spheres.

Normal sections are discretized by real spherical harmonics times either
the adapted normal frame (trivial normal bundles) or a globally spanning
set of projected ambient fields (twisted bundles, e.g. the projective
line).  The polarized second variation and the mass matrix define a
generalized eigenvalue pencil whose negative count is the Morse index.

The Theorem-C-style harness drives the pieces end to end on slice spheres
in S^2 x S^2 metrics, and a curvature-override fixture exercises the
instability branch that no constructible metric can reach.
"""

import numpy as np

from .errors import NonMinimalSurfaceError, RefinementError
from .metrics import QuadSpec
from .sphharm import harmonic_fn, real_harmonics
from .surfaces import (
    FrameSection, NormalSection, ProjectedSection, chern_number,
    dbar_perp_sq_field, second_variation, section_data, surface_geometry,
    weitzenboeck_variation, _arr, _jd, _jet1_of, _dot, _jet1_of_vec,
)
from .jets import seedn

MASS_COND_MAX = 1e6


class LinearSection(NormalSection):
    """Weighted sum of normal sections (used to materialize eigenvectors)."""

    def __init__(self, parts, weights):
        self.parts = list(parts)
        self.weights = np.asarray(weights, dtype=float)

    def coeff_jets(self, cg, order=1):
        c3 = 0.0
        c4 = 0.0
        for w, p in zip(self.weights, self.parts):
            if w == 0.0:
                continue
            a3, a4 = p.coeff_jets(cg, order)
            c3 = c3 + w * a3
            c4 = c4 + w * a4
        return c3, c4


class SectionBasis:
    """Harmonics-times-normal-directions basis over a surface.

    For surfaces with a global adapted frame the elements are Y_lm n_3 and
    Y_lm n_4 (dimension 2 (L+1)^2); on twisted bundles each of the
    surface's normal generator fields is used instead and the redundant
    mass-matrix kernel is projected out when solving.
    """

    def __init__(self, S, L):
        self.S = S
        self.L = int(L)
        self.n_harmonics = (L + 1) ** 2
        if S.normal_generators is None:
            self.n_fields = 2
        else:
            self.n_fields = len(S.normal_generators)
        self.dim = self.n_fields * self.n_harmonics

    def sections(self):
        """The basis as NormalSection objects (jet-capable, slower path)."""
        out = []
        fns = [harmonic_fn(l, m) for l in range(self.L + 1)
               for m in range(-l, l + 1)]
        zero = lambda chart, u: 0.0 * u[0]
        for c in range(self.n_fields):
            for f in fns:
                if self.S.normal_generators is None:
                    out.append(FrameSection(f, zero) if c == 0
                               else FrameSection(zero, f))
                else:
                    coeffs = [zero] * self.n_fields
                    coeffs[c] = f
                    out.append(ProjectedSection(self.S.normal_generators,
                                                list(coeffs)))
        return out

    def as_section(self, coefs):
        return LinearSection(self.sections(), coefs)

    def node_data(self, cg):
        """Vectorized per-node coefficients and covariant derivatives.

        Returns (v3, v4, cov3, cov4): values (N, dim) and coordinate
        covariant derivatives (N, dim, 2).
        """
        sh = cg.shape
        uj = seedn([cg.u[:, 0], cg.u[:, 1]], 1)
        Y = real_harmonics(cg.chart, uj, self.L)
        Yv = np.stack([_arr(y, sh) for y in Y], axis=-1)
        dY = np.stack([np.stack([_arr(_jd(y, a), sh) for a in range(2)],
                                axis=-1) for y in Y], axis=-2)
        if self.S.normal_generators is None:
            p3 = np.stack([np.ones(sh), np.zeros(sh)], axis=-1)
            p4 = np.stack([np.zeros(sh), np.ones(sh)], axis=-1)
            dp3 = np.zeros(sh + (2, 2))
            dp4 = np.zeros(sh + (2, 2))
        else:
            Fj = [_jet1_of(_jet1_of(f)) for f in cg.Fj]
            g1 = [[_jet1_of(cg.g2[i][j]) for j in range(4)] for i in range(4)]
            n3 = _jet1_of_vec(cg.n_jets[0])
            n4 = _jet1_of_vec(cg.n_jets[1])
            p3c, p4c, dp3c, dp4c = [], [], [], []
            for gen in self.S.normal_generators:
                V = gen(cg.chart, uj, Fj)
                a3 = _dot(g1, V, n3)
                a4 = _dot(g1, V, n4)
                p3c.append(_arr(a3, sh))
                p4c.append(_arr(a4, sh))
                dp3c.append(np.stack([_arr(_jd(a3, a), sh) for a in range(2)],
                                     axis=-1))
                dp4c.append(np.stack([_arr(_jd(a4, a), sh) for a in range(2)],
                                     axis=-1))
            p3 = np.stack(p3c, axis=-1)
            p4 = np.stack(p4c, axis=-1)
            dp3 = np.stack(dp3c, axis=-2)
            dp4 = np.stack(dp4c, axis=-2)

        # combine: element (c, k) has coefficients Y_k p3_c, Y_k p4_c
        v3 = (p3[..., :, None] * Yv[..., None, :]).reshape(sh + (self.dim,))
        v4 = (p4[..., :, None] * Yv[..., None, :]).reshape(sh + (self.dim,))
        d3 = (dp3[..., :, None, :] * Yv[..., None, :, None]
              + p3[..., :, None, None] * dY[..., None, :, :])
        d4 = (dp4[..., :, None, :] * Yv[..., None, :, None]
              + p4[..., :, None, None] * dY[..., None, :, :])
        d3 = d3.reshape(sh + (self.dim, 2))
        d4 = d4.reshape(sh + (self.dim, 2))
        om = cg.omega[..., None, :]
        cov3 = d3 - om * v4[..., None]
        cov4 = d4 + om * v3[..., None]
        return v3, v4, cov3, cov4


class IndexForm:
    """Discretized second-variation pencil Q x = lambda G x."""

    def __init__(self, Q, G, basis):
        self.Q = Q
        self.G = G
        self.basis = basis
        lam, U = np.linalg.eigh(G)
        keep = lam > lam[-1] / MASS_COND_MAX
        self.mass_rank = int(keep.sum())
        Z = U[:, keep] / np.sqrt(lam[keep])
        self.Z = Z
        Qw = Z.T @ Q @ Z
        Qw = 0.5 * (Qw + Qw.T)
        self.spectrum, V = np.linalg.eigh(Qw)
        self.vectors = Z @ V
        self.tol_idx = 1e-6 * max(1.0, np.abs(self.spectrum).max())
        self.morse_index = int(np.sum(self.spectrum < -self.tol_idx))
        self.nullity = int(np.sum(np.abs(self.spectrum) <= self.tol_idx))

    def eigensection(self, k):
        return self.basis.as_section(self.vectors[:, k])


def _accumulate_forms(S, m, basis, quad, ambient_override=None):
    geom = surface_geometry(S, m, quad)
    dim = basis.dim
    Q = np.zeros((dim, dim))
    G = np.zeros((dim, dim))
    D = np.zeros((dim, dim))
    for cg in geom.charts:
        v3, v4, cov3, cov4 = basis.node_data(cg)
        wA = cg.w * cg.sqrt_h
        # frame-direction derivatives e_i = c[i,a] d_a
        D3 = np.einsum("nia,nba->nbi", cg.c, cov3)
        D4 = np.einsum("nia,nba->nbi", cg.c, cov4)
        grad = (np.einsum("n,nai,nbi->ab", wA, D3, D3)
                + np.einsum("n,nai,nbi->ab", wA, D4, D4))
        V = np.stack([v3, v4], axis=-1)              # (n, dim, 2)
        G += np.einsum("n,nas,nbs->ab", wA, V, V)
        if ambient_override is None:
            Rt = cg.Rterm
        else:
            Rt = 2.0 * float(ambient_override) * np.broadcast_to(
                np.eye(2), cg.Rterm.shape).copy()
        Ablock = np.einsum("nijs,nijt->nst", cg.A, cg.A)
        curv = np.einsum("n,nas,nst,nbt->ab", wA, V, Rt, V, optimize=True)
        shear = np.einsum("n,nas,nst,nbt->ab", wA, V, Ablock, V, optimize=True)
        Q += grad - curv - shear
        b3 = D3[..., 0] - D4[..., 1]
        b4 = D4[..., 0] + D3[..., 1]
        D += (np.einsum("n,na,nb->ab", wA, b3, b3)
              + np.einsum("n,na,nb->ab", wA, b4, b4))
    return 0.5 * (Q + Q.T), 0.5 * (G + G.T), 0.5 * (D + D.T)


def assemble_index_form(S, m, basis, quad=None, ambient_override=None):
    """Polarized second-variation matrix and mass matrix over the basis."""
    quad = quad or QuadSpec()
    geom = surface_geometry(S, m, quad)
    if ambient_override is None:
        geom.require_minimal()
    Q, G, _ = _accumulate_forms(S, m, basis, quad, ambient_override)
    return IndexForm(Q, G, basis)


def near_holomorphic_section(S, m, basis, quad=None):
    """Minimize the dbar energy over unit-mass sections of the basis.

    Returns {section, energy, coefficients}; runs regardless of the sign
    of c1 (a negative Chern number just means the energy cannot reach 0).
    """
    quad = quad or QuadSpec()
    _, G, D = _accumulate_forms(S, m, basis, quad)
    lam, U = np.linalg.eigh(G)
    keep = lam > lam[-1] / MASS_COND_MAX
    Z = U[:, keep] / np.sqrt(lam[keep])
    Dw = Z.T @ D @ Z
    ev, V = np.linalg.eigh(0.5 * (Dw + Dw.T))
    lo = ev[0]
    ties = np.nonzero(ev <= lo + 1e-10 * max(1.0, abs(lo)))[0]
    if len(ties) > 1:
        # prefer sections that stay away from zero: largest L4 mass
        geom = surface_geometry(S, m, quad)
        best, best_l4 = ties[0], -np.inf
        for k in ties:
            coefs = Z @ V[:, k]
            l4 = 0.0
            for cg in geom.charts:
                v3, v4, _, _ = basis.node_data(cg)
                n2 = (v3 @ coefs) ** 2 + (v4 @ coefs) ** 2
                l4 += float(np.sum(cg.w * cg.sqrt_h * n2 ** 2))
            if l4 > best_l4:
                best, best_l4 = k, l4
        k0 = best
    else:
        k0 = ties[0]
    coefs = Z @ V[:, k0]
    return {"section": basis.as_section(coefs), "energy": float(ev[k0]),
            "coefficients": coefs}


def refine_until_stable(op, L0=2, L_max=12):
    """Raise the harmonic degree by 2 until (index, nullity) repeats twice."""
    if L0 >= L_max:
        raise ValueError("L0 must be below L_max")
    history = []
    L = L0
    while L <= L_max:
        form = op(L)
        history.append((L, form.morse_index, form.nullity))
        if len(history) >= 3 and \
                history[-1][1:] == history[-2][1:] == history[-3][1:]:
            return {"morse_index": form.morse_index, "nullity": form.nullity,
                    "L_used": L, "history": history, "form": form}
        L += 2
    raise RefinementError("index did not stabilize by L = %d: %r"
                          % (L_max, history))


def index_two_construction(S, m, sigma, quad=None, ambient_override=None):
    """The sigma, sigma +- J sigma pair: both second variations negative
    whenever the averaged one is (polarization decides the sign)."""
    quad = quad or QuadSpec()

    def d2(sec):
        if ambient_override is None:
            return second_variation(S, m, sec, quad)
        geom = surface_geometry(S, m, quad)
        total = 0.0
        kap = float(ambient_override)
        for cg in geom.charts:
            d = section_data(cg, sec)
            total += float(np.sum(cg.w * cg.sqrt_h *
                                  (d["grad2"] - 2.0 * kap * d["norm2"])))
        return total

    jsig = sigma.rotated()
    a = d2(sigma)
    b = d2(jsig)
    if a > b:
        sigma, jsig = jsig, sigma
        a, b = b, a
    cross = 0.5 * (d2(LinearSection([sigma, jsig], [1.0, 1.0])) - a - b)
    partner = LinearSection([sigma, jsig], [1.0, -1.0] if cross > 0 else [1.0, 1.0])
    return {"d2_sigma": a, "d2_jsigma": b, "cross": cross,
            "pair": (sigma, partner), "d2_pair": (a, d2(partner)),
            "unstable_pair": a < 0 and d2(partner) < 0}


class TheoremCReport:
    def __init__(self, **kw):
        self.__dict__.update(kw)

    def as_dict(self):
        out = {}
        for k, v in self.__dict__.items():
            if isinstance(v, (int, float, bool, str, type(None))):
                out[k] = v
            elif isinstance(v, dict):
                out[k] = {kk: float(vv) if np.isscalar(vv) else vv
                          for kk, vv in v.items()
                          if np.isscalar(vv) or isinstance(vv, (int, float))}
        return out


def theorem_c_harness(m, surface=None, L=4, quad=None, min_tol=1e-8):
    """Run the slice-sphere stability diagnostics on an S^2 x S^2 metric.

    Reports c1 of the normal bundle, the best near-holomorphic section and
    its averaged second variation with the full term decomposition, plus
    the hypothesis margins (eta-pairing positivity, shear, sectional
    positivity proxy).  Refuses non-minimal slices, reporting the residual.
    """
    from .surfaces import product_slice
    from .curvature import sectional_extremes
    quad = quad or QuadSpec()
    S = surface if surface is not None else product_slice()
    geom = surface_geometry(S, m, quad)
    if geom.min_residual > min_tol:
        return TheoremCReport(
            metric=m.name, surface=S.name, minimal=False,
            minimality_residual=geom.min_residual, verdict="refused: not minimal")
    c1 = chern_number(S, m, quad)
    basis = SectionBasis(S, L)
    holo = near_holomorphic_section(S, m, basis, quad)
    sigma = holo["section"]
    wv = weitzenboeck_variation(S, m, sigma, quad)
    pairing_min = min(float(cg.s6_pairing.min()) for cg in geom.charts)
    from .surfaces import a_wedge_a_sq
    shear_max = max(float(a_wedge_a_sq(cg.A).max()) for cg in geom.charts)
    # sectional positivity sampled at the surface's ambient points
    sec_min = np.inf
    rng = np.random.default_rng(0)
    for cg in geom.charts:
        sel = rng.choice(len(cg.u), size=min(24, len(cg.u)), replace=False)
        vals, _ = sectional_extremes(cg.curv["M6"][sel], rng=rng, starts=12,
                                     iters=150, samples=1000)
        sec_min = min(sec_min, float(vals.min()))
    hyps = pairing_min >= -1e-9 and sec_min > 1e-9
    if hyps:
        verdict = ("hypotheses hold: averaged second variation is negative "
                   "and K_perp > 0 forces c1 > 0 against the trivial bundle")
    elif sec_min <= 1e-9:
        verdict = ("no contradiction: strict sectional positivity fails "
                   "(min sectional = %.3e)" % sec_min)
    else:
        verdict = "no contradiction: the eta-pairing positivity fails"
    return TheoremCReport(
        metric=m.name, surface=S.name, minimal=True,
        minimality_residual=geom.min_residual, c1=c1,
        holomorphic_energy=holo["energy"],
        d2_sum=wv["lhs"], d2_terms=wv["terms"], residual_318=wv["residual"],
        pairing_min=pairing_min, shear_max=shear_max, min_sectional=sec_min,
        verdict=verdict)
