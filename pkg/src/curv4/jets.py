"""Forward-mode automatic differentiation with nestable dual numbers.

A Jet carries a value and a tuple of first-order partials.  Coefficients may
be floats, numpy arrays (batched evaluation over many points at once) or
other Jets: nesting jets two deep yields exact second derivatives, three
deep yields mixed third-order data (used when connection coefficients have
to be differentiated along an immersed surface).

All closed-form fields in this package (metric components, Kahler
potentials, immersions, test 2-forms, spherical harmonics) are written as
plain arithmetic over a generic scalar ring, so the same code path produces
values, gradients and Hessians depending on how the inputs are seeded.
"""

import numpy as np


class Jet:
    __slots__ = ("f", "d")

    # keep numpy from consuming Jet operands elementwise
    __array_ufunc__ = None

    def __init__(self, f, d):
        self.f = f
        self.d = tuple(d)

    def __repr__(self):
        return "Jet(%r, %r)" % (self.f, self.d)

    # ---- arithmetic -------------------------------------------------
    def __add__(self, other):
        if isinstance(other, Jet):
            return Jet(self.f + other.f,
                       tuple(a + b for a, b in zip(self.d, other.d)))
        return Jet(self.f + other, self.d)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.f, tuple(-a for a in self.d))

    def __sub__(self, other):
        if isinstance(other, Jet):
            return Jet(self.f - other.f,
                       tuple(a - b for a, b in zip(self.d, other.d)))
        return Jet(self.f - other, self.d)

    def __rsub__(self, other):
        return Jet(other - self.f, tuple(-a for a in self.d))

    def __mul__(self, other):
        if isinstance(other, Jet):
            return Jet(self.f * other.f,
                       tuple(a * other.f + self.f * b
                             for a, b in zip(self.d, other.d)))
        return Jet(self.f * other, tuple(a * other for a in self.d))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            inv = 1.0 / other.f
            q = self.f * inv
            return Jet(q, tuple((a - q * b) * inv
                                for a, b in zip(self.d, other.d)))
        inv = 1.0 / other
        return Jet(self.f * inv, tuple(a * inv for a in self.d))

    def __rtruediv__(self, other):
        inv = 1.0 / self.f
        q = other * inv
        return Jet(q, tuple(-q * b * inv for b in self.d))

    def __pow__(self, p):
        if p == 2:
            return self * self
        fpm1 = self.f ** (p - 1)
        return Jet(fpm1 * self.f, tuple(p * fpm1 * a for a in self.d))


def jsqrt(x):
    if isinstance(x, Jet):
        r = jsqrt(x.f)
        return Jet(r, tuple(a * (0.5 / r) for a in x.d))
    return np.sqrt(x)


def jlog(x):
    if isinstance(x, Jet):
        return Jet(jlog(x.f), tuple(a / x.f for a in x.d))
    return np.log(x)


def jexp(x):
    if isinstance(x, Jet):
        e = jexp(x.f)
        return Jet(e, tuple(a * e for a in x.d))
    return np.exp(x)


def jsin(x):
    if isinstance(x, Jet):
        c = jcos(x.f)
        return Jet(jsin(x.f), tuple(a * c for a in x.d))
    return np.sin(x)


def jcos(x):
    if isinstance(x, Jet):
        s = jsin(x.f)
        return Jet(jcos(x.f), tuple(-(a * s) for a in x.d))
    return np.cos(x)


# ---- seeding ---------------------------------------------------------

def seedn(x, order):
    """Wrap coordinates in ``order`` nested dual layers.

    Derivative seeds at the outer layers are plain constants; arithmetic
    coercion keeps them in the right ring.
    """
    m = len(x)
    out = []
    for i in range(m):
        e = tuple(1.0 if j == i else 0.0 for j in range(m))
        xi = x[i]
        for _ in range(order):
            xi = Jet(xi, e)
        out.append(xi)
    return out


def seed1(x):
    """Wrap coordinates for one derivative order: returns first-order jets."""
    return seedn(x, 1)


def seed2(x):
    """Wrap coordinates for two derivative orders (nested duals)."""
    return seedn(x, 2)


def value(x):
    """Strip all jet layers from x."""
    while isinstance(x, Jet):
        x = x.f
    return x


def grad1(x, m):
    """First partials of a once-seeded result (list of length m)."""
    if isinstance(x, Jet):
        return [value(x.d[k]) if isinstance(x.d[k], Jet) else x.d[k]
                for k in range(m)]
    return [0.0] * m


def hess2(x, m):
    """Second partials of a twice-seeded result (m x m nested list)."""
    if not isinstance(x, Jet):
        return [[0.0] * m for _ in range(m)]
    rows = []
    for k in range(m):
        dk = x.d[k]
        if isinstance(dk, Jet):
            rows.append([value(dk.d[l]) for l in range(m)])
        else:
            rows.append([0.0] * m)
    return rows


def asarray_shaped(entry, shape):
    """Broadcast a jet coefficient (scalar or array) to the batch shape."""
    a = np.asarray(entry, dtype=float)
    if a.shape != tuple(shape):
        a = np.broadcast_to(a, shape).copy()
    return a
