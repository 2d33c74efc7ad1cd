"""Test functionals with certified norm bounds.

Three families are provided: cylinder functionals χ(w^{(k_1)}(t_1), ...),
the L^r norm functional, and smooth bump functionals built from a
degree-7 smoothstep. All evaluate on batches of step paths.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from .core import Functional, NormBounds, PathGrid, path_eval

__all__ = [
    "phi",
    "phi_derivative",
    "smoothstep_sups",
    "Chi",
    "make_chi",
    "CHI_CATALOG",
    "CylinderFunctional",
    "cylinder_norm_bound",
    "LrNormFunctional",
    "lr_eval",
    "lr_direction_bound",
    "BumpFunctional",
    "BumpNormBound",
    "bump_eval",
    "bump_norm_bound",
    "ProductFunctional",
    "ConstantFunctional",
    "functional_from_dict",
]

# max of x/(1+x^3) and x^2/(1+x^3) over x >= 0
_LIN_OVER_CUBIC = (2.0 / 3.0) * 2.0 ** (-1.0 / 3.0)
_SQ_OVER_CUBIC = 2.0 ** (2.0 / 3.0) / 3.0


# ---------------------------------------------------------------------------
# smoothstep
# ---------------------------------------------------------------------------

# phi(x) = 1 - (35x^4 - 84x^5 + 70x^6 - 20x^7) on [0, 1]
_PHI = np.polynomial.Polynomial([1, 0, 0, 0, -35, 84, -70, 20])


def phi_derivative(x, order=0):
    """``order``-th derivative of the smoothstep bump φ."""
    x = np.asarray(x, dtype=float)
    poly = _PHI.deriv(order) if order else _PHI
    inside = poly(np.clip(x, 0.0, 1.0))
    if order == 0:
        return np.where(x <= 0, 1.0, np.where(x >= 1, 0.0, inside))
    return np.where((x <= 0) | (x >= 1), 0.0, inside)


def phi(x):
    """φ(x) = 1 for x <= 0, 0 for x >= 1, C³ and non-increasing between."""
    return phi_derivative(x, 0)


@lru_cache(maxsize=None)
def smoothstep_sups(resolution=1e-6):
    """Certified (sup|φ'|, sup|φ''|, sup|φ'''|).

    Each is the maximum over a grid of spacing ``resolution`` on [0, 1]
    plus half a spacing times a Lipschitz bound of the derivative (the sum
    of absolute coefficients of the next derivative).
    """
    x = np.linspace(0.0, 1.0, int(round(1 / resolution)) + 1)
    out = []
    for k in (1, 2, 3):
        grid_max = float(np.abs(_PHI.deriv(k)(x)).max())
        lip = float(np.abs(_PHI.deriv(k + 1).coef).sum())
        out.append(grid_max + 0.5 * resolution * lip)
    return tuple(out)


# ---------------------------------------------------------------------------
# cylinder functionals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Chi:
    """Outer map χ: R^m -> R with derivatives and certified bounds.

    ``f``, ``grad``, ``hess`` act on arrays of shape (..., m).
    ``bounds`` is a :class:`NormBounds` valid for the composite cylinder
    functional. ``coord_grad_sup(mask)`` bounds sup Σ_{j in mask} |∂_j χ|
    (None if unbounded).
    """

    name: str
    m: int
    f: Callable
    grad: Callable
    hess: Callable
    bounds: NormBounds
    coord_grad_sup: Callable
    scale: float = 1.0
    weights: Optional[tuple] = None


def _linear(m, weights=None, scale=1.0):
    c = scale * (np.ones(m) if weights is None else np.asarray(weights, float))
    a = float(np.abs(c).sum())
    nb = NormBounds(a * _LIN_OVER_CUBIC, None, a, a, a, 0.0, 0.0, 0.0)
    return Chi("linear", m,
               lambda x: x @ c,
               lambda x: np.broadcast_to(c, x.shape).copy(),
               lambda x: np.zeros(x.shape + (m,)),
               nb,
               lambda mask: float(np.abs(c[mask]).sum()))


def _square(m, weights=None, scale=1.0):
    c = np.ones(m) if weights is None else np.asarray(weights, float)
    a = float(np.abs(c).sum())
    s = abs(scale)
    # |χ| <= s a^2 ‖w‖^2, |Dg| <= 2 s a^2 ‖w‖, ‖D²g‖ <= 2 s a^2
    nb = NormBounds(s * a * a * _SQ_OVER_CUBIC, None, None, 2 * s * a * a,
                    s * a * a, 2 * s * a * a, 2 * s * a * a, 0.0)
    outer = np.outer(c, c)
    return Chi("square", m,
               lambda x: scale * (x @ c) ** 2,
               lambda x: 2 * scale * (x @ c)[..., None] * c,
               lambda x: np.broadcast_to(2 * scale * outer, x.shape + (m,)).copy(),
               nb,
               lambda mask: None)


def _cos_mean(m, weights=None, scale=1.0):
    s = abs(scale)
    # ℓ1 sums of the k-th derivative tensor equal s |cos or sin| <= s
    nb = NormBounds(s, s, s, s, s, s, s, s)
    return Chi("cos-mean", m,
               lambda x: scale * np.cos(x.mean(axis=-1)),
               lambda x: np.repeat(-scale * np.sin(x.mean(axis=-1))[..., None] / m, m, axis=-1),
               lambda x: np.broadcast_to(
                   (-scale * np.cos(x.mean(axis=-1)) / m ** 2)[..., None, None],
                   x.shape + (m,)).copy(),
               nb,
               lambda mask: s * float(np.count_nonzero(mask)) / m)


def _smoothstep_mean(m, weights=None, scale=1.0):
    s = abs(scale)
    s1, s2, s3 = smoothstep_sups()
    nb = NormBounds(s, s, s * s1, s * s1, s * s1, s * s2, s * s2, s * s3)
    return Chi("smoothstep-mean", m,
               lambda x: scale * phi(x.mean(axis=-1)),
               lambda x: np.repeat(scale * phi_derivative(x.mean(axis=-1), 1)[..., None] / m, m, axis=-1),
               lambda x: np.broadcast_to(
                   (scale * phi_derivative(x.mean(axis=-1), 2) / m ** 2)[..., None, None],
                   x.shape + (m,)).copy(),
               nb,
               lambda mask: s * s1 * float(np.count_nonzero(mask)) / m)


CHI_CATALOG = {
    "linear": _linear,
    "square": _square,
    "cos-mean": _cos_mean,
    "smoothstep-mean": _smoothstep_mean,
}


def make_chi(name, m, weights=None, scale=1.0):
    """Build a catalog outer map. ``scale`` multiplies χ."""
    if name not in CHI_CATALOG:
        raise KeyError(f"unknown chi {name!r}; known: {sorted(CHI_CATALOG)}")
    chi = CHI_CATALOG[name](int(m), weights, float(scale))
    w = None if weights is None else tuple(float(x) for x in weights)
    return dataclasses.replace(chi, scale=float(scale), weights=w)


class CylinderFunctional(Functional):
    """g(w) = χ(w^{(k_1)}(t_1), ..., w^{(k_m)}(t_m)).

    Parameters
    ----------
    chi : Chi
    times : sequence of float in [0, 1]
    coords : sequence of int
        0-based coordinate indices.
    """

    def __init__(self, chi, times, coords):
        self.chi = chi
        self.times = np.asarray(times, dtype=float)
        self.coords = np.asarray(coords, dtype=int)
        if self.times.shape != self.coords.shape or self.times.size != chi.m:
            raise ValueError("times, coords and chi dimension must agree")

    def project(self, w):
        """(..., m) array of w^{(k_j)}(t_j)."""
        pts = path_eval(w, self.times)          # (..., m, p)
        return pts[..., np.arange(self.coords.size), self.coords]

    def eval(self, w):
        return self.chi.f(self.project(w))

    def gradient(self, w):
        return self.chi.grad(self.project(w))

    def hessian(self, w):
        return self.chi.hess(self.project(w))

    def directional_derivative(self, w, h):
        return np.sum(self.gradient(w) * self.project(h), axis=-1)

    def second_derivative(self, w, h1, h2=None):
        """D²g(w)[h1, h2]; the analytic m×m quadratic form."""
        a = self.project(h1)
        b = a if h2 is None else self.project(h2)
        return np.einsum("...i,...ij,...j->...", a, self.hessian(w), b)

    def norm_bounds(self):
        return self.chi.bounds

    def indicator_direction_bound(self, k, lam):
        return self.chi.coord_grad_sup(self.coords == k)

    def to_dict(self):
        d = {"type": "cylinder", "chi": self.chi.name,
             "times": self.times.tolist(), "coords": self.coords.tolist(),
             "scale": self.chi.scale}
        if self.chi.weights is not None:
            d["weights"] = list(self.chi.weights)
        return d


def cylinder_norm_bound(f):
    """Certified (M⁰, M¹, M²) norms of a cylinder functional.

    Entries are None when the functional is not in the class, e.g. a
    square χ has no M⁰ or M¹ bound; use M² or M instead.
    """
    nb = f.norm_bounds()
    return nb.m0, nb.m1, nb.m2


# ---------------------------------------------------------------------------
# L^r norm
# ---------------------------------------------------------------------------

def _step_integral_power(w, r):
    """∫_0^1 |w(t)|^r dt for step paths, with the scale factored out."""
    a = np.sqrt(np.sum(w.values[..., :-1, :] ** 2, axis=-1))    # (..., N)
    top = a.max(axis=-1, keepdims=True)
    safe = np.where(top > 0, top, 1.0)
    return a, safe[..., 0], np.mean((a / safe) ** r, axis=-1)


class LrNormFunctional(Functional):
    """g(w) = (∫_0^1 |w(t)|^r dt)^{1/r}, exact on step paths."""

    def __init__(self, r):
        if r < 2:
            raise ValueError("r must be at least 2")
        self.r = float(r)

    def eval(self, w):
        _, top, mean = _step_integral_power(w, self.r)
        return top * mean ** (1.0 / self.r)

    def directional_derivative(self, w, h):
        """(∫|w|^r)^{1/r-1} ∫|w|^{r-2}<w, h>; zero at w = 0."""
        r = self.r
        a, top, mean = _step_integral_power(w, r)
        inner = np.sum(w.values[..., :-1, :] * h.values[..., :-1, :], axis=-1)
        safe = np.where(mean > 0, mean, 1.0)
        num = np.mean((a / top[..., None]) ** (r - 2) * inner, axis=-1) / top
        return np.where(mean > 0, safe ** (1.0 / r - 1.0) * num, 0.0)

    def norm_bounds(self):
        # g <= ‖w‖ and ‖Dg‖ <= 1; D²g is unbounded near the origin
        return NormBounds(_LIN_OVER_CUBIC, None, 1.0, 1.0, 1.0, None, None, None)

    @property
    def first_derivative_bound(self):
        return 1.0

    def indicator_direction_bound(self, k, lam):
        return lr_direction_bound(self, k, lam)

    def to_dict(self):
        return {"type": "lr", "r": self.r}


def lr_eval(f, w):
    return f.eval(w)


def lr_direction_bound(f, k, lam):
    """(1/λ)^{1/r}: bound on |Dg(w)[e_k 1_{[j/λ², ⌈j/λ⌉/λ]}]|."""
    if lam < 1:
        raise ValueError("lambda must be at least 1")
    return (1.0 / lam) ** (1.0 / f.r)


# ---------------------------------------------------------------------------
# bumps
# ---------------------------------------------------------------------------

def _merge(w, s):
    """Return value arrays of w and s on a common grid."""
    if s is None:
        return w.values, 0.0
    if s.p != w.p:
        raise ValueError("center and path dimensions differ")
    N = math.lcm(w.N, s.N)
    return w.refine(N // w.N).values, s.refine(N // s.N).values


@dataclass(frozen=True)
class BumpNormBound:
    """Derivative layers of a bump functional.

    ``f1, f2, f3`` bound the derivatives of the inner map f = ‖·‖_{p}/η;
    ``g1, g2, g3`` those of g = φ(f - c). ``eta3_term`` is the
    sup|φ'''|/η³ part of ``g3``.
    """

    f1: float
    f2: float
    f3: float
    g1: float
    g2: float
    g3: float
    eta3_term: float

    @property
    def m0(self):
        return 1.0 + self.g1 + self.g2 + self.g3


class BumpFunctional(Functional):
    """Smooth indicator of a sup-norm ball around ``center``.

    Parameters
    ----------
    gamma : float
        Ball radius.
    eps : float in (0, 1]
        Smoothing of the Euclidean norm.
    pn : float >= 4
        Integrability exponent replacing the sup norm.
    eta : float in (0, 1]
        Slope of the transition.
    center : PathGrid, optional
        Defaults to the zero path.
    variant : {"plain", "starred"}
        The starred variant vanishes outside the ball for step paths with
        pieces of length at least ``rn``.
    theta, delta, rn : float
        Parameters of the starred variant.
    """

    def __init__(self, gamma, eps, pn, eta, center=None, variant="plain",
                 theta=None, delta=None, rn=None):
        if gamma <= 0 or not (0 < eps <= 1) or pn < 4 or not (0 < eta <= 1):
            raise ValueError("bump parameters out of range")
        if variant not in ("plain", "starred"):
            raise ValueError("variant must be 'plain' or 'starred'")
        if variant == "starred":
            if theta is None or delta is None or rn is None:
                raise ValueError("starred variant needs theta, delta and rn")
            if not (0 < theta < 1) or delta <= 0 or rn <= 0:
                raise ValueError("starred parameters out of range")
        self.gamma, self.eps, self.pn, self.eta = float(gamma), float(eps), float(pn), float(eta)
        self.center = center
        self.variant = variant
        self.theta, self.delta, self.rn = theta, delta, rn

    @property
    def offset(self):
        """Constant c with g(w) = φ((‖...‖_p - c) / η)."""
        g, e = self.gamma, self.eps
        if self.variant == "plain":
            return g * math.sqrt(1 + e * e)
        lo = min(self.delta, self.rn / 2)
        return g * math.sqrt(e * e + (1 - self.theta) ** 2) * lo ** (1 / self.pn) - self.eta

    def _q(self, w):
        wv, sv = _merge(w, self.center)
        d = (wv - sv)[..., :-1, :]
        q = (self.eps * self.gamma) ** 2 + np.sum(d * d, axis=-1)
        return q, d

    def inner_norm(self, w):
        """‖√((εγ)² + |w - s|²)‖_{p}, evaluated in scaled form."""
        q, _ = self._q(w)
        top = q.max(axis=-1)
        u = q / top[..., None]
        return np.sqrt(top) * np.mean(u ** (self.pn / 2), axis=-1) ** (1 / self.pn)

    def argument(self, w):
        return (self.inner_norm(w) - self.offset) / self.eta

    def eval(self, w):
        return phi(self.argument(w))

    def directional_derivative(self, w, h):
        p = self.pn
        q, d = self._q(w)
        hv = h.refine(q.shape[-1] // h.N).values[..., :-1, :]
        top = q.max(axis=-1)
        u = q / top[..., None]
        mean = np.mean(u ** (p / 2), axis=-1)
        num = np.mean(u ** (p / 2 - 1) * np.sum(d * hv, axis=-1), axis=-1)
        df = mean ** (1 / p - 1) * num / np.sqrt(top) / self.eta
        return phi_derivative(self.argument(w), 1) * df

    def layers(self):
        return bump_norm_bound(self)

    def norm_bounds(self):
        b = self.layers()
        return NormBounds(1.0, 1.0, b.g1, b.g1, b.g1, b.g2, b.g2, b.g3)

    def indicator_direction_bound(self, k, lam):
        """sup|φ'|/η · (1/λ)^{1/p}, from |Df(w)[h]| <= ‖h‖_p / η."""
        return smoothstep_sups()[0] / self.eta * (1.0 / lam) ** (1 / self.pn)

    def to_dict(self):
        d = {"type": "bump", "gamma": self.gamma, "eps": self.eps, "pn": self.pn,
             "eta": self.eta, "variant": self.variant,
             "center": "zero" if self.center is None else self.center.to_dict()}
        if self.variant == "starred":
            d.update(theta=self.theta, delta=self.delta, rn=self.rn)
        return d


def bump_eval(f, w):
    return f.eval(w)


def bump_norm_bound(f):
    """Assemble derivative bounds for a bump functional.

    Inner map f = ‖·‖_p/η: ‖Df‖ <= 1/η, ‖D²f‖ <= 2(p-1)/(η εγ),
    ‖D³f‖ <= 15p²/((εγ)² η). The outer chain rule uses the certified
    suprema of φ', φ'', φ''' and, for the third derivative, the six
    ordered index triples of the mixed term.
    """
    s1, s2, s3 = smoothstep_sups()
    eta, p, eg = f.eta, f.pn, f.eps * f.gamma
    f1 = 1.0 / eta
    f2 = 2.0 * (p - 1) / (eta * eg)
    f3 = 15.0 * p * p / (eg * eg * eta)
    eta3 = s3 * f1 ** 3
    g1 = s1 * f1
    g2 = s2 * f1 ** 2 + s1 * f2
    g3 = eta3 + 6.0 * s2 * f2 * f1 + s1 * f3
    return BumpNormBound(f1, f2, f3, g1, g2, g3, eta3)


# ---------------------------------------------------------------------------
# products and constants
# ---------------------------------------------------------------------------

class ProductFunctional(Functional):
    """Pointwise product of functionals with bounded derivatives.

    The k-th derivative bound is k! times the t^k coefficient of
    Π_l (a_l + d1_l t + d2_l t²/2 + d3_l t³/6), with a_l = sup|g_l|.
    """

    def __init__(self, factors):
        self.factors = list(factors)
        if not self.factors:
            raise ValueError("need at least one factor")

    def eval(self, w):
        out = self.factors[0].eval(w)
        for g in self.factors[1:]:
            out = out * g.eval(w)
        return out

    def directional_derivative(self, w, h):
        vals = [g.eval(w) for g in self.factors]
        ders = [g.directional_derivative(w, h) for g in self.factors]
        tot = 0.0
        for i, d in enumerate(ders):
            term = d
            for j, v in enumerate(vals):
                if j != i:
                    term = term * v
            tot = tot + term
        return tot

    def norm_bounds(self):
        poly = np.polynomial.Polynomial([1.0])
        for g in self.factors:
            nb = g.norm_bounds()
            if nb is None or nb.m0 is None:
                return None
            poly = poly * np.polynomial.Polynomial(
                [nb.value_sup, nb.d1, nb.d2 / 2.0, nb.lip / 6.0])
        c = np.zeros(4)
        c[: min(4, poly.coef.size)] = poly.coef[:4]
        sup, d1, d2, d3 = c[0], c[1], 2.0 * c[2], 6.0 * c[3]
        return NormBounds(sup, sup, d1, d1, d1, d2, d2, d3)


class ConstantFunctional(Functional):
    """g(w) = c; every derivative vanishes."""

    def __init__(self, c=0.0):
        self.c = float(c)

    def eval(self, w):
        return np.full(w.batch_shape, self.c) if w.batch_shape else self.c

    def directional_derivative(self, w, h):
        return 0.0

    def norm_bounds(self):
        a = abs(self.c)
        return NormBounds(a, a, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)

    def indicator_direction_bound(self, k, lam):
        return 0.0

    def to_dict(self):
        return {"type": "constant", "c": self.c}


def functional_from_dict(d):
    """Build a functional from its JSON descriptor."""
    kind = d.get("type")
    if kind == "lr":
        return LrNormFunctional(d.get("r", 2))
    if kind == "bump":
        c = d.get("center", "zero")
        center = None if c in (None, "zero") else PathGrid.from_dict(c)
        return BumpFunctional(d["gamma"], d["eps"], d["pn"], d["eta"], center,
                              d.get("variant", "plain"), d.get("theta"),
                              d.get("delta"), d.get("rn"))
    if kind == "cylinder":
        times = d["times"]
        chi = make_chi(d["chi"], len(times), d.get("weights"), d.get("scale", 1.0))
        return CylinderFunctional(chi, times, d["coords"])
    if kind == "constant":
        return ConstantFunctional(d.get("c", 0.0))
    raise ValueError(f"unknown functional type {kind!r}")
