"""Worked model families: m-scans exceedances under two scalings,
non-degenerate bivariate U-statistics, and i.i.d. partial sums.

Scans conventions. V_j are i.i.d. in R^p, R_{i,k} = Σ_{l<m} V_{i+l,k}
and ψ_{k,l}(d) = P(R_{d+1,k} <= a_k, R_{1,l} <= a_l) - π_k π_l, so the
k-window sits d steps after the l-window. The two regimes are

* ``"block"``: X_{i,k} = (1/n) Σ_{j≤n} 1[R_{n(i-1)+j,k} <= a_k] - π_k,
  i = 1..n, Y_n(t) = Σ_{i≤⌊nt⌋} X_i;
* ``"unit"``: X_{i,k} = (1/n)(1[R_{i,k} <= a_k] - π_k), i = 1..n²,
  Y_n(t) = Σ_{i≤⌊n²t⌋} X_i.

Both consume n² + m - 1 innovations per path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .bounds import BoundReport, BoundTerm, iid_bound, ustat_bound
from .core import (DependencyModel, ModelValidationError, MomentOracle, PathGrid,
                   as_stream, step_path, validate_dependency_model)
from .gaussian import modulus_bound, sample_correlated_bm, sym_sqrt
from .harness import Regime, mc_mean

__all__ = [
    "ENUMERATION_CAP",
    "ScansModel",
    "ScansStats",
    "scans_stats",
    "scans_pi",
    "scans_psi",
    "scans_sigma",
    "scans_sample_X",
    "scans_sample_path",
    "scans_sampler",
    "scans_dependency_model",
    "scans_moment_oracle",
    "scans_bound",
    "UKernel",
    "zero_residual",
    "KERNEL_CATALOG",
    "UStatModel",
    "UStatProjection",
    "ustat_projection",
    "ustat_paths",
    "ustat_sampler",
    "IidModel",
    "iid_moments",
    "iid_sampler",
    "scans_regime",
    "ustat_regime",
    "iid_regime",
    "model_from_dict",
]

ENUMERATION_CAP = 10 ** 6
REGIMES = ("block", "unit")
_SUB = 64   # paths per innovation block, bounds memory at n ~ 200


# ---------------------------------------------------------------------------
# m-scans exceedances
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScansModel:
    """m-scans exceedance model.

    Parameters
    ----------
    p, m, n : int
        Dimension, window length and scale, with n > m.
    a : sequence of float
        Thresholds a_k.
    support : array (K, p), optional
        Atoms of the innovation law.
    probs : array (K,), optional
        Atom probabilities, summing to 1 within 1e-12.
    sampler : callable, optional
        ``sampler(gen, shape) -> array shape + (p,)`` for non-discrete
        innovations. Used for Monte Carlo ψ when enumeration is
        unavailable.
    """

    p: int
    m: int
    n: int
    a: tuple
    support: Optional[np.ndarray] = None
    probs: Optional[np.ndarray] = None
    sampler: Optional[Callable] = None

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(float(x) for x in self.a))
        if self.support is not None:
            s = np.asarray(self.support, dtype=float)
            if s.ndim == 1:
                s = np.repeat(s[:, None], self.p, axis=1)
            object.__setattr__(self, "support", s)
        if self.probs is not None:
            object.__setattr__(self, "probs", np.asarray(self.probs, dtype=float))
        v = self.violations()
        if v:
            raise ModelValidationError(v)

    def violations(self):
        out = []
        if self.p < 1 or self.m < 1:
            out.append("p and m must be positive")
        if not self.n > self.m:
            out.append("n must exceed m")
        if len(self.a) != self.p:
            out.append("threshold count differs from p")
        if self.support is None and self.sampler is None:
            out.append("need a discrete support or a sampler")
        if self.support is not None:
            if self.probs is None or self.probs.shape != (self.support.shape[0],):
                out.append("probs must match the support")
            elif np.any(self.probs < 0) or abs(self.probs.sum() - 1.0) > 1e-12:
                out.append("probabilities must be nonnegative and sum to 1")
            if self.support.shape[1:] != (self.p,):
                out.append("support atoms must have p coordinates")
        return out

    @property
    def discrete(self):
        return self.support is not None

    def draw(self, gen, shape):
        """Innovations of shape ``shape + (p,)``."""
        shape = tuple(shape)
        if self.sampler is not None:
            return np.asarray(self.sampler(gen, shape), dtype=float)
        idx = np.searchsorted(np.cumsum(self.probs)[:-1], gen.random(shape), side="right")
        return self.support[idx]

    def to_dict(self):
        if not self.discrete:
            raise ValueError("only discrete models serialize")
        return {"p": self.p, "m": self.m, "n": self.n, "a": list(self.a),
                "support": self.support.tolist(), "probs": self.probs.tolist()}


@dataclass(frozen=True)
class ScansStats:
    """π, ψ(0..m-1) as an (m, p, p) array, Σ, and standard errors
    (zero when enumerated)."""

    pi: np.ndarray
    psi: np.ndarray
    pi_se: np.ndarray
    psi_se: np.ndarray
    exact: bool

    @property
    def sigma(self):
        return _sigma_from_psi(self.psi)


def _sigma_from_psi(psi):
    s = psi[0].copy()
    for d in range(1, psi.shape[0]):
        s += psi[d].T + psi[d]
    return 0.5 * (s + s.T)


def _window_indicators(model, v, length):
    """1[R_{i,k} <= a_k] for i = 1..length from innovations v (..., L, p)."""
    m = model.m
    if m <= 16:
        r = v[..., :length, :].copy()
        for l in range(1, m):
            r += v[..., l:l + length, :]
    else:
        c = np.cumsum(v, axis=-2)
        zero = np.zeros(c.shape[:-2] + (1, c.shape[-1]))
        c = np.concatenate([zero, c], axis=-2)
        r = c[..., m:m + length, :] - c[..., :length, :]
    return (r <= np.asarray(model.a) + 1e-12).astype(float)


def _enumerate(model, L):
    """All K^L innovation strings with their probabilities."""
    K = model.support.shape[0]
    idx = np.indices((K,) * L).reshape(L, -1).T
    w = np.prod(model.probs[idx], axis=1)
    return model.support[idx], w


def _exact_stats(model):
    m, p = model.m, model.p
    v, w = _enumerate(model, 2 * m - 1)
    ind = _window_indicators(model, v, m)     # windows 1..m
    pi = w @ ind[:, 0, :]
    psi = np.empty((m, p, p))
    for d in range(m):
        joint = np.einsum("s,sk,sl->kl", w, ind[:, d, :], ind[:, 0, :])
        psi[d] = joint - np.outer(pi, pi)
    psi[0] = 0.5 * (psi[0] + psi[0].T)
    z = np.zeros_like
    return ScansStats(pi, psi, z(pi), z(psi), True)


def _mc_stats(model, budget, seed):
    m, p = model.m, model.p

    def fn(gen, size):
        ind = _window_indicators(model, model.draw(gen, (size, 2 * m - 1)), m)
        first = ind[:, 0, :]
        joint = ind[:, :, :, None] * first[:, None, None, :]
        return np.concatenate([first, joint.reshape(size, -1)], axis=1)

    mean, se = mc_mean(fn, budget, seed)
    pi, pi_se = mean[:p], se[:p]
    joint, joint_se = mean[p:].reshape(m, p, p), se[p:].reshape(m, p, p)
    psi = joint - np.outer(pi, pi)
    # π π' carries sampling error too; first order
    cross = np.sqrt(np.outer(pi_se, pi) ** 2 + np.outer(pi, pi_se) ** 2)
    psi_se = np.sqrt(joint_se ** 2 + cross[None] ** 2)
    psi[0] = 0.5 * (psi[0] + psi[0].T)
    return ScansStats(pi, psi, pi_se, psi_se, False)


def scans_stats(model, method="auto", budget=200_000, seed=0):
    """π, ψ and Σ, by enumeration when K^(2m-1) <= 10⁶, else Monte Carlo.

    ``method`` is "auto", "exact" or "mc". Automatic Monte Carlo needs a
    user sampler; a purely discrete model beyond the cap raises
    "state explosion".
    """
    if method not in ("auto", "exact", "mc"):
        raise ValueError("method must be auto, exact or mc")
    feasible = model.discrete and model.support.shape[0] ** (2 * model.m - 1) <= ENUMERATION_CAP
    if method == "exact" or (method == "auto" and model.discrete):
        if feasible:
            return _exact_stats(model)
        if method == "exact" or model.sampler is None:
            raise ValueError("state explosion: enumeration exceeds 10^6 states")
    return _mc_stats(model, budget, seed)


def scans_pi(model, **kw):
    """π_k = P(R_{1,k} <= a_k)."""
    return scans_stats(model, **kw).pi


def scans_psi(model, d, **kw):
    """ψ(d) as a p×p matrix; zero for d >= m (disjoint windows)."""
    if d < 0:
        raise ValueError("lag must be nonnegative")
    if d >= model.m:
        return np.zeros((model.p, model.p))
    return scans_stats(model, **kw).psi[d]


def scans_sigma(model, **kw):
    """Σ_{k,l} = ψ_{k,l}(0) + Σ_{d=1}^{m-1} (ψ_{l,k}(d) + ψ_{k,l}(d))."""
    return scans_stats(model, **kw).sigma


def _check_regime(regime):
    if regime not in REGIMES:
        raise ValueError(f"regime must be one of {REGIMES}")


def scans_sample_X(model, regime, gen, size, pi=None):
    """Summand array, (size, n, p) for "block" and (size, n², p) for "unit"."""
    _check_regime(regime)
    n, m, p = model.n, model.m, model.p
    pi = scans_pi(model) if pi is None else np.asarray(pi)
    rows = n if regime == "block" else n * n
    out = np.empty((size, rows, p))
    for s in range(0, size, _SUB):
        b = min(_SUB, size - s)
        ind = _window_indicators(model, model.draw(gen, (b, n * n + m - 1)), n * n)
        if regime == "block":
            out[s:s + b] = ind.reshape(b, n, n, p).mean(axis=2) - pi
        else:
            out[s:s + b] = (ind - pi) / n
    return out


def scans_sample_path(model, regime, gen, size=None, pi=None, N=None):
    """Y_n on the grid q/N (default N = n, or n² in the unit regime)."""
    n, p = model.n, model.p
    x = scans_sample_X(model, regime, gen, 1 if size is None else int(size), pi)
    lam = n if regime == "block" else n * n
    N = lam if N is None else int(N)
    w = step_path(x, (lam,) * p, N)
    return w[0] if size is None else w


def scans_sampler(model, regime, N=None, stats=None):
    """``(gen, size) -> PathGrid`` for Y_n with π computed once."""
    pi = (stats or scans_stats(model)).pi

    def sample(gen, size):
        return scans_sample_path(model, regime, gen, size, pi, N)

    return sample


def scans_dependency_model(model, regime):
    """Neighborhoods {i-1, i, i+1} for blocks, {|i-j| < m} for units."""
    _check_regime(regime)
    n, p = model.n, model.p
    if regime == "block":
        nb = tuple(frozenset(range(max(0, i - 1), min(n, i + 2))) for i in range(n))
        dm = DependencyModel(n, p, (n,) * p, nb)
    else:
        rows, m = n * n, model.m
        nb = tuple(frozenset(range(max(0, i - m + 1), min(rows, i + m))) for i in range(rows))
        dm = DependencyModel(rows, p, (n,) * p, nb, regime="weak")
    return validate_dependency_model(dm)


def _lag_sums(psi, n):
    """Σ_d (1 - d/n)(ψ_lk(d) + ψ_kl(d)) and Σ_d d ψ(d) as p×p arrays."""
    m = psi.shape[0]
    tri = sum((1 - d / n) * (psi[d].T + psi[d]) for d in range(1, m)) if m > 1 else 0 * psi[0]
    lin = sum(d * psi[d] for d in range(1, m)) if m > 1 else 0 * psi[0]
    return tri, lin


def scans_moment_oracle(model, regime, stats=None, mc_pi=None):
    """Exact second moments of the summand array, with its sampler.

    With the window of coordinate l after that of k by e steps the
    covariance of the indicators is ψ_{l,k}(e).
    """
    _check_regime(regime)
    st = stats or scans_stats(model)
    psi, n, m, p = st.psi, model.n, model.m, model.p
    if regime == "block":
        tri, lin = _lag_sums(psi, n)
        same = (psi[0] + tri) / n
        nxt = lin / n ** 2       # E X_{i,k} X_{i+1,l} = (1/n²) Σ e ψ_{l,k}(e)

        def second(i, k, j, l):
            if i == j:
                return same[k, l]
            if j == i + 1:
                return nxt[l, k]
            if i == j + 1:
                return nxt[k, l]
            return 0.0
        rows = n
    else:
        def second(i, k, j, l):
            e = j - i
            if abs(e) >= m:
                return 0.0
            return (psi[e, l, k] if e >= 0 else psi[-e, k, l]) / n ** 2
        rows = n * n

    def sampler(gen, size):
        return scans_sample_X(model, regime, gen, size, st.pi)

    return MomentOracle(second, sampler, shape=(rows, p))


def _scans_terms(psi, n, m, regime, dirs):
    """Closed-form itemized bounds as a list of (name, value, paper_id, weighted)."""
    p = psi.shape[1]
    diag = lambda d: np.diag(psi[d])
    tri, lin = _lag_sums(psi, n)
    quad = (1.0 / (2 * n)) * float(np.abs(lin + lin.T).sum())
    off = (1.0 / n) * float(np.abs(lin).sum())
    sig = _sigma_from_psi(psi)
    mod = modulus_bound((n,) * p, sig)
    if regime == "block":
        v = diag(0) + np.diag(tri)
        s3 = float(np.sum(np.sqrt(np.clip(v, 0, None)))) ** 3
        rn = 1.0 / math.sqrt(n)
        return [("eps1", 1.5 * rn * s3, "ε₁", True),
                ("eps2", (2.0 / 3.0) * rn * s3, "ε₂", True),
                ("eps3", 2.0 * rn * s3, "ε₃", True),
                ("eps4", quad, "ε₄", True),
                ("eps5", off, "ε₅", True),
                ("eps6", mod, "ε₆", True),
                ("eps7", 0.0, "ε₇", True)]
    s3 = float(np.sum(np.sqrt(np.clip(diag(0), 0, None)))) ** 3
    c = m * m / n
    var = diag(0) + 2 * sum((1 - d / n ** 2) * diag(d) for d in range(1, m)) if m > 1 else diag(0)
    d7 = float(np.sum(np.asarray(dirs) * np.sqrt(np.clip(var, 0, None))))
    return [("delta1", (2.0 / 3.0) * c * s3, "δ₁", True),
            ("delta2", c * s3, "δ₂", True),
            ("delta3", 2.0 * c * s3, "δ₃", True),
            ("delta4", quad, "δ₄", True),
            ("delta5", off, "δ₅", True),
            ("delta6", mod, "δ₆", True),
            ("delta7", d7, "δ₇", False)]


def scans_bound(model, regime, g=None, stats=None):
    """Itemized closed-form bound for either scaling.

    The unit regime needs ``g`` for the direction bounds in δ₇. With
    Monte Carlo ψ each term carries a delta-method standard error.
    """
    _check_regime(regime)
    st = stats or scans_stats(model)
    n, m, p = model.n, model.m, model.p
    dirs = np.zeros(p)
    if regime == "unit":
        got = None if g is None else [g.indicator_direction_bound(k, n) for k in range(p)]
        if got is None or any(x is None for x in got):
            raise ValueError("functional lacks direction bound")
        dirs = np.asarray(got, dtype=float)
    base = _scans_terms(st.psi, n, m, regime, dirs)
    ses = np.zeros(len(base))
    if not st.exact:
        # central differences in each ψ entry, entries treated as independent
        flat = st.psi.ravel()
        var = np.zeros(len(base))
        for idx in np.flatnonzero(st.psi_se.ravel() > 0):
            h = max(1e-7, 1e-4 * abs(flat[idx]))
            up, dn = flat.copy(), flat.copy()
            up[idx] += h
            dn[idx] -= h
            tu = _scans_terms(up.reshape(st.psi.shape), n, m, regime, dirs)
            td = _scans_terms(dn.reshape(st.psi.shape), n, m, regime, dirs)
            grad = np.array([(a[1] - b[1]) / (2 * h) for a, b in zip(tu, td)])
            var += (grad * st.psi_se.ravel()[idx]) ** 2
        ses = np.sqrt(var)
    terms = tuple(BoundTerm(name, float(val), float(se), pid, w)
                  for (name, val, pid, w), se in zip(base, ses))
    return BoundReport("local3" if regime == "block" else "proposition-weak", terms)


# ---------------------------------------------------------------------------
# U-statistics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UKernel:
    """Symmetric kernel h with optional projection w and residual
    r = h - w(x) - w(y), plus exact moments under N(0, 1) inputs."""

    name: str
    h: Callable
    w: Optional[Callable] = None
    residual: Optional[Callable] = None
    moments: Optional[dict] = None


def zero_residual(x, y):
    """Residual of a projection-exact kernel."""
    return np.zeros(np.broadcast_shapes(np.shape(x), np.shape(y)))


_EW1 = math.sqrt(2 / math.pi)
KERNEL_CATALOG = {
    "sum": UKernel("sum", lambda x, y: x + y, lambda x: x, zero_residual,
                   {"sigma_w2": 1.0, "sigma_h2": 2.0, "e_abs_w1": _EW1, "e_abs_w3": 2 * _EW1}),
    "product": UKernel("product", lambda x, y: x * y, lambda x: 0.0 * x, lambda x, y: x * y,
                       {"sigma_w2": 0.0, "sigma_h2": 1.0, "e_abs_w1": 0.0, "e_abs_w3": 0.0}),
    "sum-plus-product": UKernel("sum-plus-product", lambda x, y: x + y + x * y, lambda x: x,
                                lambda x, y: x * y,
                                {"sigma_w2": 1.0, "sigma_h2": 3.0, "e_abs_w1": _EW1,
                                 "e_abs_w3": 2 * _EW1}),
}


def _std_normal(gen, shape):
    return gen.standard_normal(shape)


@dataclass(frozen=True)
class UStatModel:
    """U-statistic model: kernel, i.i.d. input sampler and horizon n.

    Catalog kernels assume standard normal inputs.
    """

    kernel: UKernel
    n: int
    sampler: Callable = _std_normal

    def __post_init__(self):
        if isinstance(self.kernel, str):
            if self.kernel not in KERNEL_CATALOG:
                raise KeyError(f"unknown kernel {self.kernel!r}; known: {sorted(KERNEL_CATALOG)}")
            object.__setattr__(self, "kernel", KERNEL_CATALOG[self.kernel])
        if self.n < 2:
            raise ModelValidationError(["n must be at least 2"])

    def check_symmetry(self, gen, size=1000):
        x, y = self.sampler(gen, size), self.sampler(gen, size)
        return float(np.max(np.abs(self.kernel.h(x, y) - self.kernel.h(y, x))))


@dataclass(frozen=True)
class UStatProjection:
    sigma_w2: float
    sigma_h2: float
    e_abs_w1: float
    e_abs_w3: float
    se: dict = field(default_factory=dict)


def ustat_projection(model, budget=10_000, rng=0, outer=2000):
    """σ_w², σ_h², E|w|, E|w|³ for the model's kernel.

    Exact for catalog kernels with the default sampler; with an analytic
    w the moments are Monte Carlo over ``budget`` draws; otherwise w is
    itself an inner average of ``budget`` kernel evaluations at each of
    ``outer`` points.
    """
    k = model.kernel
    if k.moments is not None and model.sampler is _std_normal:
        mo = dict(k.moments)
        se = {key: 0.0 for key in mo}
    else:
        stream = as_stream(rng)

        def hfn(gen, size):
            return k.h(model.sampler(gen, size), model.sampler(gen, size))

        h_mean, _ = mc_mean(hfn, budget, stream.split(0))
        h2, h2_se = mc_mean(lambda g, s: hfn(g, s) ** 2, budget, stream.split(0))

        if k.w is not None:
            def wfn(gen, size):
                w = k.w(model.sampler(gen, size))
                return np.stack([w, w * w, np.abs(w), np.abs(w) ** 3], axis=1)
            wm, wse = mc_mean(wfn, budget, stream.split(1))
        else:
            def wfn(gen, size):
                x = model.sampler(gen, size)
                inner = model.sampler(gen, (budget,))
                w = np.array([np.mean(k.h(inner, xi)) for xi in x])
                return np.stack([w, w * w, np.abs(w), np.abs(w) ** 3], axis=1)
            wm, wse = mc_mean(wfn, outer, stream.split(1))
        mo = {"sigma_w2": float(wm[1] - wm[0] ** 2), "sigma_h2": float(h2 - h_mean ** 2),
              "e_abs_w1": float(wm[2]), "e_abs_w3": float(wm[3])}
        se = {"sigma_w2": float(wse[1]), "sigma_h2": float(h2_se),
              "e_abs_w1": float(wse[2]), "e_abs_w3": float(wse[3])}
    if mo["sigma_w2"] <= 3 * se["sigma_w2"]:
        raise ValueError("degenerate kernel")
    return UStatProjection(mo["sigma_w2"], mo["sigma_h2"], mo["e_abs_w1"], mo["e_abs_w3"], se)


def _pair_prefix(r, x):
    """Σ_{i1<i2<=l} r(x_i1, x_i2) for l = 1..n, batched over rows of x."""
    rij = r(x[:, :, None], x[:, None, :])
    upper = np.triu(rij, k=1)
    return np.cumsum(upper.sum(axis=1), axis=1)


def ustat_paths(model, gen, size=None, R=1, sigma_w=None):
    """(Y_n, Ỹ_n) on the grid q/(R n) from one input stream.

    Ỹ_n(l/n) = n^{-1/2} (l-1) Σ_{i≤l} w(X_i) / (σ_w l) and
    Y_n = Ỹ_n + n^{-1/2} Σ_{i1<i2≤l} r(X_i1, X_i2) / (σ_w l), where r is
    the kernel's residual h - w - w (identically zero for "sum").
    Both vanish for l < 2.
    """
    k = model.kernel
    if k.w is None:
        raise ValueError("analytic projection required")
    n = model.n
    if sigma_w is None:
        sw2 = k.moments["sigma_w2"] if k.moments else ustat_projection(model).sigma_w2
        sigma_w = math.sqrt(sw2)
    if not sigma_w > 0:
        raise ValueError("degenerate kernel")
    b = 1 if size is None else int(size)
    x = np.asarray(model.sampler(gen, (b, n)), dtype=float)
    l = np.arange(1, n + 1)
    scale = 1.0 / (math.sqrt(n) * sigma_w * l)
    tilde = (l - 1) * np.cumsum(k.w(x), axis=1) * scale
    if k.residual is zero_residual:
        resid = np.zeros_like(tilde)
    elif k.residual is not None:
        resid = _pair_prefix(k.residual, x) * scale
    else:
        rfun = lambda a, c: k.h(a, c) - k.w(a) - k.w(c)
        resid = _pair_prefix(rfun, x) * scale
    y = tilde + resid
    q = np.arange(R * n + 1) // R           # jump index at each grid point
    zero = np.zeros((b, 1))
    yv = np.concatenate([zero, y], axis=1)[:, q, None]
    tv = np.concatenate([zero, tilde], axis=1)[:, q, None]
    if size is None:
        return PathGrid(yv[0]), PathGrid(tv[0])
    return PathGrid(yv), PathGrid(tv)


def ustat_sampler(model, R=1, tilde=False):
    sw = math.sqrt(ustat_projection(model).sigma_w2)

    def sample(gen, size):
        y, t = ustat_paths(model, gen, size, R, sw)
        return t if tilde else y

    return sample


# ---------------------------------------------------------------------------
# i.i.d. partial sums
# ---------------------------------------------------------------------------

IID_LAWS = ("normal", "rademacher")


@dataclass(frozen=True)
class IidModel:
    """X_i = Σ^{1/2} ξ_i with i.i.d. standardized coordinates ξ."""

    sigma: np.ndarray
    n: int
    law: str = "normal"

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        object.__setattr__(self, "sigma", s)
        if self.law not in IID_LAWS:
            raise ModelValidationError([f"law must be one of {IID_LAWS}"])
        if self.n < 1:
            raise ModelValidationError(["n must be positive"])

    @property
    def p(self):
        return self.sigma.shape[0]


def iid_moments(model):
    """Per-coordinate (E|X^{(m)}|³, E|X^{(m)}|²), exact."""
    s = model.sigma
    d = np.diag(s)
    if model.law == "normal":
        return 2 * math.sqrt(2 / math.pi) * d ** 1.5, d.copy()
    root = sym_sqrt(s)
    p = model.p
    if p > 16:
        raise ValueError("state explosion: rademacher moments enumerate 2^p signs")
    signs = 1 - 2 * ((np.arange(2 ** p)[:, None] >> np.arange(p)) & 1)
    x = signs @ root
    return np.mean(np.abs(x) ** 3, axis=0), np.mean(x * x, axis=0)


def iid_sampler(model, N=None):
    n = model.n
    N = n if N is None else int(N)
    root = sym_sqrt(model.sigma)

    def sample(gen, size):
        shape = (size, n, model.p)
        xi = gen.standard_normal(shape) if model.law == "normal" else \
            1.0 - 2.0 * gen.integers(0, 2, shape)
        return step_path(xi @ root / math.sqrt(n), (n,) * model.p, N)

    return sample


# ---------------------------------------------------------------------------
# verification regimes
# ---------------------------------------------------------------------------

def _bm_sampler(sigma, N):
    def sample(gen, size):
        return sample_correlated_bm(sigma, N, gen, size)
    return sample


def scans_regime(model, regime="block", g=None, refinement=4, stats=None):
    """Y_n against Z = Σ^{1/2} B with the closed-form scans bound."""
    st = stats or scans_stats(model)
    lam = model.n if regime == "block" else model.n * model.n
    report = scans_bound(model, regime, g, st)
    return Regime(f"scans-{regime}", model.n, model.p,
                  scans_sampler(model, regime, lam, st),
                  _bm_sampler(st.sigma, lam * refinement), report)


def ustat_regime(model, refinement=4):
    pr = ustat_projection(model)
    report = ustat_bound(model.n, pr.sigma_h2, pr.sigma_w2, pr.e_abs_w3, pr.e_abs_w1)
    return Regime("ustat", model.n, 1, ustat_sampler(model, 1),
                  _bm_sampler(np.eye(1), model.n * refinement), report)


def iid_regime(model, refinement=4, variant="proof"):
    m3, m2 = iid_moments(model)
    report = iid_bound(model.p, model.n, model.sigma, m3, m2, variant)
    return Regime("iid", model.n, model.p, iid_sampler(model),
                  _bm_sampler(model.sigma, model.n * refinement), report)


def model_from_dict(d):
    """Build a model from {"scans": {...}}, {"ustat": {...}} or {"iid": {...}}."""
    if "scans" in d:
        s = d["scans"]
        return ScansModel(int(s["p"]), int(s["m"]), int(s["n"]), s["a"],
                          np.asarray(s["support"], float), np.asarray(s["probs"], float))
    if "ustat" in d:
        u = d["ustat"]
        return UStatModel(u["kernel"], int(u["n"]))
    if "iid" in d:
        i = d["iid"]
        return IidModel(np.asarray(i["sigma"], float), int(i["n"]), i.get("law", "normal"))
    raise ValueError("descriptor needs a 'scans', 'ustat' or 'iid' entry")
