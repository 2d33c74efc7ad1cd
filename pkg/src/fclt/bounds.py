"""Explicit rate bounds, itemized and totaled.

Every report is a list of nonnegative terms. Terms flagged ``weighted``
are multiplied by the functional's norm in the report's class; the rest
(δ₇ in the n²-summand regime) enter as they are.

Expectations without closed forms (ε₁-ε₃, δ₁-δ₃) are Monte Carlo
averages with standard errors. ``total(..., inflate=True)`` adds three
standard errors to each such term before summing.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import sparse

from .core import (DeterministicJumps, IndicatorJumps, RandomJumps, as_stream,
                   validate_dependency_model)
from .gaussian import check_covariance, modulus_bound
from .harness import mc_mean

__all__ = [
    "NormBoundMissing",
    "BoundTerm",
    "BoundReport",
    "eps_terms",
    "eps_terms_independent",
    "delta_terms",
    "iid_bound",
    "ustat_bound",
    "total",
]

REGIME_NORM = {
    "local3": "M1",
    "local3-independent": "M1",
    "proposition-weak": "M1",
    "iid-local1": "M",
    "ustat": "M2",
}
BLOCK = 128


class NormBoundMissing(ValueError):
    """The functional carries no certified norm for the report's class."""


@dataclass(frozen=True)
class BoundTerm:
    name: str
    value: float
    se: float = 0.0
    paper_id: str = ""
    weighted: bool = True

    def __post_init__(self):
        if not (self.value >= 0 and math.isfinite(self.value)):
            raise ValueError(f"term {self.name} must be finite and nonnegative")


@dataclass(frozen=True)
class BoundReport:
    regime: str
    terms: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.regime not in REGIME_NORM:
            raise ValueError(f"unknown regime {self.regime!r}")
        object.__setattr__(self, "terms", tuple(self.terms))

    @property
    def norm_class(self):
        return REGIME_NORM[self.regime]

    @property
    def total(self):
        """Total at unit norm, without inflation."""
        return float(sum(t.value for t in self.terms))

    def __getitem__(self, name):
        for t in self.terms:
            if t.name == name:
                return t
        raise KeyError(name)

    def values(self):
        return {t.name: t.value for t in self.terms}

    def to_dict(self):
        return {"regime": self.regime, "g_norm_used": self.norm_class,
                "terms": [asdict(t) for t in self.terms], "total": self.total}

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d):
        return cls(d["regime"], tuple(BoundTerm(**t) for t in d["terms"]))


def total(report, g, inflate=False):
    """Norm-weighted total of ``report``.

    ``g`` is a functional (its certified norm for the report's class is
    used) or a number standing for that norm.
    """
    if isinstance(g, (int, float)):
        norm = float(g)
    else:
        norm = g.norm(report.norm_class)
        if norm is None:
            raise NormBoundMissing(f"norm bound missing: {report.norm_class}")
    weighted = unweighted = 0.0
    for t in report.terms:
        v = t.value + (3.0 * t.se if inflate else 0.0)
        if t.weighted:
            weighted += v
        else:
            unweighted += v
    return norm * weighted + unweighted


# ---------------------------------------------------------------------------
# neighborhood algebra
# ---------------------------------------------------------------------------

class _Graph:
    """Sparse incidence matrices for the sums over 𝔸_i, 𝔸_j∖𝔸_i, 𝔸_i∪𝔸_j."""

    def __init__(self, neighborhoods, n):
        nb = [sorted(a) for a in neighborhoods]
        self.A = self._incidence([a for a in nb], n)
        self.pi = np.array([i for i, a in enumerate(nb) for _ in a], dtype=int)
        self.pj = np.array([j for a in nb for j in a], dtype=int)
        sets = [set(a) for a in nb]
        diff = [sets[j] - sets[i] for i, j in zip(self.pi, self.pj)]
        union = [sets[j] | sets[i] for i, j in zip(self.pi, self.pj)]
        self.D = self._incidence(diff, n)
        self.U = self._incidence(union, n)

    @staticmethod
    def _incidence(rows, n):
        r = [a for a, s in enumerate(rows) for _ in s]
        c = [b for s in rows for b in sorted(s)]
        return sparse.csr_matrix((np.ones(len(c)), (r, c)), shape=(len(rows), n))

    @property
    def npairs(self):
        return self.pi.size


def _apply(M, y):
    """Row sums: (size, n, p) -> (rows, size, p)."""
    size, n, p = y.shape
    out = M @ y.transpose(1, 0, 2).reshape(n, size * p)
    return np.asarray(out).reshape(M.shape[0], size, p)


def _active(horizons, n):
    """Mask (n, p) of 1_{[1, λ_k]}(i) in 0-based rows."""
    return (np.arange(n)[:, None] < np.asarray(horizons)[None, :]).astype(float)


def _blocked(fn):
    """Evaluate fn(x, norms) on row blocks to bound memory."""

    def run(x, norms):
        outs = []
        for s in range(0, x.shape[0], BLOCK):
            nb = None if norms is None else norms[s:s + BLOCK]
            outs.append(fn(x[s:s + BLOCK], nb))
        return np.concatenate(outs, axis=0)

    return run


def _weighted_rows(x, norms, mask):
    y = x * mask
    return y if norms is None else y * norms


def _third_order_terms(model, oracle, budget, stream, use_norms):
    """The three Monte Carlo terms shared by ε₁-ε₃ and δ₁-δ₃."""
    n, p = model.n, model.p
    mask = _active(model.horizons, n)
    G = _Graph(model.neighborhoods, n)
    jumps = model.jumps if use_norms else None
    random_norms = use_norms and isinstance(model.jumps, RandomJumps)

    @_blocked
    def t1(x, norms):
        y = _weighted_rows(x, norms, mask)
        s = _apply(G.A, y)
        yt = y.transpose(1, 0, 2)
        # Σ_{k,l,m} Y_k² S_l² S_m² = ‖Y‖² ‖S‖⁴
        return (np.linalg.norm(yt, axis=-1) * np.sum(s * s, axis=-1)).sum(axis=0)

    @_blocked
    def t2(x, norms):
        y = _weighted_rows(x, norms, mask)
        t = _apply(G.D, y)
        l1 = np.abs(y).sum(axis=-1).T
        return (l1[G.pi] * l1[G.pj] * np.linalg.norm(t, axis=-1)).sum(axis=0)

    e1, s1 = oracle.generic_expectation(t1, budget, stream.split(0), jumps)
    e2, s2 = oracle.generic_expectation(t2, budget, stream.split(1), jumps)
    e3, s3 = _product_term(G, mask, oracle, budget, stream, jumps, random_norms)
    return (e1 / 6.0, s1 / 6.0), (e2 / 3.0, s2 / 3.0), (e3 / 3.0, s3 / 3.0)


def _product_term(G, mask, oracle, budget, stream, jumps, random_norms):
    """Σ_c E[a_c] E[b_c] over c = (i, j ∈ 𝔸_i, k, l) with a delta-method SE.

    a_c = |X_ik X_jl| 1 1 and b_c = ‖J_ik‖‖J_jl‖ ‖U_ij‖ are estimated on
    independent streams. With deterministic jump norms the (k, l) sum
    factors through the pair, so only one component per pair is kept.
    """
    sa, sb = stream.split(2), stream.split(3)

    if random_norms:
        def a_vec(x, norms):
            ax = np.abs(x * mask)
            v = ax[:, G.pi, :, None] * ax[:, G.pj, None, :]
            return v.reshape(x.shape[0], -1)

        def b_vec(x, norms):
            y = _weighted_rows(x, norms, mask)
            u = np.linalg.norm(_apply(G.U, y), axis=-1).T
            v = norms[:, G.pi, :, None] * norms[:, G.pj, None, :] * u[:, :, None, None]
            return v.reshape(x.shape[0], -1)
        a_jumps = None
    else:
        def a_vec(x, norms):
            y = _weighted_rows(x, norms, mask)
            l1 = np.abs(y).sum(axis=-1)
            return l1[:, G.pi] * l1[:, G.pj]

        def b_vec(x, norms):
            y = _weighted_rows(x, norms, mask)
            return np.linalg.norm(_apply(G.U, y), axis=-1).T
        a_jumps = jumps

    a_vec, b_vec = _blocked(a_vec), _blocked(b_vec)
    a_hat, _ = oracle.generic_expectation(a_vec, budget, sa, a_jumps)
    b_hat, _ = oracle.generic_expectation(b_vec, budget, sb, jumps)
    a_hat, b_hat = np.atleast_1d(a_hat), np.atleast_1d(b_hat)
    # each linear pass reproduces one factor's samples, so its SE is the
    # first-order contribution of that factor's noise
    _, se_a = oracle.generic_expectation(lambda x, nm: a_vec(x, nm) @ b_hat, budget, sa, a_jumps)
    _, se_b = oracle.generic_expectation(lambda x, nm: b_vec(x, nm) @ a_hat, budget, sb, jumps)
    return float(a_hat @ b_hat), math.hypot(se_a, se_b)


# ---------------------------------------------------------------------------
# second-moment terms
# ---------------------------------------------------------------------------

def _eps4(model, oracle, sigma):
    lam = model.lambdas
    out = 0.0
    for k in range(model.p):
        for l in range(model.p):
            target = sigma[k, l] / math.sqrt(lam[k] * lam[l])
            for i in range(min(lam[k], lam[l])):
                out += abs(target - oracle.second_moment(i, k, i, l))
    return 0.5 * out


def _eps5(model, oracle):
    out = 0.0
    for k in range(model.p):
        for i in range(model.lambdas[k]):
            for j in sorted(model.neighborhoods[i] - {i}):
                for l in range(model.p):
                    out += abs(oracle.second_moment(i, k, j, l))
    return 0.5 * out


def _eps7(model, oracle, budget, stream):
    """Σ_k Σ_{i≤λ_k} (E X_ik²)^{1/2} E‖J_ik - 1_{[i/λ_k,1]}‖."""
    jumps = model.jumps
    n, p = model.n, model.p
    if isinstance(jumps, IndicatorJumps):
        return 0.0, 0.0
    mask = _active(model.lambdas, n)
    rms = np.array([[math.sqrt(max(oracle.second_moment(i, k, i, k), 0.0))
                     for k in range(p)] for i in range(n)]) * mask
    if isinstance(jumps, DeterministicJumps):
        _, dev = jumps.sample_norms(None, 1, n, p)
        return float(np.sum(rms * dev[0])), 0.0

    def fn(gen, size):
        _, dev = jumps.sample_norms(gen, size, n, p)
        return np.einsum("bik,ik->b", dev, rms)

    mean, se = mc_mean(fn, budget, stream.split(4))
    return float(mean), float(se)


def _check_inputs(model, oracle, sigma, budget):
    validate_dependency_model(model)
    s = check_covariance(sigma)
    if s.shape != (model.p, model.p):
        raise ValueError("sigma must be p x p")
    if tuple(oracle.shape) != (model.n, model.p):
        raise ValueError("oracle shape does not match the model")
    if budget < 1000:
        raise ValueError("Monte Carlo budget must be at least 1000")
    return s


def eps_terms(model, oracle, sigma, budget, rng):
    """ε₁-ε₇ for locally dependent summands with jump functions.

    ε₁-ε₃ are Monte Carlo averages of the displayed expressions over
    ``oracle.sampler`` (ε₃ as a product of two separate expectations);
    ε₄, ε₅ use exact second moments; ε₆ is :func:`modulus_bound`.
    """
    s = _check_inputs(model, oracle, sigma, budget)
    if model.regime != "local3":
        raise ValueError("model is not in the local-dependence regime")
    stream = as_stream(rng)
    (e1, s1), (e2, s2), (e3, s3) = _third_order_terms(model, oracle, budget, stream, True)
    e7, s7 = _eps7(model, oracle, budget, stream)
    terms = (
        BoundTerm("eps1", e1, s1, "ε₁"),
        BoundTerm("eps2", e2, s2, "ε₂"),
        BoundTerm("eps3", e3, s3, "ε₃"),
        BoundTerm("eps4", _eps4(model, oracle, s), 0.0, "ε₄"),
        BoundTerm("eps5", _eps5(model, oracle), 0.0, "ε₅"),
        BoundTerm("eps6", modulus_bound(model.lambdas, s), 0.0, "ε₆"),
        BoundTerm("eps7", e7, s7, "ε₇"),
    )
    return BoundReport("local3", terms)


def eps_terms_independent(model, oracle, sigma, budget, rng):
    """Simplified ε terms for independent summands (𝔸_i = {i}).

    ε₂ and ε₅ vanish; ε₁ is E of the norm of the cubic tensor
    X_ik X_il X_im ‖J‖‖J‖‖J‖ and ε₃ is a sum over single rows.
    """
    s = _check_inputs(model, oracle, sigma, budget)
    if any(a != {i} for i, a in enumerate(model.neighborhoods)):
        raise ValueError("summands are not independent")
    n, p = model.n, model.p
    stream = as_stream(rng)
    mask = _active(model.lambdas, n)
    jumps = model.jumps
    random_norms = isinstance(jumps, RandomJumps)

    @_blocked
    def t1(x, norms):
        y = _weighted_rows(x, norms, mask)
        cube = y[..., :, None, None] * y[..., None, :, None] * y[..., None, None, :]
        return np.sqrt(np.sum(cube ** 2, axis=(-3, -2, -1))).sum(axis=-1)

    e1, s1 = oracle.generic_expectation(t1, budget, stream.split(0), jumps)

    sa, sb = stream.split(2), stream.split(3)
    if random_norms:
        @_blocked
        def a_vec(x, norms):
            ax = np.abs(x * mask)
            return (ax[..., :, None] * ax[..., None, :]).reshape(x.shape[0], -1)

        @_blocked
        def b_vec(x, norms):
            y = _weighted_rows(x, norms, mask)
            r = np.linalg.norm(y, axis=-1)[..., None, None]
            return (norms[..., :, None] * norms[..., None, :] * r).reshape(x.shape[0], -1)
        a_jumps = None
    else:
        @_blocked
        def a_vec(x, norms):
            l1 = np.abs(_weighted_rows(x, norms, mask)).sum(axis=-1)
            return l1 * l1

        @_blocked
        def b_vec(x, norms):
            return np.linalg.norm(_weighted_rows(x, norms, mask), axis=-1)
        a_jumps = jumps

    a_hat, _ = oracle.generic_expectation(a_vec, budget, sa, a_jumps)
    b_hat, _ = oracle.generic_expectation(b_vec, budget, sb, jumps)
    a_hat, b_hat = np.atleast_1d(a_hat), np.atleast_1d(b_hat)
    _, se_a = oracle.generic_expectation(lambda x, nm: a_vec(x, nm) @ b_hat, budget, sa, a_jumps)
    _, se_b = oracle.generic_expectation(lambda x, nm: b_vec(x, nm) @ a_hat, budget, sb, jumps)
    e3, s3 = float(a_hat @ b_hat) / 3.0, math.hypot(se_a, se_b) / 3.0

    e7, s7 = _eps7(model, oracle, budget, stream)
    terms = (
        BoundTerm("eps1", e1 / 6.0, s1 / 6.0, "ε₁"),
        BoundTerm("eps2", 0.0, 0.0, "ε₂"),
        BoundTerm("eps3", e3, s3, "ε₃"),
        BoundTerm("eps4", _eps4(model, oracle, s), 0.0, "ε₄"),
        BoundTerm("eps5", 0.0, 0.0, "ε₅"),
        BoundTerm("eps6", modulus_bound(model.lambdas, s), 0.0, "ε₆"),
        BoundTerm("eps7", e7, s7, "ε₇"),
    )
    return BoundReport("local3-independent", terms)


# ---------------------------------------------------------------------------
# n²-summand regime
# ---------------------------------------------------------------------------

def _block_moments(model, oracle):
    """C[k, l][i1, i2] = Σ_{j1 ∈ block_k(i1)} Σ_{j2 ∈ block_l(i2)} E X_j1k X_j2l.

    Block i of coordinate k holds summands iλ_k .. (i+1)λ_k - 1; only
    j2 ∈ 𝔸_j1 contribute.
    """
    lam = model.lambdas
    p = model.p
    C = {(k, l): np.zeros((lam[k], lam[l])) for k in range(p) for l in range(p)}
    for j1 in range(model.n):
        for j2 in model.neighborhoods[j1]:
            for k in range(p):
                if j1 >= lam[k] ** 2:
                    continue
                for l in range(p):
                    if j2 >= lam[l] ** 2:
                        continue
                    C[k, l][j1 // lam[k], j2 // lam[l]] += oracle.second_moment(j1, k, j2, l)
    return C


def _partial_sum_variance(model, oracle, k):
    """E[(Σ_{i≤λ_k²} X_ik)²] from the neighborhood second moments."""
    top = model.lambdas[k] ** 2
    return sum(oracle.second_moment(j1, k, j2, k)
               for j1 in range(top) for j2 in model.neighborhoods[j1] if j2 < top)


def delta_terms(model, oracle, sigma, g, budget, rng):
    """δ₁-δ₇ for the n²-summand regime with indicator jumps.

    δ₇ uses ``g.indicator_direction_bound`` and is not weighted by the
    norm of ``g``.
    """
    s = _check_inputs(model, oracle, sigma, budget)
    if model.regime != "weak":
        raise ValueError("model is not in the n²-summand regime")
    lam = model.lambdas
    p = model.p
    dirs = [g.indicator_direction_bound(k, lam[k]) for k in range(p)]
    if any(d is None for d in dirs):
        raise ValueError("functional lacks direction bound")
    stream = as_stream(rng)
    (d1, s1), (d2, s2), (d3, s3) = _third_order_terms(model, oracle, budget, stream, False)

    C = _block_moments(model, oracle)
    d4 = d5 = 0.0
    for k in range(p):
        for l in range(p):
            c = C[k, l]
            target = s[k, l] / math.sqrt(lam[k] * lam[l])
            m = min(lam[k], lam[l])
            d4 += np.abs(target - np.diag(c)[:m]).sum()
            off = np.abs(c)
            off[np.arange(m), np.arange(m)] = 0.0
            d5 += off.sum()
    d7 = sum(float(dirs[k]) * math.sqrt(max(_partial_sum_variance(model, oracle, k), 0.0))
             for k in range(p))
    terms = (
        BoundTerm("delta1", d1, s1, "δ₁"),
        BoundTerm("delta2", d2, s2, "δ₂"),
        BoundTerm("delta3", d3, s3, "δ₃"),
        BoundTerm("delta4", 0.5 * float(d4), 0.0, "δ₄"),
        BoundTerm("delta5", 0.5 * float(d5), 0.0, "δ₅"),
        BoundTerm("delta6", modulus_bound(lam, s), 0.0, "δ₆"),
        BoundTerm("delta7", d7, 0.0, "δ₇", weighted=False),
    )
    return BoundReport("proposition-weak", terms)


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------

IID_VARIANTS = ("proof", "displayed")


def iid_bound(p, n, sigma, third_abs_moments, second_abs_moments, variant="proof"):
    """Bound for i.i.d. summands with dependent components, in class M.

    ``variant="proof"`` uses the constants 6√5/√(2 log 2) and
    93/√(π log 2) on the two √(log 2n) terms, which is what the argument
    delivers and what the Σ = I simplification shows; ``"displayed"``
    swaps π and 2 in those two constants.
    """
    if variant not in IID_VARIANTS:
        raise ValueError(f"variant must be one of {IID_VARIANTS}")
    if n < 1 or p < 1:
        raise ValueError("n and p must be positive")
    s = check_covariance(sigma)
    if s.shape != (p, p):
        raise ValueError("sigma must be p x p")
    m3 = np.asarray(third_abs_moments, dtype=float).reshape(p)
    m2 = np.asarray(second_abs_moments, dtype=float).reshape(p)
    log2 = math.log(2.0)
    if variant == "proof":
        c1 = 6 * math.sqrt(5) / math.sqrt(2 * log2)
        c2 = 93 / math.sqrt(math.pi * log2)
    else:
        c1 = 6 * math.sqrt(5) / math.sqrt(math.pi * log2)
        c2 = 93 / math.sqrt(2 * log2)
    diag = np.abs(np.diag(s))
    d32 = float(np.sum(diag ** 1.5))
    rn = n ** -0.5
    lg = math.log(2 * n)
    terms = (
        BoundTerm("modulus", rn * math.sqrt(lg) * c1 * math.sqrt(float(np.trace(s))),
                  paper_id="√(log 2n) first"),
        BoundTerm("modulus-cubic", rn * math.sqrt(lg) * c2 * math.sqrt(p) * d32,
                  paper_id="√(log 2n) second"),
        BoundTerm("third-moment", rn * math.sqrt(p) * float(m3.sum()) / 6.0,
                  paper_id="third moments"),
        BoundTerm("covariance", rn * 2.0 * float(np.abs(s).sum()) * math.sqrt(float(m2.sum())) / 6.0,
                  paper_id="covariance"),
        BoundTerm("modulus-tail",
                  rn / n * lg ** 1.5 * math.sqrt(p) * 2160 / (math.sqrt(math.pi) * log2 ** 1.5) * d32,
                  paper_id="n^{-3/2} tail"),
    )
    return BoundReport("iid-local1", terms)


def ustat_bound(n, sigma_h2, sigma_w2, e_abs_w3, e_abs_w1, rtol=1e-9):
    """Bound for non-degenerate bivariate U-statistics, in class M²."""
    if not sigma_w2 > 0:
        raise ValueError("degenerate kernel")
    if sigma_h2 < 2 * sigma_w2 * (1 - rtol):
        raise ValueError("variance identity violated")
    if n < 1:
        raise ValueError("n must be positive")
    r = sigma_h2 / sigma_w2
    rn = n ** -0.5
    lg = math.sqrt(math.log(3 * n))
    sw = math.sqrt(sigma_w2)
    terms = (
        BoundTerm("log-constant", rn * 141 * lg, paper_id="141"),
        BoundTerm("log-variance-ratio", rn * 16 * r * lg, paper_id="16 σ_h²/σ_w²"),
        BoundTerm("log-residual", rn * 12 * math.sqrt(max(r - 2, 0.0)) * lg,
                  paper_id="12 (σ_h²/σ_w² - 2)^{1/2}"),
        BoundTerm("constant", rn * 43, paper_id="43"),
        BoundTerm("projection-moments",
                  rn * (e_abs_w3 + 2 * sigma_w2 * e_abs_w1) / (6 * sw ** 3),
                  paper_id="projection moments"),
    )
    return BoundReport("ustat", terms)
