"""Ornstein-Uhlenbeck Stein machinery on path space.

The OU array 𝒳(u) has i.i.d. N(0, 1) stationary coordinates; mixing its
flattening with Σ_n^{1/2} and summing against the jump functions gives
the path W_n(·, u), whose stationary law is that of the Gaussian step
process D_n. The generator is

    𝒜_n f(w) = -Df(w)[w] + E D²f(w)[D_n, D_n]

and the semigroup is T_u f(w) = E f(w e^{-u} + σ(u) D_n) with
σ²(u) = 1 - e^{-2u}.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DeterministicJumps, PathGrid, as_stream, step_path
from .gaussian import check_covariance, sample_prelimit_gaussian, sym_sqrt
from .harness import McEstimate, mc_mean

__all__ = [
    "sigma_ou",
    "OuArrayState",
    "stationary_state",
    "ou_step",
    "wn_path",
    "gaussian_dn_sampler",
    "StationaryReport",
    "check_stationary_decomposition",
    "generator_apply",
    "semigroup_apply",
    "stein_null_check",
    "generator_semigroup_check",
    "SolutionBounds",
    "solution_derivative_bounds",
]

FRESH_DRAW = 50.0


def sigma_ou(v):
    """σ(v) = (1 - e^{-2v})^{1/2}."""
    return math.sqrt(-math.expm1(-2.0 * v))


@dataclass(frozen=True)
class OuArrayState:
    """OU coordinates x (shape (..., n, p)) at time u, with mixer Σ_n^{1/2}."""

    u: float
    x: np.ndarray
    mixer: np.ndarray


def stationary_state(cov_full, n, p, gen, size=None):
    """Start the array from its N(0, 1) stationary law at u = 0."""
    mixer = sym_sqrt(cov_full)
    if mixer.shape[0] != n * p:
        raise ValueError("covariance size does not match (n, p)")
    shape = (() if size is None else (int(size),)) + (n, p)
    return OuArrayState(0.0, gen.standard_normal(shape), mixer)


def ou_step(state, v, gen):
    """Exact OU transition over time v >= 0."""
    if v < 0:
        raise ValueError("v must be nonnegative")
    if v == 0:
        return state
    noise = gen.standard_normal(state.x.shape)
    x = math.exp(-v) * state.x + sigma_ou(v) * noise
    return OuArrayState(state.u + v, x, state.mixer)


def _mixed(state):
    shape = state.x.shape
    n, p = shape[-2:]
    flat = state.x.reshape(shape[:-2] + (n * p,))
    return (flat @ state.mixer.T).reshape(shape)


def wn_path(state, model, N):
    """The path t -> Σ_i 𝒰_{i,k}(u) J_{i,k}(t), coordinate by coordinate."""
    u = _mixed(state)
    if isinstance(model.jumps, DeterministicJumps):
        J = model.jumps.values
        if J.shape[-1] != N + 1:
            raise ValueError("grid incompatible with jump functions")
        return PathGrid(np.einsum("...ik,ikq->...qk", u, J))
    return step_path(u, model.horizons, N)


def gaussian_dn_sampler(cov_full, model, N):
    """Sampler ``(gen, size) -> PathGrid`` for the Gaussian step process D_n."""
    c = check_covariance(cov_full)

    def sample(gen, size):
        return sample_prelimit_gaussian(c, model, N, gen, size)

    return sample


# ---------------------------------------------------------------------------
# stationary decomposition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StationaryReport:
    """Entrywise comparison of two covariance matrices.

    ``band`` holds 3 standard errors per entry; ``passed`` means every
    deviation lies within its band.
    """

    empirical: np.ndarray
    target: np.ndarray
    se: np.ndarray

    @property
    def deviation(self):
        return np.abs(self.empirical - self.target)

    @property
    def band(self):
        return 3.0 * self.se

    @property
    def max_deviation(self):
        return float(self.deviation.max())

    @property
    def passed(self):
        return bool(np.all(self.deviation <= self.band))


def _jump_time_operator(model, N):
    """Linear map from vec(Z) to path values at all jump-time grid points."""
    n, p = model.n, model.p
    hz = model.horizons
    qs = sorted({(i + 1) * (N // h) for h in hz for i in range(h)})
    L = np.zeros((len(qs) * p, n * p))
    for a, q in enumerate(qs):
        for k, h in enumerate(hz):
            step = N // h
            for i in range(min(h, q // step)):
                L[a * p + k, i * p + k] = 1.0
    return np.array(qs), L


def check_stationary_decomposition(model, cov_full, u, v, budget, rng, N=None):
    """Compare Cov(W(·, u+v) - e^{-v} W(·, u)) with σ²(v) Cov(D_n).

    Covariances are taken over the path values at every jump time.
    """
    if budget < 1000:
        raise ValueError("budget must be at least 1000")
    n, p = model.n, model.p
    if N is None:
        N = math.lcm(*model.horizons)
    c = check_covariance(cov_full)
    mixer = sym_sqrt(c)
    qs, L = _jump_time_operator(model, N)
    d = L.shape[0]
    target = sigma_ou(v) ** 2 * (L @ c @ L.T)

    def fn(gen, size):
        s0 = OuArrayState(0.0, gen.standard_normal((size, n, p)), mixer)
        s1 = ou_step(s0, u, gen)
        s2 = ou_step(s1, v, gen)
        w1 = wn_path(s1, model, N).values[:, qs, :].reshape(size, d)
        w2 = wn_path(s2, model, N).values[:, qs, :].reshape(size, d)
        diff = w2 - math.exp(-v) * w1
        return (diff[:, :, None] * diff[:, None, :]).reshape(size, d * d)

    mean, se = mc_mean(fn, budget, rng)
    return StationaryReport(mean.reshape(d, d), target, se.reshape(d, d))


# ---------------------------------------------------------------------------
# generator and semigroup
# ---------------------------------------------------------------------------

def _align(w, d):
    """Put a single path and a batch on a common grid."""
    N = math.lcm(w.N, d.N)
    return w.refine(N // w.N).values, d.refine(N // d.N).values


def generator_apply(f, w, dn_sampler, budget, rng):
    """𝒜_n f(w) = -Df(w)[w] + E D²f(w)[D_n, D_n], as an :class:`McEstimate`.

    ``f`` must provide analytic ``directional_derivative`` and
    ``second_derivative`` (cylinder functionals do).
    """
    drift = float(f.directional_derivative(w, w))
    hess = f.hessian(w)

    def fn(gen, size):
        a = f.project(dn_sampler(gen, size))
        return np.einsum("bi,ij,bj->b", a, hess, a)

    mean, se = mc_mean(fn, budget, rng)
    return McEstimate(-drift + float(mean), float(se), int(budget), as_stream(rng).seed)


def semigroup_apply(f, w, u, dn_sampler, budget, rng):
    """T_u f(w) = E f(w e^{-u} + σ(u) D_n), as an :class:`McEstimate`."""
    if u < 0:
        raise ValueError("u must be nonnegative")
    if u == 0:
        return McEstimate(float(f(w)), 0.0, int(budget), as_stream(rng).seed)
    a, s = math.exp(-u), sigma_ou(u)

    def fn(gen, size):
        wv, dv = _align(w, dn_sampler(gen, size))
        return f(PathGrid(a * wv + s * dv))

    mean, se = mc_mean(fn, budget, rng)
    return McEstimate(float(mean), float(se), int(budget), as_stream(rng).seed)


def stein_null_check(f, dn_sampler, samples, rng):
    """Estimate E 𝒜_n f(D_n); zero exactly under the stationary law.

    Each sample uses one draw D for the evaluation point and an
    independent D' for the inner expectation, which keeps the estimator
    unbiased.
    """

    def fn(gen, size):
        d = dn_sampler(gen, size)
        d2 = dn_sampler(gen, size)
        x = f.project(d)
        y = f.project(d2)
        drift = np.sum(f.chi.grad(x) * x, axis=-1)
        quad = np.einsum("bi,bij,bj->b", y, f.chi.hess(x), y)
        return quad - drift

    mean, se = mc_mean(fn, samples, rng)
    return McEstimate(float(mean), float(se), int(samples), as_stream(rng).seed)


@dataclass(frozen=True)
class GeneratorConsistency:
    generator: McEstimate
    quotients: tuple
    extrapolated: float
    extrapolated_se: float

    @property
    def passed(self):
        err = math.hypot(self.generator.se, self.extrapolated_se)
        return abs(self.extrapolated - self.generator.mean) <= 3.0 * err


def generator_semigroup_check(f, w, dn_sampler, budget, rng, us=(0.1, 0.01)):
    """Richardson-extrapolate (T_u f(w) - f(w))/u to u = 0 and compare
    with the generator.

    The quotient at each u is estimated with f(w) subtracted inside the
    Monte Carlo average.
    """
    stream = as_stream(rng)
    f0 = float(f(w))
    quots = []
    for j, u in enumerate(us):
        a, s = math.exp(-u), sigma_ou(u)

        def fn(gen, size, a=a, s=s, u=u):
            wv, dv = _align(w, dn_sampler(gen, size))
            return (f(PathGrid(a * wv + s * dv)) - f0) / u

        mean, se = mc_mean(fn, budget, stream.split(j))
        quots.append((u, float(mean), float(se)))
    (u1, q1, e1), (u2, q2, e2) = quots[:2]
    ext = (u1 * q2 - u2 * q1) / (u1 - u2)
    ext_se = math.hypot(u1 * e2, u2 * e1) / abs(u1 - u2)
    gen_est = generator_apply(f, w, dn_sampler, budget, stream.split(len(us)))
    return GeneratorConsistency(gen_est, tuple(quots), ext, ext_se)


# ---------------------------------------------------------------------------
# solution bounds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SolutionBounds:
    A: float
    B: float
    C: float


def solution_derivative_bounds(g_norm_M, e_norm_dn_1, e_norm_dn_2, w_norm,
                               d2_lipschitz=None):
    """Bounds on the derivatives of the Stein solution at w.

    A = ‖g‖_M (1 + 2/3 ‖w‖² + 4/3 E‖D_n‖²),
    B = ‖g‖_M (1/2 + ‖w‖/3 + E‖D_n‖/3),
    C = Lip(D²g)/3, where the Lipschitz constant defaults to ‖g‖_M
    (which dominates it).
    """
    vals = (g_norm_M, e_norm_dn_1, e_norm_dn_2, w_norm)
    if any(x < 0 for x in vals) or (d2_lipschitz is not None and d2_lipschitz < 0):
        raise ValueError("inputs must be nonnegative")
    lip = g_norm_M if d2_lipschitz is None else d2_lipschitz
    A = g_norm_M * (1 + 2.0 / 3.0 * w_norm ** 2 + 4.0 / 3.0 * e_norm_dn_2)
    B = g_norm_M * (0.5 + w_norm / 3.0 + e_norm_dn_1 / 3.0)
    return SolutionBounds(A, B, lip / 3.0)
