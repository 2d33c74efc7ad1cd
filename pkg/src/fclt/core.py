"""Shared domain types: dependency structure, step paths, random streams,
moment access and the test-functional interface.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "ModelValidationError",
    "DependencyModel",
    "dependency_violations",
    "validate_dependency_model",
    "local_neighborhoods",
    "IndicatorJumps",
    "DeterministicJumps",
    "RandomJumps",
    "PathGrid",
    "path_eval",
    "path_sup_norm",
    "step_path",
    "choose_grid_size",
    "RngStream",
    "MomentOracle",
    "Functional",
    "NormBounds",
    "fd_directional_derivative",
]

_MASK64 = (1 << 64) - 1


class ModelValidationError(ValueError):
    """Raised when a dependency model violates its invariants.

    The individual messages are available as ``violations``.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


# ---------------------------------------------------------------------------
# jump descriptors
# ---------------------------------------------------------------------------

class IndicatorJumps:
    """Default jumps J_{i,k} = 1_{[i/lambda_k, 1]}."""

    def is_indicator(self):
        return True

    def sample_norms(self, gen, size, n, p):
        """Return (‖J_{i,k}‖, ‖J_{i,k} - 1_{[i/λ_k,1]}‖), each (size, n, p)."""
        return np.ones((size, n, p)), np.zeros((size, n, p))


@dataclass(frozen=True)
class DeterministicJumps:
    """Fixed jump functions given on a common grid.

    Parameters
    ----------
    values : ndarray, shape (n, p, N+1)
        ``values[i, k]`` is J_{i+1,k} on the grid q/N, step convention.
    lambdas : sequence of int
        Horizons used to form the reference indicators.
    """

    values: np.ndarray
    lambdas: tuple

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 3 or not np.all(np.isfinite(v)):
            raise ValueError("jump values must be a finite (n, p, N+1) array")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "lambdas", tuple(int(x) for x in self.lambdas))

    def is_indicator(self):
        return not np.any(self._deviation())

    def _deviation(self):
        n, p, N1 = self.values.shape
        N = N1 - 1
        q = np.arange(N + 1)
        ref = np.zeros_like(self.values)
        for k, lam in enumerate(self.lambdas):
            i = np.arange(1, n + 1)[:, None]
            ref[:, k, :] = (q[None, :] * lam >= i * N).astype(float)
        return np.abs(self.values - ref).max(axis=-1)

    def sample_norms(self, gen, size, n, p):
        norms = np.abs(self.values).max(axis=-1)
        dev = self._deviation()
        return (np.broadcast_to(norms, (size, n, p)),
                np.broadcast_to(dev, (size, n, p)))


@dataclass(frozen=True)
class RandomJumps:
    """Random jump functions through a user hook.

    ``sampler(gen, size)`` must return a pair of arrays of shape
    (size, n, p): the sup norms ‖J_{i,k}‖ and the deviations
    ‖J_{i,k} - 1_{[i/λ_k,1]}‖, drawn independently of the X array.
    """

    sampler: Callable

    def is_indicator(self):
        return False

    def sample_norms(self, gen, size, n, p):
        norms, dev = self.sampler(gen, size)
        return np.asarray(norms, float), np.asarray(dev, float)


# ---------------------------------------------------------------------------
# dependency model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DependencyModel:
    """Summand array layout with local dependence neighborhoods.

    Indices are 0-based: ``neighborhoods[i]`` is the set of j such that
    X_i may depend on X_j, and must contain i.

    Parameters
    ----------
    n : int
        Number of summands (rows of the X array).
    p : int
        Number of coordinates.
    lambdas : tuple of int
        Per-coordinate horizons. In the ``"weak"`` regime there are
        ``n`` summands with ``n = N0**2`` and the horizons refer to the
        square root scale, so ``lambdas[k]**2 <= n`` is required.
    neighborhoods : tuple of frozenset
    jumps : jump descriptor, optional
        Defaults to indicators 1_{[i/λ_k, 1]}.
    regime : {"local3", "weak"}
    """

    n: int
    p: int
    lambdas: tuple
    neighborhoods: tuple
    jumps: object = field(default_factory=IndicatorJumps)
    regime: str = "local3"

    def __post_init__(self):
        object.__setattr__(self, "lambdas", tuple(int(x) for x in self.lambdas))
        object.__setattr__(self, "neighborhoods",
                           tuple(frozenset(int(j) for j in a) for a in self.neighborhoods))

    @property
    def horizons(self):
        """Number of active summands per coordinate."""
        if self.regime == "weak":
            return tuple(lam * lam for lam in self.lambdas)
        return self.lambdas


def dependency_violations(model):
    """List every invariant violated by ``model`` (empty when valid)."""
    out = []
    if model.n < 1:
        out.append("summand count must be positive")
    if model.p < 1:
        out.append("coordinate count must be positive")
    if model.regime not in ("local3", "weak"):
        out.append(f"unknown regime {model.regime!r}")
    if len(model.lambdas) != model.p:
        out.append("lambda count differs from p")
    for k, lam in enumerate(model.lambdas):
        top = model.n if model.regime == "local3" else math.isqrt(model.n)
        if lam < 1 or lam > top:
            out.append(f"lambda out of range: lambda[{k}]={lam}")
    if len(model.neighborhoods) != model.n:
        out.append("neighborhood count differs from n")
    for i, a in enumerate(model.neighborhoods):
        if i not in a:
            out.append(f"self-loop missing at i={i}")
        bad = [j for j in a if j < 0 or j >= model.n]
        if bad:
            out.append(f"neighborhood out of range at i={i}: {sorted(bad)}")
    return out


def validate_dependency_model(model):
    """Return ``model`` if valid, else raise :class:`ModelValidationError`."""
    v = dependency_violations(model)
    if v:
        raise ModelValidationError(v)
    return model


def local_neighborhoods(n, radius=1):
    """Neighborhoods {i-radius, ..., i+radius} clipped to range."""
    return tuple(frozenset(range(max(0, i - radius), min(n, i + radius + 1)))
                 for i in range(n))


# ---------------------------------------------------------------------------
# paths
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PathGrid:
    """Step path on the uniform grid q/N, q = 0..N.

    ``values`` has shape (..., N+1, p); leading axes index independent
    paths. The path equals ``values[q]`` on [q/N, (q+1)/N) and
    ``values[N]`` at t = 1.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim < 2 or v.shape[-2] < 2:
            raise ValueError("values must have shape (..., N+1, p) with N >= 1")
        if not np.all(np.isfinite(v)):
            raise ValueError("path values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def N(self):
        return self.values.shape[-2] - 1

    @property
    def p(self):
        return self.values.shape[-1]

    @property
    def batch_shape(self):
        return self.values.shape[:-2]

    def __len__(self):
        return self.values.shape[0] if self.values.ndim > 2 else 1

    def __getitem__(self, idx):
        if self.values.ndim == 2:
            raise TypeError("single path is not indexable")
        return PathGrid(self.values[idx])

    def __call__(self, t):
        return path_eval(self, t)

    def refine(self, factor):
        """Same path on a grid ``factor`` times finer."""
        factor = int(factor)
        if factor == 1:
            return self
        body = np.repeat(self.values[..., :-1, :], factor, axis=-2)
        return PathGrid(np.concatenate([body, self.values[..., -1:, :]], axis=-2))

    def to_dict(self):
        return {"grid_size": self.N, "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, d):
        pg = cls(np.asarray(d["values"], dtype=float))
        if "grid_size" in d and int(d["grid_size"]) != pg.N:
            raise ValueError("grid_size does not match values")
        return pg


def _grid_index(t, N):
    t = np.asarray(t, dtype=float)
    if np.any((t < 0) | (t > 1)) or np.any(np.isnan(t)):
        raise ValueError("t outside [0, 1]")
    # tolerance absorbs round-off of t = q/N
    return np.minimum(np.floor(t * N + 1e-9).astype(int), N)


def path_eval(w, t):
    """Value of the step path ``w`` at time(s) ``t``."""
    q = _grid_index(t, w.N)
    return w.values[..., q, :]


def path_sup_norm(w):
    """Sup over time of the Euclidean norm, per path."""
    return np.sqrt(np.sum(w.values ** 2, axis=-1)).max(axis=-1)


def step_path(jumps, lambdas, N, leading=None):
    """Build the step path sum_i jumps[..., i, k] 1_{[(i+1)/λ_k, 1]}.

    Parameters
    ----------
    jumps : ndarray, shape (..., n, p)
        Jump sizes; rows beyond λ_k are ignored for coordinate k.
    lambdas : sequence of int
    N : int
        Grid size, a multiple of every λ_k.

    Returns
    -------
    PathGrid
    """
    jumps = np.asarray(jumps, dtype=float)
    p = jumps.shape[-1]
    batch = jumps.shape[:-2]
    out = np.zeros(batch + (N + 1, p))
    for k, lam in enumerate(lambdas):
        if N % lam:
            raise ValueError("grid incompatible with lambdas")
        step = N // lam
        inc = np.zeros(batch + (N + 1,))
        inc[..., step::step] = jumps[..., :lam, k]
        out[..., k] = np.cumsum(inc, axis=-1)
    return PathGrid(out)


def choose_grid_size(lambdas, refinement=16):
    """Common grid size on which every jump time l/λ_j lies.

    Uses R * lcm(λ) when p <= 4 and lcm <= 2**20, else R * max(λ) with a
    warning, since then some jump times fall between grid points.
    """
    lambdas = [int(x) for x in lambdas]
    lcm = math.lcm(*lambdas)
    if len(lambdas) <= 4 and lcm <= 2 ** 20:
        return refinement * lcm
    warnings.warn("grid does not contain every jump time; paths are discretized",
                  RuntimeWarning, stacklevel=2)
    return refinement * max(lambdas)


# ---------------------------------------------------------------------------
# random streams
# ---------------------------------------------------------------------------

def _splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


@dataclass(frozen=True)
class RngStream:
    """Counter-based stream keyed by (seed, stream_id).

    Backed by Philox: the pair forms the 128-bit key, and the chunk index
    used by :meth:`generator` offsets the counter's top word, so chunks
    never overlap.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "seed", int(self.seed) & _MASK64)
        object.__setattr__(self, "stream_id", int(self.stream_id) & _MASK64)

    def generator(self, chunk=0):
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        counter = np.array([0, 0, 0, int(chunk) & _MASK64], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(counter=counter, key=key))

    def split(self, j):
        """Child stream ``j``; distinct from the parent and its siblings."""
        sid = _splitmix64(self.stream_id ^ _splitmix64(int(j) + 1))
        return RngStream(self.seed, sid)


def as_stream(rng):
    """Coerce an int seed or :class:`RngStream` to a stream."""
    if isinstance(rng, RngStream):
        return rng
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng))
    raise TypeError("expected an integer seed or RngStream")


# ---------------------------------------------------------------------------
# moments
# ---------------------------------------------------------------------------

class MomentOracle:
    """Access to moments of an (n, p) array of mean-zero variables.

    Parameters
    ----------
    second_moment : callable or ndarray, optional
        Either ``f(i, k, j, l) -> E[X_ik X_jl]`` (0-based) or the full
        (n*p, n*p) covariance of the row-major flattening.
    sampler : callable, optional
        ``sampler(gen, size) -> ndarray (size, n, p)`` drawing the array.
        Needed for :meth:`generic_expectation`.
    shape : (n, p), optional
        Required when ``second_moment`` is a callable.

    When no second moments are supplied they are estimated from
    ``mc_budget`` samples drawn with ``mc_seed`` and ``mode`` becomes
    ``"monte-carlo"``.
    """

    def __init__(self, second_moment=None, sampler=None, shape=None,
                 mc_budget=100_000, mc_seed=0):
        self.sampler = sampler
        self._cov = None
        self._fn = None
        if second_moment is None:
            if sampler is None:
                raise ValueError("need second moments or a sampler")
            self.mode = "monte-carlo"
            self._cov = self._estimate_cov(mc_budget, mc_seed)
            self.shape = shape or self._shape
        elif callable(second_moment):
            if shape is None:
                raise ValueError("shape is required with a moment function")
            self.mode = "analytic"
            self._fn = second_moment
            self.shape = tuple(shape)
        else:
            c = np.asarray(second_moment, dtype=float)
            if c.ndim != 2 or c.shape[0] != c.shape[1]:
                raise ValueError("covariance must be square")
            if not np.allclose(c, c.T, atol=1e-12):
                raise ValueError("second moments must be symmetric")
            self.mode = "analytic"
            self._cov = c
            if shape is None:
                raise ValueError("shape is required with a covariance matrix")
            self.shape = tuple(shape)
            if c.shape[0] != self.shape[0] * self.shape[1]:
                raise ValueError("covariance size does not match shape")

    def _estimate_cov(self, budget, seed):
        from .harness import mc_mean

        probe = self.sampler(RngStream(seed).generator(), 1)
        self._shape = probe.shape[1:]
        d = int(np.prod(self._shape))

        def outer(gen, size):
            x = self.sampler(gen, size).reshape(size, d)
            return (x[:, :, None] * x[:, None, :]).reshape(size, d * d)

        mean, _ = mc_mean(outer, budget, seed)
        c = mean.reshape(d, d)
        return 0.5 * (c + c.T)

    def second_moment(self, i, k, j, l):
        """E[X_{i,k} X_{j,l}] with 0-based indices."""
        if self._fn is not None:
            return float(self._fn(i, k, j, l))
        p = self.shape[1]
        return float(self._cov[i * p + k, j * p + l])

    def covariance(self):
        """Full (n*p, n*p) second-moment matrix."""
        if self._cov is None:
            n, p = self.shape
            c = np.empty((n * p, n * p))
            for a in range(n * p):
                for b in range(a, n * p):
                    c[a, b] = c[b, a] = self._fn(a // p, a % p, b // p, b % p)
            self._cov = c
        return self._cov

    def generic_expectation(self, expr, budget, seed, jumps=None):
        """Monte Carlo mean and standard error of ``expr``.

        ``expr(x, norms)`` receives a batch x of shape (size, n, p) and
        the jump sup norms (or None) and returns per-sample values.
        """
        if self.sampler is None:
            raise ValueError("moment unavailable: no sampler for this oracle")
        if budget < 1000:
            raise ValueError("Monte Carlo budget must be at least 1000")
        from .harness import mc_mean

        n, p = self.shape

        def fn(gen, size):
            x = self.sampler(gen, size)
            norms = None
            if jumps is not None:
                norms, _ = jumps.sample_norms(gen, size, n, p)
            return expr(x, norms)

        mean, se = mc_mean(fn, budget, seed)
        if np.ndim(mean):
            return mean, se
        return float(mean), float(se)


# ---------------------------------------------------------------------------
# test functionals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NormBounds:
    """Certified upper bounds on the summands of the function-class norms.

    ``value_growth`` bounds sup|g|/(1+‖w‖³); ``value_sup`` bounds sup|g|
    (None if unbounded). ``d1``, ``d2`` are uniform bounds on ‖Dg‖,
    ‖D²g‖ (None if unbounded); ``d1_linear``, ``d1_quadratic`` bound
    ‖Dg‖/(1+‖w‖) and ‖Dg‖/(1+‖w‖²); ``d2_linear`` bounds
    ‖D²g‖/(1+‖w‖); ``lip`` is the Lipschitz constant of D²g.
    """

    value_growth: Optional[float]
    value_sup: Optional[float]
    d1: Optional[float]
    d1_linear: Optional[float]
    d1_quadratic: Optional[float]
    d2: Optional[float]
    d2_linear: Optional[float]
    lip: Optional[float]

    @staticmethod
    def _sum(*xs):
        return None if any(x is None for x in xs) else float(sum(xs))

    @property
    def m0(self):
        return self._sum(self.value_sup, self.d1, self.d2, self.lip)

    @property
    def m1(self):
        return self._sum(self.value_growth, self.d1, self.d2, self.lip)

    @property
    def m2(self):
        return self._sum(self.value_growth, self.d1_linear, self.d2_linear, self.lip)

    @property
    def m(self):
        return self._sum(self.value_growth, self.d1_quadratic, self.d2_linear, self.lip)

    def scaled(self, c):
        c = abs(float(c))
        vals = [None if v is None else c * v for v in
                (self.value_growth, self.value_sup, self.d1, self.d1_linear,
                 self.d1_quadratic, self.d2, self.d2_linear, self.lip)]
        return NormBounds(*vals)


def fd_directional_derivative(g, w, h, step=1e-5):
    """Centered difference of ``g`` at ``w`` along unit-sup-norm ``h``."""
    nh = float(path_sup_norm(h))
    if nh == 0:
        return 0.0
    hv = h.values / nh
    up = g(PathGrid(w.values + step * hv))
    dn = g(PathGrid(w.values - step * hv))
    return (up - dn) / (2 * step)


class Functional:
    """Base class for test functionals g: D^p -> R.

    Subclasses implement :meth:`eval` (vectorized over leading batch
    axes) and may override :meth:`directional_derivative` and
    :meth:`indicator_direction_bound`. Certified norms come from
    :meth:`norm_bounds`.
    """

    def eval(self, w):
        raise NotImplementedError

    def __call__(self, w):
        return self.eval(w)

    def norm_bounds(self):
        """Return a :class:`NormBounds` or None when nothing is certified."""
        return None

    def _norm(self, name):
        nb = self.norm_bounds()
        return None if nb is None else getattr(nb, name)

    @property
    def m0_norm(self):
        return self._norm("m0")

    @property
    def m1_norm(self):
        return self._norm("m1")

    @property
    def m2_norm(self):
        return self._norm("m2")

    @property
    def m_norm(self):
        return self._norm("m")

    def norm(self, cls):
        """Certified norm for class ``cls`` in {"M", "M0", "M1", "M2"}."""
        return {"M": self.m_norm, "M0": self.m0_norm,
                "M1": self.m1_norm, "M2": self.m2_norm}[cls]

    def directional_derivative(self, w, h):
        return fd_directional_derivative(self.eval, w, h)

    def indicator_direction_bound(self, k, lam):
        return None
