"""Correlated Gaussian machinery: spectral square roots, correlated Brownian
paths, pre-limit Gaussian step processes and the frozen-grid coupling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import PathGrid, step_path

__all__ = [
    "CovarianceError",
    "MODULUS_CONSTANT",
    "check_covariance",
    "sym_sqrt",
    "sample_correlated_bm",
    "sample_prelimit_gaussian",
    "CoupledPair",
    "sample_coupled_pair",
    "freeze",
    "modulus_bound",
]

DENSE_CAP = 4096
MODULUS_CONSTANT = 6 * math.sqrt(5) / math.sqrt(2 * math.log(2))


class CovarianceError(ValueError):
    pass


def check_covariance(sigma):
    """Return ``sigma`` as a symmetric float matrix or raise."""
    s = np.atleast_2d(np.asarray(sigma, dtype=float))
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise CovarianceError("covariance must be a square matrix")
    if not np.all(np.isfinite(s)):
        raise CovarianceError("covariance must be finite")
    if np.max(np.abs(s - s.T), initial=0.0) > 1e-12 * max(1.0, np.abs(s).max(initial=0.0)):
        raise CovarianceError("asymmetric input")
    return 0.5 * (s + s.T)


def sym_sqrt(sigma):
    """Symmetric positive semidefinite square root.

    Eigenvalues in [-1e-12, 0) are clamped to zero.

    Raises
    ------
    CovarianceError
        "asymmetric input", or "not PSD" if an eigenvalue is below -1e-12.

    Examples
    --------
    >>> sym_sqrt(np.diag([4.0, 9.0]))
    array([[2., 0.],
           [0., 3.]])
    """
    s = check_covariance(sigma)
    vals, vecs = np.linalg.eigh(s)
    if vals.size and vals.min() < -1e-12:
        raise CovarianceError("not PSD")
    root = (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T
    return 0.5 * (root + root.T)


def _batch(size):
    return () if size is None else (int(size),)


def sample_correlated_bm(sigma, N, gen, size=None):
    """Sample Z = Σ^{1/2} B on the grid q/N, q = 0..N, with Z(0) = 0."""
    if N < 1:
        raise ValueError("grid size must be positive")
    root = sym_sqrt(sigma)
    p = root.shape[0]
    inc = gen.standard_normal(_batch(size) + (N, p)) / math.sqrt(N)
    b = np.concatenate([np.zeros(_batch(size) + (1, p)), np.cumsum(inc, axis=-2)], axis=-2)
    return PathGrid(b @ root)


def sample_prelimit_gaussian(cov_full, model, N, gen, size=None):
    """Gaussian step path with the covariance of the flattened X array.

    Coordinate k jumps at i/λ_k by Z_{i,k}, where vec(Z) ~ N(0, cov_full)
    in the row-major index p*i + k.
    """
    n, p = model.n, model.p
    if n * p > DENSE_CAP:
        raise CovarianceError("dimension overflow: dense sampling limited to 4096")
    c = check_covariance(cov_full)
    if c.shape[0] != n * p:
        raise CovarianceError("covariance size does not match the model")
    root = sym_sqrt(c)
    z = gen.standard_normal(_batch(size) + (n * p,)) @ root
    return step_path(z.reshape(_batch(size) + (n, p)), model.horizons, N)


def freeze(z, lambdas):
    """Coordinate-wise freeze: z^{(j)}(⌊λ_j t⌋/λ_j)."""
    N = z.N
    out = np.empty_like(z.values)
    q = np.arange(N + 1)
    for j, lam in enumerate(lambdas):
        if N % lam:
            raise ValueError("grid incompatible with lambdas")
        step = N // lam
        out[..., j] = z.values[..., (q // step) * step, j]
    return PathGrid(out)


@dataclass(frozen=True)
class CoupledPair:
    z: PathGrid
    a_tilde: PathGrid


def sample_coupled_pair(sigma, lambdas, N, gen, size=None):
    """Brownian path and its coordinate-wise freeze on the same draw."""
    lambdas = [int(x) for x in lambdas]
    if any(N % lam for lam in lambdas):
        raise ValueError("grid incompatible with lambdas")
    z = sample_correlated_bm(sigma, N, gen, size)
    return CoupledPair(z, freeze(z, lambdas))


def modulus_bound(lambdas, sigma):
    """(6√5/√(2 log 2)) (Σ_i log(2λ_i)/λ_i)^{1/2} (Σ_i Σ_ii)^{1/2}."""
    lam = np.asarray(lambdas, dtype=float)
    if np.any(lam < 1):
        raise ValueError("lambdas must be at least 1")
    tr = float(np.trace(np.atleast_2d(np.asarray(sigma, dtype=float))))
    return MODULUS_CONSTANT * math.sqrt(np.sum(np.log(2 * lam) / lam)) * math.sqrt(max(tr, 0.0))
