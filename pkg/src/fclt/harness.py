"""Seeded parallel Monte Carlo: expectations, distances, bound verification
and rate regression.

Work is cut into chunks of 1024 samples. Chunk ``c`` draws from the
Philox stream of the caller's (seed, stream_id) with counter block ``c``,
and chunk summaries are merged in chunk order, so results are
bit-identical for any number of worker threads.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .core import as_stream

__all__ = [
    "CHUNK",
    "NonFiniteError",
    "NormClassMismatch",
    "thread_count",
    "mc_mean",
    "McEstimate",
    "estimate",
    "distance",
    "Regime",
    "VerifyReport",
    "verify",
    "RateFit",
    "rate_fit",
    "reports_to_csv",
    "reports_to_json",
]

CHUNK = 1024
CSV_COLUMNS = ("regime", "n", "p", "seed", "samples", "distance",
               "distance_se", "bound", "margin", "pass")


class NonFiniteError(FloatingPointError):
    """A sampled functional value was NaN or infinite."""

    def __init__(self, index):
        self.index = int(index)
        super().__init__(f"non-finite value at sample {self.index}")


class NormClassMismatch(ValueError):
    """The functional lacks a certified norm for the required class."""


def thread_count(threads=None):
    """Worker count: explicit argument, else FCLT_THREADS, else CPU count."""
    if threads is None:
        env = os.environ.get("FCLT_THREADS")
        threads = int(env) if env else (os.cpu_count() or 1)
    threads = int(threads)
    if threads < 1:
        raise ValueError("thread count must be positive")
    return threads


def _chunk_summary(fn, stream, c, size):
    vals = np.asarray(fn(stream.generator(chunk=c), size), dtype=float)
    if vals.shape[0] != size:
        raise ValueError("sampler returned the wrong number of values")
    vals = vals.reshape(size, -1)
    bad = ~np.isfinite(vals)
    if bad.any():
        raise NonFiniteError(c * CHUNK + int(np.argwhere(bad)[0, 0]))
    mean = vals.mean(axis=0)
    m2 = ((vals - mean) ** 2).sum(axis=0)
    return size, mean, m2


def mc_mean(fn, samples, seed, threads=None):
    """Mean and standard error of per-sample values.

    Parameters
    ----------
    fn : callable
        ``fn(gen, size)`` returns an array whose first axis has length
        ``size``; trailing axes are estimated componentwise.
    samples : int
    seed : int or RngStream

    Returns
    -------
    mean, se : float or ndarray
    """
    samples = int(samples)
    if samples < 2:
        raise ValueError("need at least two samples")
    stream = as_stream(seed)
    sizes = [min(CHUNK, samples - s) for s in range(0, samples, CHUNK)]
    workers = min(thread_count(threads), len(sizes))
    if workers == 1:
        parts = [_chunk_summary(fn, stream, c, s) for c, s in enumerate(sizes)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(lambda cs: _chunk_summary(fn, stream, *cs),
                                enumerate(sizes)))
    # Chan et al. pairwise update, strictly in chunk order
    n, mean, m2 = parts[0]
    mean = mean.copy()
    m2 = m2.copy()
    for nb, mb, m2b in parts[1:]:
        tot = n + nb
        delta = mb - mean
        mean = mean + delta * (nb / tot)
        m2 = m2 + m2b + delta ** 2 * (n * nb / tot)
        n = tot
    se = np.sqrt(m2 / (n - 1) / n)
    if mean.shape == (1,):
        return float(mean[0]), float(se[0])
    return mean, se


@dataclass(frozen=True)
class McEstimate:
    mean: float
    se: float
    samples: int
    seed: int

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["mean"]), float(d["se"]), int(d["samples"]), int(d["seed"]))


def estimate(g, sampler, samples, seed, threads=None):
    """Estimate E g(Y) where ``sampler(gen, size)`` yields a batch PathGrid."""
    if samples < 100:
        raise ValueError("need at least 100 samples")

    def fn(gen, size):
        return g(sampler(gen, size))

    mean, se = mc_mean(fn, samples, seed, threads)
    return McEstimate(float(mean), float(se), int(samples), int(as_stream(seed).seed))


def distance(g, sampler_y, sampler_z, samples, seed, seed_z=None, threads=None):
    """Estimate |E g(Y) - E g(Z)| with combined standard error.

    Both sides use ``seed`` unless ``seed_z`` is given, so identical
    samplers give exactly zero.
    """
    ey = estimate(g, sampler_y, samples, seed, threads)
    ez = estimate(g, sampler_z, samples, seed if seed_z is None else seed_z, threads)
    return McEstimate(abs(ey.mean - ez.mean), math.hypot(ey.se, ez.se),
                      int(samples), int(as_stream(seed).seed))


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------

@dataclass
class Regime:
    """Everything needed to check one theorem on one functional.

    ``report`` is the :class:`~fclt.bounds.BoundReport` whose total is
    compared to the distance of ``sampler_y`` and ``sampler_z``.
    """

    name: str
    n: int
    p: int
    sampler_y: object
    sampler_z: object
    report: object


@dataclass(frozen=True)
class VerifyReport:
    regime: str
    n: int
    p: int
    distance: McEstimate
    bound: float

    @property
    def margin(self):
        return self.bound - self.distance.mean

    @property
    def passed(self):
        return self.distance.mean + 3 * self.distance.se <= self.bound

    def to_row(self):
        return {"regime": self.regime, "n": self.n, "p": self.p,
                "seed": self.distance.seed, "samples": self.distance.samples,
                "distance": self.distance.mean, "distance_se": self.distance.se,
                "bound": self.bound, "margin": self.margin, "pass": self.passed}

    def to_dict(self):
        d = self.to_row()
        d["distance"] = self.distance.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(d["regime"], int(d["n"]), int(d["p"]),
                   McEstimate.from_dict(d["distance"]), float(d["bound"]))


def verify(g, regime, samples, seed, threads=None):
    """Compare the estimated distance with the inflated bound total.

    Raises :class:`NormClassMismatch` when ``g`` has no certified norm for
    the class the regime's bound is stated in.
    """
    from .bounds import NormBoundMissing, total

    try:
        bound = total(regime.report, g, inflate=True)
    except NormBoundMissing as exc:
        raise NormClassMismatch(f"norm class mismatch: {exc}") from None
    d = distance(g, regime.sampler_y, regime.sampler_z, samples, seed, threads=threads)
    return VerifyReport(regime.name, regime.n, regime.p, d, float(bound))


def reports_to_csv(reports):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        w.writerow(r.to_row())
    return buf.getvalue()


def reports_to_json(reports):
    return json.dumps([r.to_dict() for r in reports], indent=2)


# ---------------------------------------------------------------------------
# rates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r2: float


def rate_fit(points):
    """Least-squares line through (log n, log value)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 4:
        raise ValueError("need at least four (n, value) points")
    n, v = pts.T
    if np.any(np.diff(n) <= 0):
        raise ValueError("n must be strictly increasing")
    if np.any(v <= 0):
        raise ValueError("nonpositive values")
    x, y = np.log(n), np.log(v)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss if ss > 0 else 1.0
    return RateFit(float(slope), float(intercept), float(r2))
