from __future__ import annotations

import math
from typing import NamedTuple

import numba
import numpy as np


class Estimate(NamedTuple):
    """A point estimate with its standard error (0 for exact values)."""

    value: float
    stderr: float = 0.0

    def __float__(self):
        return float(self.value)

    def within(self, target, k=3.0, atol=0.0):
        """True if ``target`` lies within ``k`` standard errors (plus ``atol``)."""
        return abs(self.value - target) <= k * self.stderr + atol


def mean_se(x) -> Estimate:
    x = np.asarray(x, dtype=float)
    n = x.size
    if n == 0:
        return Estimate(math.nan, math.nan)
    if n == 1:
        return Estimate(float(x[0]), math.inf)
    return Estimate(float(x.mean()), float(x.std(ddof=1) / math.sqrt(n)))


def weighted_mean_se(x, w) -> Estimate:
    """Self-normalized importance-sampling mean with delta-method stderr."""
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    sw = w.sum()
    if sw <= 0:
        return Estimate(math.nan, math.nan)
    mu = float((w * x).sum() / sw)
    # delta method for the ratio estimator
    var = float((w**2 * (x - mu) ** 2).sum() / sw**2)
    return Estimate(mu, math.sqrt(var))


def lp_norm_se(x, p) -> Estimate:
    """Estimate ``(E|x|^p)^{1/p}`` with a delta-method stderr."""
    m = mean_se(np.abs(x) ** p)
    if m.value <= 0:
        return Estimate(0.0, 0.0)
    norm = m.value ** (1.0 / p)
    return Estimate(norm, norm * m.stderr / (p * m.value))


def effective_sample_size(w) -> float:
    w = np.asarray(w, dtype=float)
    s2 = float((w**2).sum())
    return float(w.sum() ** 2 / s2) if s2 > 0 else 0.0


@numba.njit(cache=True)
def segment_sums(values, offsets):
    """Neumaier-compensated sums of ``values[offsets[i]:offsets[i+1]]``."""
    k = offsets.size - 1
    out = np.zeros(k)
    for i in range(k):
        s = 0.0
        c = 0.0
        for j in range(offsets[i], offsets[i + 1]):
            v = values[j]
            t = s + v
            if abs(s) >= abs(v):
                c += (s - t) + v
            else:
                c += (v - t) + s
            s = t
        out[i] = s + c
    return out


@numba.njit(cache=True)
def segment_max(values, offsets):
    k = offsets.size - 1
    out = np.zeros(k)
    for i in range(k):
        m = 0.0
        for j in range(offsets[i], offsets[i + 1]):
            if values[j] > m:
                m = values[j]
        out[i] = m
    return out


def offsets_from_sizes(sizes):
    offsets = np.zeros(len(sizes) + 1, dtype=np.int64)
    np.cumsum(sizes, out=offsets[1:])
    return offsets
