"""Size-biased measure and its spine.

Under the size-biased measure each spinal individual produces a litter from
the base litter law reweighted by its sum ``W_1``, and the next spinal
individual is chosen among its children with probability proportional to
the weights.  The steps ``(Pi_k / Pi_{k-1}, Q_k, |I_k|)`` are therefore
i.i.d., which is what :func:`sample_spines` simulates.

Size-biased litters come from a law's own direct sampler when it has one,
by rejection when the litter sum has a known bound, and by self-normalized
importance weighting otherwise.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import stats

from ._stats import (Estimate, effective_sample_size, mean_se, offsets_from_sizes,
                     segment_sums, weighted_mean_se)
from .errors import DomainError, NonPositiveLitter, PreconditionError
from .population import DEFAULT_CAP, simulate_ensemble
from .streams import substream

__all__ = [
    "SpinePath",
    "SpineSample",
    "DualityResult",
    "BoundCheck",
    "sample_spine",
    "sample_spines",
    "spine_duality_check",
    "theta_tilt_weight",
    "concave_bound_check",
    "step_iid_check",
]

SPINE_TAG = 7


@dataclass
class SpinePath:
    """One spine: ``Pi[0..n]``, ``Q[1..n]`` (stored 0-based), ``I_size[1..n]``."""

    Pi: np.ndarray
    Q: np.ndarray
    I_size: np.ndarray
    sibling_weights: list = field(default_factory=list)
    importance_weight: float = 1.0

    def rows(self, run_id=0):
        for k in range(1, self.Pi.size):
            yield (run_id, k, self.Pi[k], self.Q[k - 1], int(self.I_size[k - 1]),
                   self.importance_weight)


@dataclass
class SpineSample:
    """``reps`` independent spines of length ``n``."""

    Pi: np.ndarray        # (reps, n + 1)
    Q: np.ndarray         # (reps, n)
    I_size: np.ndarray    # (reps, n)
    weight: np.ndarray    # (reps,) importance weights, all 1 unless mode is "importance"
    mode: str

    @property
    def reps(self):
        return self.Pi.shape[0]

    @property
    def n(self):
        return self.Q.shape[1]

    @property
    def ess(self):
        return effective_sample_size(self.weight)

    def mean(self, values) -> Estimate:
        """Expectation of per-spine ``values`` under the size-biased measure."""
        if self.mode != "importance":
            return mean_se(values)
        return weighted_mean_se(values, self.weight)

    def path(self, i) -> SpinePath:
        return SpinePath(self.Pi[i], self.Q[i], self.I_size[i],
                         importance_weight=float(self.weight[i]))

    def rows(self):
        for i in range(self.reps):
            yield from self.path(i).rows(run_id=i)


@numba.njit(cache=True)
def _choose_in_segments(w, offsets, u):
    """Index of the child picked with probability ``w_i / sum(w)`` per segment.

    Returns -1 for segments with zero total weight.
    """
    k = offsets.size - 1
    out = np.empty(k, dtype=np.int64)
    for s in range(k):
        total = 0.0
        for j in range(offsets[s], offsets[s + 1]):
            total += w[j]
        if total <= 0.0:
            out[s] = -1
            continue
        target = u[s] * total
        acc = 0.0
        last = -1
        chosen = -1
        for j in range(offsets[s], offsets[s + 1]):
            if w[j] > 0.0:
                last = j
                acc += w[j]
                if acc > target:
                    chosen = j
                    break
        out[s] = chosen if chosen >= 0 else last
    return out


def _size_biased_litters(law, count, rng, bound):
    """Draw ``count`` litters from the law reweighted by their sum (rejection)."""
    parts_w, parts_s = [], []
    need = count
    m1 = law.mean_measure(1.0)
    while need > 0:
        batch = int(need * bound / max(m1, 1e-12) * 1.1) + 16
        w, sizes = law.sample_litters(batch, rng)
        sums = segment_sums(w, offsets_from_sizes(sizes))
        if np.any(sums > bound * (1 + 1e-12)):
            raise PreconditionError(f"litter sum exceeded the rejection bound {bound}")
        accept = rng.random(batch) * bound < sums
        idx = np.flatnonzero(accept)[:need]
        keep = np.zeros(batch, dtype=bool)
        keep[idx] = True
        parts_w.append(w[np.repeat(keep, sizes)])
        parts_s.append(sizes[keep])
        need -= idx.size
    return np.concatenate(parts_w), np.concatenate(parts_s)


def _has_direct(law):
    return law.sample_size_biased(1, np.random.default_rng(0)) is not None


def _resolve_mode(law, mode, bound):
    if mode is None:
        if _has_direct(law):
            mode = "direct"
        elif (bound or law.litter_bound()) is not None:
            mode = "rejection"
        else:
            mode = "importance"
    if mode == "direct":
        if not _has_direct(law):
            raise PreconditionError(f"{law.family} has no direct size-biased sampler")
    elif mode == "rejection":
        bound = bound if bound is not None else law.litter_bound()
        if bound is None:
            raise PreconditionError("rejection sampling needs a bound on the litter sum")
    elif mode != "importance":
        raise PreconditionError(f"unknown spine sampling mode {mode!r}")
    return mode, bound


def sample_spines(law, n, reps, rng, mode=None, bound=None, keep_siblings=False):
    """Simulate ``reps`` spines of length ``n``.

    ``mode`` is ``"direct"`` (the law's own size-biased sampler),
    ``"rejection"`` (exact, needs a litter-sum bound) or ``"importance"``.
    By default the first one available in that order is used.
    """
    mode, bound = _resolve_mode(law, mode, bound)
    Pi = np.ones((reps, n + 1))
    Q = np.zeros((reps, n))
    I_size = np.zeros((reps, n), dtype=np.int64)
    weight = np.ones(reps)
    siblings = [[] for _ in range(reps)] if keep_siblings else None

    for k in range(n):
        if mode == "direct":
            w, sizes = law.sample_size_biased(reps, rng)
        elif mode == "rejection":
            w, sizes = _size_biased_litters(law, reps, rng, bound)
        else:
            w, sizes = law.sample_litters(reps, rng)
        offsets = offsets_from_sizes(sizes)
        sums = segment_sums(w, offsets)
        if mode != "importance" and np.any(sums <= 0):
            raise NonPositiveLitter("size-biased litter with zero total weight")
        pick = _choose_in_segments(w, offsets, rng.random(reps))
        step = np.where(pick >= 0, w[np.maximum(pick, 0)], 0.0)
        Pi[:, k + 1] = Pi[:, k] * step
        Q[:, k] = sums
        I_size[:, k] = np.maximum(segment_sums((w > 0).astype(float), offsets) - 1, 0)
        if mode == "importance":
            weight *= sums
        if keep_siblings:
            for i in range(reps):
                lit = w[offsets[i]:offsets[i + 1]].copy()
                if pick[i] >= 0:
                    lit = np.delete(lit, pick[i] - offsets[i])
                siblings[i].append(lit[lit > 0])

    if mode == "importance":
        ess = effective_sample_size(weight)
        if ess < 0.1 * reps:
            warnings.warn(f"importance sampling effective sample size {ess:.0f} "
                          f"is below 10% of {reps} spines", RuntimeWarning, stacklevel=2)
    sample = SpineSample(Pi, Q, I_size, weight, mode)
    sample.siblings = siblings
    return sample


def sample_spine(law, n, rng, mode=None, bound=None) -> SpinePath:
    """A single spine path, including the nonspinal sibling weights."""
    s = sample_spines(law, n, 1, rng, mode, bound, keep_siblings=True)
    path = s.path(0)
    path.sibling_weights = s.siblings[0]
    return path


def theta_tilt_weight(law, path, theta, n):
    """Density ``Pi_n^{theta-1} / m(theta)^n`` of the theta-tilted measure.

    ``path`` may be a :class:`SpinePath`, a :class:`SpineSample` or an array
    of ``Pi_n`` values.
    """
    mt = law.mean_measure(theta)
    if not math.isfinite(mt):
        raise DomainError(f"m({theta}) is infinite")
    if isinstance(path, SpinePath):
        pi_n = path.Pi[n]
    elif isinstance(path, SpineSample):
        pi_n = path.Pi[:, n]
    else:
        pi_n = np.asarray(path, dtype=float)
    return pi_n ** (theta - 1.0) / mt**n


class _TimesF:
    """Picklable node function ``x -> x f(x)``."""

    def __init__(self, f):
        self.f = f

    def __call__(self, x):
        return x * self.f(x)


@dataclass
class DualityResult:
    spine: Estimate
    population: Estimate

    @property
    def combined_stderr(self):
        return math.hypot(self.spine.stderr, self.population.stderr)

    def agree(self, k=3.0):
        return abs(self.spine.value - self.population.value) <= k * self.combined_stderr + 1e-12


def spine_duality_check(law, n, f, reps, seed=0, mode=None, cap=DEFAULT_CAP) -> DualityResult:
    """Two independent estimates of ``E_hat f(Pi_n) = E sum_{|v|=n} L_v f(L_v)``."""
    spines = sample_spines(law, n, reps, substream(seed, 0, SPINE_TAG), mode)
    spine_est = spines.mean(f(spines.Pi[:, n]))
    ens = simulate_ensemble(law, n, reps, seed=seed, cap=cap,
                            node_fns={"dual": _TimesF(f)})
    pop_est = mean_se(ens.extra["dual"][:, n])
    return DualityResult(spine_est, pop_est)


@dataclass
class BoundCheck:
    lhs: Estimate
    rhs: Estimate

    @property
    def holds(self):
        se = math.hypot(self.lhs.stderr, self.rhs.stderr)
        return self.lhs.value <= self.rhs.value + 3 * se + 1e-12


def concave_bound_check(law, n, f, reps, seed=0, mode=None, cap=DEFAULT_CAP) -> BoundCheck:
    """Compare ``E_hat f(W_n)`` with ``E_hat f(sum_{k<n} Pi_k Q_{k+1})``.

    The left side is computed under the base measure as ``E W_n f(W_n)``.
    """
    ens = simulate_ensemble(law, n, reps, seed=seed, cap=cap)
    wn = ens.W[:, n]
    lhs = mean_se(wn * f(wn))
    spines = sample_spines(law, n, reps, substream(seed, 0, SPINE_TAG), mode)
    perpetuity = (spines.Pi[:, :n] * spines.Q).sum(axis=1)
    rhs = spines.mean(f(perpetuity))
    return BoundCheck(lhs, rhs)


def step_iid_check(sample: SpineSample, k1=1, k2=None):
    """Two-sample KS tests comparing spine steps ``k1`` and ``k2`` (1-based).

    Returns a dict with the KS results for the weight ratio and the litter sum.
    """
    k2 = sample.n if k2 is None else k2
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = sample.Pi[:, 1:] / sample.Pi[:, :-1]
    return {
        "ratio": stats.ks_2samp(ratio[:, k1 - 1], ratio[:, k2 - 1]),
        "Q": stats.ks_2samp(sample.Q[:, k1 - 1], sample.Q[:, k2 - 1]),
    }
