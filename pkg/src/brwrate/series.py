"""The series ``A``, ``A'``, ``A_hat`` and the square function ``R``.

For a path ``W_0, ..., W_N`` the limit ``W`` is replaced by the surrogate
``W_N`` and, for ``m < N``,

    A_m     = sum_{n<=m} e^{an} (W_N - W_n)
    A'_m    = sum_{k<=m} b_k (W_{k+1} - W_k),   b_k = sum_{j<=k} e^{aj}
    A_hat_m = sum_{k<=m} e^{ak} (W_{k+1} - W_k)
    R_m     = sum_{k<=m} e^{2ak} (W_{k+1} - W_k)^2

These satisfy ``A_m = b_m (W_N - W_m) + A'_{m-1}`` exactly.  The module also
estimates increment norms and their exponential rates, and checks
Burkholder's inequality, the fixed-point equation for ``A_hat`` and the
growth of ``E W_n^p``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from ._stats import Estimate, lp_norm_se, mean_se
from .errors import InsufficientData, PreconditionError
from .model import mu_p
from .population import DEFAULT_CAP, Ensemble, PopulationRun, simulate_ensemble
from .streams import substream

__all__ = [
    "b_coeff",
    "SeriesTrail",
    "build_trail",
    "build_trails",
    "RateFit",
    "fit_rate",
    "increment_l2_exact",
    "tail_l2_exact",
    "surrogate_horizon",
    "increment_lp",
    "increment_curve",
    "burkholder_constants",
    "burkholder_check",
    "fixpoint_check",
    "moment_growth",
]


def b_coeff(a, n):
    """``b_n = sum_{k=0}^n e^{ak} = (e^{a(n+1)} - 1) / (e^a - 1)``."""
    if not a > 0:
        raise PreconditionError("b_coeff needs a > 0")
    return math.expm1(a * (n + 1)) / math.expm1(a)


def _b_array(a, n):
    return np.expm1(a * (np.arange(n) + 1.0)) / math.expm1(a)


@dataclass
class SeriesTrail:
    """Partial sums of the series for one path (or a stack of paths).

    Arrays have a trailing axis of length ``N`` indexed by ``m = 0..N-1``.
    """

    a: float
    p: float
    horizon: int
    A: np.ndarray
    A_prime: np.ndarray
    A_hat: np.ndarray
    R: np.ndarray
    W: np.ndarray

    def identity_residual(self):
        """``A_m - b_m (W_N - W_m) - A'_{m-1}``, which vanishes exactly."""
        N = self.horizon
        b = _b_array(self.a, N)
        WN = self.W[..., -1:]
        prev = np.concatenate([np.zeros_like(self.A_prime[..., :1]), self.A_prime[..., :-1]],
                              axis=-1)
        return self.A - b * (WN - self.W[..., :N]) - prev

    def decomposition_residual(self):
        """``A'_m - [e^a A_hat_m - (W_{m+1} - 1)] / (e^a - 1)``, which vanishes."""
        ea = math.exp(self.a)
        rhs = (ea * self.A_hat - (self.W[..., 1:] - 1.0)) / (ea - 1.0)
        return self.A_prime - rhs


def build_trails(W, a, p=2.0) -> SeriesTrail:
    """Series partial sums for paths ``W`` of shape ``(..., N + 1)``."""
    if not a > 0:
        raise PreconditionError("the series needs a > 0")
    W = np.asarray(W, dtype=float)
    N = W.shape[-1] - 1
    if N < 2:
        raise PreconditionError("a trail needs a horizon N >= 2")
    ea = np.exp(a * np.arange(N))
    dW = np.diff(W, axis=-1)
    A = np.cumsum(ea * (W[..., -1:] - W[..., :N]), axis=-1)
    A_prime = np.cumsum(_b_array(a, N) * dW, axis=-1)
    A_hat = np.cumsum(ea * dW, axis=-1)
    R = np.cumsum(ea**2 * dW**2, axis=-1)
    return SeriesTrail(a, p, N, A, A_prime, A_hat, R, W)


def build_trail(traj, a, p=2.0) -> SeriesTrail:
    """Series partial sums for one :class:`PopulationRun` or a 1-d ``W`` path."""
    W = traj.W if isinstance(traj, (PopulationRun, Ensemble)) else traj
    return build_trails(W, a, p)


# -- rates ---------------------------------------------------------------------------

@dataclass
class RateFit:
    slope: float
    intercept: float
    slope_stderr: float
    fit_range: tuple
    predicted: float | None = None
    n_points: int = 0

    def matches(self, tol):
        return self.predicted is not None and abs(self.slope - self.predicted) <= tol


#: fewer nonzero Monte Carlo contributions than this excludes a point from fits
MIN_CONTRIBUTIONS = 30


def fit_rate(values, predicted=None, min_count=MIN_CONTRIBUTIONS) -> RateFit:
    """Weighted least-squares fit of ``log value_n = c + slope * n``.

    ``values`` holds ``(n, estimate, stderr)`` or ``(n, estimate, stderr,
    count)`` tuples; points with ``count < min_count`` are dropped.  Weights
    are ``(estimate / stderr)^2`` (delta method); noiseless input is fitted
    unweighted.
    """
    pts = []
    for v in values:
        n, est, se = v[0], float(v[1]), float(v[2])
        if len(v) > 3 and v[3] < min_count:
            continue
        if est > 0 and math.isfinite(est):
            pts.append((n, est, se))
    if len(pts) < 4:
        raise InsufficientData(f"need at least 4 usable points, got {len(pts)}")
    n = np.array([p[0] for p in pts], dtype=float)
    y = np.log([p[1] for p in pts])
    sig = np.array([p[2] / p[1] for p in pts])
    X = np.column_stack([np.ones_like(n), n])
    if np.all(sig > 0):
        w = 1.0 / sig**2
        cov = np.linalg.inv(X.T @ (w[:, None] * X))
        coef = cov @ (X.T @ (w * y))
        se = math.sqrt(cov[1, 1])
    else:
        coef = np.linalg.lstsq(X, y, rcond=None)[0]
        se = 0.0
    return RateFit(float(coef[1]), float(coef[0]), se, (int(n.min()), int(n.max())),
                   predicted, len(pts))


# -- increments ------------------------------------------------------------------------

def increment_l2_exact(law, n):
    """``E (W_{n+1} - W_n)^2 = mu_2 m(2)^n`` (orthogonal increments)."""
    return mu_p(law, 2.0).value * law.mean_measure(2.0) ** n


def tail_l2_exact(law, n, horizon=None):
    """``E (W - W_n)^2 = mu_2 m(2)^n / (1 - m(2))``, or the sum up to ``horizon``."""
    m2 = law.mean_measure(2.0)
    if horizon is None:
        if not m2 < 1:
            raise PreconditionError("E(W - W_n)^2 is infinite when m(2) >= 1")
        return mu_p(law, 2.0).value * m2**n / (1.0 - m2)
    return math.fsum(increment_l2_exact(law, k) for k in range(n, horizon))


def surrogate_horizon(law, n_compare, rel=0.01, n_max=30):
    """Smallest ``N`` whose neglected tail ``sum_{k>=N} E(dW_k)^2`` is below
    ``rel`` times ``E(W - W_n)^2`` at the largest compared ``n``."""
    m2 = law.mean_measure(2.0)
    for N in range(n_compare + 1, n_max + 1):
        if m2 ** (N - n_compare) < rel:
            return N
    return n_max


@dataclass
class IncrementEstimate:
    n: int
    scaled_increment: Estimate   # e^{pan} E|W_{n+1} - W_n|^p
    tail: Estimate               # E|W_N - W_n|^p
    nonzero: int


def _increments(ens, p, a):
    W = ens.W
    dW = np.abs(np.diff(W, axis=1)) ** p
    tail = np.abs(W[:, -1:] - W[:, :-1]) ** p
    out = []
    for n in range(W.shape[1] - 1):
        inc = mean_se(dW[:, n])
        scale = math.exp(p * a * n)
        out.append(IncrementEstimate(n, Estimate(inc.value * scale, inc.stderr * scale),
                                     mean_se(tail[:, n]), int(np.count_nonzero(dW[:, n]))))
    return out


def increment_curve(law, p, a, horizon, reps, seed=0, cap=DEFAULT_CAP, workers=1):
    """Increment estimates for every ``n < horizon`` from one ensemble."""
    if not p > 1:
        raise PreconditionError("increment norms need p > 1")
    ens = simulate_ensemble(law, horizon, reps, seed=seed, cap=cap, workers=workers)
    return _increments(ens, p, a)


def increment_lp(law, p, a, n, reps, seed=0, horizon=None, cap=DEFAULT_CAP, workers=1):
    """``e^{pan} E|W_{n+1} - W_n|^p`` and ``E|W_N - W_n|^p`` with stderrs."""
    horizon = horizon if horizon is not None else max(n + 2, surrogate_horizon(law, n))
    return increment_curve(law, p, a, horizon, reps, seed, cap, workers)[n]


# -- Burkholder ------------------------------------------------------------------------

def burkholder_constants(p):
    """``c_p = (p-1) / (18 p^{3/2})`` and ``C_p = 18 p^{3/2} / (p-1)^{1/2}``."""
    if not p > 1:
        raise PreconditionError("Burkholder constants need p > 1")
    return (p - 1) / (18 * p**1.5), 18 * p**1.5 / math.sqrt(p - 1)


@dataclass
class BurkholderResult:
    lower: Estimate    # c_p ||sqrt R||_p
    middle: Estimate   # ||A_hat||_p
    upper: Estimate    # C_p ||sqrt R||_p

    @property
    def verdict(self):
        lo_ok = self.lower.value - 3 * math.hypot(self.lower.stderr, self.middle.stderr) \
            <= self.middle.value + 1e-15
        hi_ok = self.middle.value <= self.upper.value + 3 * math.hypot(
            self.upper.stderr, self.middle.stderr) + 1e-15
        return lo_ok and hi_ok


def burkholder_check(law, p, a, N, reps, seed=0, cap=DEFAULT_CAP, workers=1):
    """``c_p ||sqrt R||_p <= ||A_hat||_p <= C_p ||sqrt R||_p`` on one replicate set."""
    c, C = burkholder_constants(p)
    ens = simulate_ensemble(law, N, reps, seed=seed, cap=cap, workers=workers)
    trail = build_trails(ens.W, a, p)
    root_r = lp_norm_se(np.sqrt(trail.R[:, -1]), p)
    mid = lp_norm_se(trail.A_hat[:, -1], p)
    return BurkholderResult(Estimate(c * root_r.value, c * root_r.stderr), mid,
                            Estimate(C * root_r.value, C * root_r.stderr))


# -- fixed point -----------------------------------------------------------------------

@dataclass
class FixpointResult:
    statistic: float
    pvalue: float
    lhs_mean: Estimate
    rhs_mean: Estimate
    lhs: np.ndarray = field(repr=False)
    rhs: np.ndarray = field(repr=False)


def fixpoint_check(law, p, a, N, reps, seed=0, cap=DEFAULT_CAP, workers=1):
    """Two-sample KS test of ``A_hat =d e^a sum_i L_i A_hat^{(i)} + W_1 - 1``.

    The left sample is ``A_hat_{N-1}`` from ``reps`` direct simulations.  The
    right side uses a fresh litter per sample and independent replicas of
    horizon ``N - 1`` for the children; with that horizon both sides have
    exactly the same law, so no truncation bias enters the comparison.
    """
    lhs_ens = simulate_ensemble(law, N, reps, seed=seed, cap=cap, workers=workers, tag=1)
    lhs = build_trails(lhs_ens.W, a, p).A_hat[:, -1]

    rng = substream(seed, 0, tag=2)
    litter, sizes = law.sample_litters(reps, rng)
    n_child = int(sizes.sum())
    if n_child:
        child_ens = simulate_ensemble(law, N - 1, n_child, seed=seed, cap=cap,
                                      workers=workers, tag=3)
        child_hat = build_trails(child_ens.W, a, p).A_hat[:, -1]
    else:
        child_hat = np.zeros(0)
    parent = np.repeat(np.arange(reps), sizes)
    weighted = np.bincount(parent, weights=litter * child_hat, minlength=reps)
    w1 = np.bincount(parent, weights=litter, minlength=reps)
    rhs = math.exp(a) * weighted + w1 - 1.0

    if np.all(lhs == 0) and np.all(rhs == 0):
        stat, pval = 0.0, 1.0
    else:
        res = stats.ks_2samp(lhs, rhs)
        stat, pval = float(res.statistic), float(res.pvalue)
    return FixpointResult(stat, pval, mean_se(lhs), mean_se(rhs), lhs, rhs)


# -- moment growth ---------------------------------------------------------------------

@dataclass
class GrowthDiagnostic:
    """Growth of ``E W_n^p``.

    ``log_slope`` is the plain weighted least-squares slope of
    ``log E W_n^p``.  ``exp_rate`` comes from fitting the envelope

        E W_n^p = 1 + scale * (1 + rho + ... + rho^(n-1)),   exp_rate = log rho,

    which solves the affine recursion ``x_{n+1} = rho x_n + c`` started at
    ``x_0 = 1``.  It grows linearly when ``rho = 1`` and like ``rho^n`` when
    ``rho > 1``, so ``exp_rate`` should be close to ``log m(p)`` once that is
    nonnegative.  Constant moments give ``exp_rate = -inf``.  ``bounded`` means the fitted rate is below zero by three
    standard errors.
    """

    p: float
    n: np.ndarray
    estimates: list
    log_slope: float
    exp_rate: float
    exp_rate_stderr: float
    scale: float
    predicted_rate: float
    bounded: bool


def _geometric_sum(n, lr):
    n = np.asarray(n, dtype=float)
    if abs(lr) < 1e-9:
        return n * (1.0 + 0.5 * lr * (n - 1.0))
    return np.expm1(lr * n) / math.expm1(lr)


def moment_growth(law, p, n_max, reps, seed=0, n_min=1, cap=DEFAULT_CAP, workers=1,
                  ensemble=None):
    """Estimate ``E W_n^p`` for ``n <= n_max`` and fit its growth envelope.

    A precomputed ``ensemble`` may be passed to share replicates between
    several ``p``.
    """
    if not p > 1:
        raise PreconditionError("moment_growth needs p > 1")
    ens = ensemble if ensemble is not None else simulate_ensemble(
        law, n_max, reps, seed=seed, cap=cap, workers=workers)
    n_max = min(n_max, ens.n_max)
    vals = ens.W[:, : n_max + 1] ** p
    ests = [mean_se(vals[:, n]) for n in range(n_max + 1)]
    ns = np.arange(max(n_min, 1), n_max + 1)
    if ns.size < 4:
        raise InsufficientData("moment_growth needs at least 4 generations to fit")
    y = np.array([ests[n].value for n in ns])
    se = np.array([ests[n].stderr for n in ns])
    se = np.maximum(se, 1e-12 * np.maximum(y, 1.0))
    sig = se / y
    slope = float(np.polyfit(ns, np.log(y), 1, w=1.0 / sig)[0])

    if np.all(np.abs(y - 1.0) <= 1e-12 * (1.0 + se)):
        # constant moments: nothing grows, the envelope has scale 0
        return GrowthDiagnostic(p, np.arange(n_max + 1), ests, slope, -math.inf, 0.0, 0.0,
                                math.log(law.mean_measure(p)), True)

    def envelope(n, scale, lr):
        return 1.0 + scale * _geometric_sum(n, lr)

    start = (max(y[0] - 1.0, 1e-6), slope)
    try:
        (scale, lr), cov = optimize.curve_fit(envelope, ns, y, p0=start, sigma=se,
                                              absolute_sigma=True, maxfev=10_000)
        lr_se = float(math.sqrt(cov[1, 1])) if np.isfinite(cov[1, 1]) else math.inf
    except (RuntimeError, ValueError) as exc:
        raise InsufficientData(f"growth envelope fit failed: {exc}") from exc
    return GrowthDiagnostic(p, np.arange(n_max + 1), ests, slope, float(lr), lr_se,
                            float(scale), math.log(law.mean_measure(p)),
                            bool(lr + 3 * lr_se < 0))
