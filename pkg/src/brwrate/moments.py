"""Spectral objects of the mean measure and the L_p convergence criteria.

With ``g(r) = log m(r) / r`` and ``h(r) = r m'(r)/m(r) - log m(r)`` (so that
``g' = h / r^2``), the minimizer of ``g`` over ``r >= 1`` capped at 2 is
``theta`` and ``gamma = m(theta)^{1/theta}``.  These drive the criteria for
convergence in ``L_p`` of ``A = sum_n e^{an} (W - W_n)``:

* ``W_n -> W`` in ``L_p`` iff ``E W_1^p < inf`` and ``m(p) < 1``;
* ``1 < p < 2``: sufficient ``e^a m(r)^{1/r} < 1`` for some ``r`` in
  ``[p, 2]``, necessary ``inf_{[p,2]} e^a m(r)^{1/r} <= 1``;
* ``p >= 2``: iff ``e^a max(m(2)^{1/2}, m(p)^{1/p}) < 1``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DomainError, PreconditionError
from .model import OffspringLaw

__all__ = [
    "MomentProfile",
    "CriterionReport",
    "BoundaryWarning",
    "g_fn",
    "h_fn",
    "find_theta",
    "find_q",
    "predicted_rate",
    "check_lp",
    "check_main1",
    "check_main2",
    "analyze",
]

ROOT_TOL = 1e-10
#: |e^a inf - 1| below this is reported as an inconclusive boundary case
BOUNDARY_TOL = 1e-12


class BoundaryWarning(UserWarning):
    """A root search ended on the boundary of its bracket."""


@dataclass(frozen=True)
class MomentProfile:
    law: OffspringLaw
    domain_hint: tuple
    theta: float
    gamma: float
    interior_min: bool

    def m(self, r):
        return self.law.mean_measure(r)


@dataclass
class CriterionReport:
    """Verdicts and signed margins for one ``(law, p, a)``.

    A positive margin means the strict inequality behind the verdict holds.
    """

    p: float
    a: float | None = None
    degenerate: bool = False
    moment_finite: bool = True
    lp_converges: bool | None = None
    lp_margin: float | None = None
    main1_sufficient: bool | None = None
    main1_margin: float | None = None
    r_star: float | None = None
    main1_necessary: bool | None = None
    main1_boundary: bool = False
    sharpened_verdict: bool | None = None
    main2: bool | None = None
    main2_margin: float | None = None
    theta: float | None = None
    gamma: float | None = None
    q: float | None = None
    notes: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


# -- g, h and the minimizer -------------------------------------------------

def _law(obj):
    return obj.law if isinstance(obj, MomentProfile) else obj


def g_fn(profile, r):
    """``g(r) = log m(r) / r``.  Accepts a profile or a bare law."""
    m = _law(profile).mean_measure(r)
    if not m > 0:
        raise DomainError(f"m({r}) = {m} is not positive")
    return math.log(m) / r


def h_fn(profile, r):
    """``h(r) = r m'(r)/m(r) - log m(r)``."""
    law = _law(profile)
    m = law.mean_measure(r)
    if not m > 0:
        raise DomainError(f"m({r}) = {m} is not positive")
    return r * law.mean_measure_derivative(r) / m - math.log(m)


def _bisect(f, lo, hi, tol=ROOT_TOL, max_iter=200):
    """Root of ``f`` on ``[lo, hi]`` where ``f(lo)`` and ``f(hi)`` differ in sign."""
    flo = f(lo)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0 or abs(fm) < tol and hi - lo < 1e-13:
            return mid
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    return 0.5 * (lo + hi)


def _golden_min(f, lo, hi, tol=1e-12):
    invphi = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    # the endpoints are candidates too: the minimum of a monotone piece sits there
    best = min((f(x), x) for x in (lo, 0.5 * (a + b), hi))
    return best[1]


def _minimize_unimodal(f, lo, hi):
    """Minimize a unimodal ``f`` on ``[lo, hi]``; dense grid if unimodality fails."""
    x = _golden_min(f, lo, hi)
    grid = np.linspace(lo, hi, 2001)
    vals = np.array([f(t) for t in grid])
    if f(x) <= vals.min() + 1e-12:
        return x
    return float(grid[int(np.argmin(vals))])


def find_theta(law) -> MomentProfile:
    """Locate ``theta = 2 ^ argmin_{r>=1} g(r)`` and ``gamma = m(theta)^{1/theta}``."""
    lo_d, hi_d = law.domain
    if hi_d <= 2:
        # m(2) infinite: minimize g on [1, sup D) with theta capped at 2
        hi = min(hi_d, 2.0) - 1e-9
        theta = _minimize_unimodal(lambda r: g_fn(law, r), 1.0, hi)
        interior = True
    elif h_fn(law, 2.0) <= 0:
        theta, interior = 2.0, False
    elif h_fn(law, 1.0) >= 0:
        # g increases from r = 1: the martingale is not uniformly integrable
        theta, interior = 1.0, True
    else:
        theta = _bisect(lambda r: h_fn(law, r), 1.0, 2.0)
        interior = True
    gamma = law.mean_measure(theta) ** (1.0 / theta)
    return MomentProfile(law, (lo_d, hi_d), theta, gamma, interior)


def _profile(obj):
    return obj if isinstance(obj, MomentProfile) else find_theta(obj)


def find_q(profile, p):
    """The conjugate ``q`` in ``(1, theta)`` with ``g(q) = g(p)``, for ``p > theta``.

    If ``g(p) >= 0 = g(1)`` no interior solution exists; ``1.0`` is returned
    with a :class:`BoundaryWarning`.
    """
    profile = _profile(profile)
    if not p > profile.theta:
        raise PreconditionError(f"find_q needs p > theta = {profile.theta}")
    if not profile.interior_min:
        raise PreconditionError("find_q needs an interior minimum of g")
    gp = g_fn(profile, p)
    if gp >= 0.0:
        warnings.warn(f"g({p}) >= g(1): q sits on the boundary r = 1", BoundaryWarning,
                      stacklevel=2)
        return 1.0
    if gp <= g_fn(profile, profile.theta):
        return profile.theta
    return _bisect(lambda r: g_fn(profile, r) - gp, 1.0, profile.theta)


def predicted_rate(profile, p, r):
    """Limit of ``s_n(r)^{1/n}`` where ``s_n(r) = E (Z_n^{(r)})^{p/r}``.

    For ``p <= theta`` this is ``m(r)^{p/r}`` below ``theta`` and
    ``gamma^p`` above; for ``p > theta`` it is ``m(r)^{p/r}`` below the
    conjugate ``q`` and ``m(p)`` above.
    """
    profile = _profile(profile)
    if not (1 < p < 2):
        raise PreconditionError("predicted_rate needs p in (1, 2)")
    if not (1 <= r <= 2):
        raise PreconditionError("predicted_rate needs r in [1, 2]")
    mp = profile.m(p)
    if not mp < 1:
        raise PreconditionError(f"predicted_rate needs m(p) < 1, got {mp}")
    if p <= profile.theta:
        return profile.m(r) ** (p / r) if r < profile.theta else profile.gamma**p
    q = find_q(profile, p)
    return profile.m(r) ** (p / r) if r < q else mp


# -- criteria ------------------------------------------------------------------

def _moment_finite(law, p):
    return law.w1_moment_finite(p)


def check_lp(law, p) -> CriterionReport:
    """``W_n -> W`` in ``L_p`` iff ``E W_1^p < inf`` and ``m(p) < 1``."""
    if not p > 1:
        raise PreconditionError("check_lp needs p > 1")
    rep = CriterionReport(p=p, degenerate=law.is_degenerate())
    rep.moment_finite = _moment_finite(law, p)
    mp = law.mean_measure(p)
    rep.lp_margin = 1.0 - mp
    rep.lp_converges = rep.moment_finite and mp < 1
    if rep.degenerate:
        rep.notes.append("degenerate law: W_1 = 1 almost surely, so every W_n = 1")
    return rep


def _scaled_root(law, a, r):
    return math.exp(a + g_fn(law, r))


def check_main1(law, p, a) -> CriterionReport:
    """Criteria for ``1 < p < 2`` with the best exponent ``r*`` in ``[p, 2]``."""
    if not (1 < p < 2):
        raise PreconditionError("check_main1 needs p in (1, 2)")
    if not a > 0:
        raise PreconditionError("check_main1 needs a > 0")
    rep = check_lp(law, p)
    rep.a = a
    profile = find_theta(law)
    rep.theta, rep.gamma = profile.theta, profile.gamma

    r_star = _minimize_unimodal(lambda r: g_fn(law, r), p, 2.0)
    best = _scaled_root(law, a, r_star)
    rep.r_star = r_star
    rep.main1_margin = 1.0 - best
    rep.main1_sufficient = _moment_finite(law, r_star) and best < 1.0
    rep.main1_necessary = rep.moment_finite and best <= 1.0 + BOUNDARY_TOL
    if abs(best - 1.0) <= BOUNDARY_TOL:
        rep.main1_boundary = True
        rep.notes.append("boundary: e^a inf m(r)^{1/r} = 1, inconclusive")

    # sharper necessary conditions when argmin g lies outside [p, 2)
    if profile.interior_min and profile.theta < p:
        rep.sharpened_verdict = rep.moment_finite and _scaled_root(law, a, p) < 1.0
    elif not profile.interior_min:
        rep.sharpened_verdict = rep.moment_finite and _scaled_root(law, a, 2.0) < 1.0
    return rep


def check_main2(law, p, a) -> CriterionReport:
    """``A`` converges in ``L_p`` (``p >= 2``) iff ``e^a max(m(2)^{1/2}, m(p)^{1/p}) < 1``."""
    if not p >= 2:
        raise PreconditionError("check_main2 needs p >= 2")
    if not a > 0:
        raise PreconditionError("check_main2 needs a > 0")
    rep = check_lp(law, p)
    rep.a = a
    worst = max(_scaled_root(law, a, 2.0), _scaled_root(law, a, p))
    rep.main2_margin = 1.0 - worst
    rep.main2 = rep.moment_finite and worst < 1.0
    return rep


def analyze(law, p, a=None) -> CriterionReport:
    """Every criterion that applies to ``(p, a)`` plus ``theta``, ``gamma``, ``q``."""
    if a is None:
        rep = check_lp(law, p)
    elif 1 < p < 2:
        rep = check_main1(law, p, a)
    else:
        rep = check_main2(law, p, a)
    profile = find_theta(law)
    rep.theta, rep.gamma = profile.theta, profile.gamma
    if profile.interior_min and p > profile.theta and profile.theta > 1:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", BoundaryWarning)
            rep.q = find_q(profile, p)
    return rep
