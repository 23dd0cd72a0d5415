"""Offspring laws of a weighted branching process.

A law describes the random litter ``(L_1, ..., L_J)`` of weights that one
individual hands to its children.  Every formula downstream is written in
terms of these weights, so laws are parameterized by weights and never by
positions (positions are ``log L_i``).

Four families are provided:

* :class:`IidScaledUniform` -- ``b`` children, ``L_i = (2/b) U_i``;
* :class:`LogNormalWeights` -- ``b`` children, ``L_i = exp(N(0, s2)) / (b e^{s2/2})``;
* :class:`PoissonGW` -- Poisson(``lam``) children, each with weight ``1/lam``;
* :class:`DiscreteTable` -- finitely many litters with given probabilities.

The three parametric families satisfy ``m(1) = 1`` by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import integrate, stats

from ._stats import Estimate, mean_se, offsets_from_sizes, segment_sums
from .errors import DivergentMoment, DomainError, PreconditionError
from .streams import as_generator

__all__ = [
    "OffspringLaw",
    "IidScaledUniform",
    "LogNormalWeights",
    "PoissonGW",
    "DiscreteTable",
    "sample_litter",
    "mean_measure",
    "mean_measure_derivative",
    "normalize",
    "w1_moment",
    "mu_p",
    "mc_mean_measure",
    "law_from_dict",
]

#: default number of litters for Monte Carlo moment estimates
MC_LITTERS = 100_000
_MC_SEED = 20240601


class OffspringLaw:
    """Interface shared by all litter laws.

    Subclasses implement :meth:`sample_litters`, :meth:`mean_measure` and,
    where they can, exact versions of the other moment methods.
    """

    family = "abstract"
    #: finiteness domain of ``m`` as an open interval (lo, hi)
    domain = (0.0, math.inf)

    # -- sampling ---------------------------------------------------------
    def sample_litters(self, count, rng):
        """Draw ``count`` independent litters.

        Returns ``(weights, sizes)``: the concatenated weight vectors and the
        number of entries of each litter, in draw order.
        """
        raise NotImplementedError

    # -- analytic quantities ---------------------------------------------
    def mean_measure(self, r):
        raise NotImplementedError

    def mean_measure_derivative(self, r):
        self._check_domain(r)
        h = max(1e-6, 1e-6 * r)
        return (self.mean_measure(r + h) - self.mean_measure(r - h)) / (2 * h)

    def mean_offspring(self):
        """Expected number of children with positive weight."""
        w, sizes = self.sample_litters(MC_LITTERS, np.random.default_rng(_MC_SEED))
        return float(np.count_nonzero(w)) / MC_LITTERS

    def litter_bound(self):
        """A certified upper bound on the litter sum ``W_1``, or ``None``."""
        return None

    def sample_size_biased(self, count, rng):
        """Litters drawn with density ``W_1`` when a direct sampler exists.

        Returns ``(weights, sizes)`` like :meth:`sample_litters`, or ``None``.
        """
        return None

    def is_degenerate(self):
        """True when ``W_1 = 1`` almost surely."""
        return False

    def w1_exact_moment(self, p):
        """``E W_1^p`` in closed form, or ``None`` if unavailable."""
        return None

    def mu_exact(self, p):
        """``E|W_1 - 1|^p`` in closed form, or ``None`` if unavailable."""
        return None

    def w1_moment_finite(self, p):
        """Whether ``E W_1^p < inf``; Monte Carlo tail diagnostic by default."""
        try:
            return math.isfinite(w1_moment(self, p).value)
        except DivergentMoment:
            return False

    def params(self):
        raise NotImplementedError

    # -- helpers ----------------------------------------------------------
    def _check_domain(self, r):
        lo, hi = self.domain
        if not (lo < r < hi):
            raise DomainError(f"r={r} outside the finiteness domain {self.domain} of m")

    def litter_sums(self, count, rng):
        """Sample ``count`` litter sums ``W_1``."""
        w, sizes = self.sample_litters(count, rng)
        return segment_sums(w, offsets_from_sizes(sizes))

    def to_dict(self):
        return {"family": self.family, **self.params()}


def _power_moments_of_sum(single, b, p):
    """Integer moments of a sum of ``b`` iid copies from the copy's moments.

    ``single[k]`` must hold ``E X^k`` for ``k = 0..p``.
    """
    acc = [1.0] + [0.0] * p
    for _ in range(b):
        acc = [
            math.fsum(math.comb(j, k) * acc[k] * single[j - k] for k in range(j + 1))
            for j in range(p + 1)
        ]
    return acc[p]


def _is_int(p):
    return float(p).is_integer() and p >= 0


def _central_moment_from_raw(raw, p):
    """``E (X-1)^p`` for even integer ``p`` from raw moments ``raw[k]``."""
    return math.fsum(math.comb(p, k) * raw[k] * (-1.0) ** (p - k) for k in range(p + 1))


@dataclass(frozen=True)
class IidScaledUniform(OffspringLaw):
    """``b`` children with weights ``(2/b) U_i``, ``U_i`` iid uniform on (0, 1)."""

    b: int = 2
    family = "IidScaledUniform"

    def w1_moment_finite(self, p):
        return True

    def __post_init__(self):
        if int(self.b) != self.b or self.b < 2:
            raise PreconditionError("IidScaledUniform needs an integer child count b >= 2")

    def sample_litters(self, count, rng):
        w = rng.random(count * self.b) * (2.0 / self.b)
        return w, np.full(count, self.b, dtype=np.int64)

    def mean_measure(self, r):
        self._check_domain(r)
        return self.b * (2.0 / self.b) ** r / (r + 1.0)

    def mean_measure_derivative(self, r):
        self._check_domain(r)
        return self.mean_measure(r) * (math.log(2.0 / self.b) - 1.0 / (r + 1.0))

    def mean_offspring(self):
        return float(self.b)

    def litter_bound(self):
        return 2.0

    def _raw(self, k):
        c = 2.0 / self.b
        return _power_moments_of_sum([c**j / (j + 1) for j in range(k + 1)], self.b, k)

    def _quad(self, func):
        # W_1 = (2/b) S with S Irwin-Hall(b); integrate piecewise between knots
        dist = stats.irwinhall(self.b)
        knots = sorted(set(range(self.b + 1)) | {self.b / 2})
        total = 0.0
        for lo, hi in zip(knots[:-1], knots[1:]):
            val, _ = integrate.quad(lambda s: func(2.0 * s / self.b) * dist.pdf(s), lo, hi,
                                    epsabs=1e-14, epsrel=1e-12, limit=200)
            total += val
        return total

    def w1_exact_moment(self, p):
        if _is_int(p):
            return self._raw(int(p))
        if self.b > 12:
            return None
        return self._quad(lambda x: x**p)

    def mu_exact(self, p):
        if _is_int(p) and int(p) % 2 == 0:
            raw = [self._raw(k) for k in range(int(p) + 1)]
            return _central_moment_from_raw(raw, int(p))
        if self.b > 12:
            return None
        return self._quad(lambda x: abs(x - 1.0) ** p)

    def params(self):
        return {"b": int(self.b)}


@dataclass(frozen=True)
class LogNormalWeights(OffspringLaw):
    """``b`` children with iid weights ``exp(N(0, sigma2)) / (b e^{sigma2/2})``."""

    b: int = 2
    sigma2: float = 2 * math.log(2) / 2.25
    family = "LogNormalWeights"

    def w1_moment_finite(self, p):
        return True

    def __post_init__(self):
        if int(self.b) != self.b or self.b < 2:
            raise PreconditionError("LogNormalWeights needs an integer child count b >= 2")
        if not self.sigma2 > 0:
            raise PreconditionError("LogNormalWeights needs sigma2 > 0")

    @property
    def _scale(self):
        return 1.0 / (self.b * math.exp(self.sigma2 / 2))

    def sample_litters(self, count, rng):
        z = rng.standard_normal(count * self.b)
        w = np.exp(z * math.sqrt(self.sigma2)) * self._scale
        return w, np.full(count, self.b, dtype=np.int64)

    def mean_measure(self, r):
        self._check_domain(r)
        return math.exp((1.0 - r) * math.log(self.b) + self.sigma2 * r * (r - 1.0) / 2)

    def mean_measure_derivative(self, r):
        self._check_domain(r)
        return self.mean_measure(r) * (-math.log(self.b) + self.sigma2 * (2 * r - 1.0) / 2)

    def mean_offspring(self):
        return float(self.b)

    def _raw(self, k):
        single = [self._scale**j * math.exp(self.sigma2 * j * j / 2) for j in range(k + 1)]
        return _power_moments_of_sum(single, self.b, k)

    def w1_exact_moment(self, p):
        return self._raw(int(p)) if _is_int(p) else None

    def mu_exact(self, p):
        if _is_int(p) and int(p) % 2 == 0:
            return _central_moment_from_raw([self._raw(k) for k in range(int(p) + 1)], int(p))
        return None

    def params(self):
        return {"b": int(self.b), "sigma2": float(self.sigma2)}


@dataclass(frozen=True)
class PoissonGW(OffspringLaw):
    """Galton-Watson litter: Poisson(``lam``) children of weight ``1/lam`` each."""

    lam: float = 2.0
    family = "PoissonGW"

    def w1_moment_finite(self, p):
        return True

    def __post_init__(self):
        if not self.lam > 1:
            raise PreconditionError("PoissonGW needs a mean offspring lam > 1")

    def sample_litters(self, count, rng):
        sizes = rng.poisson(self.lam, size=count).astype(np.int64)
        return np.full(int(sizes.sum()), 1.0 / self.lam), sizes

    def sample_size_biased(self, count, rng):
        # biasing Poisson(lam) by its value gives 1 + Poisson(lam)
        sizes = 1 + rng.poisson(self.lam, size=count).astype(np.int64)
        return np.full(int(sizes.sum()), 1.0 / self.lam), sizes

    def mean_measure(self, r):
        self._check_domain(r)
        return self.lam ** (1.0 - r)

    def mean_measure_derivative(self, r):
        self._check_domain(r)
        return -math.log(self.lam) * self.mean_measure(r)

    def mean_offspring(self):
        return float(self.lam)

    def _expect(self, func):
        hi = int(self.lam + 40 * math.sqrt(self.lam) + 60)
        j = np.arange(hi + 1)
        return math.fsum(stats.poisson.pmf(j, self.lam) * func(j / self.lam))

    def w1_exact_moment(self, p):
        return self._expect(lambda x: x**p)

    def mu_exact(self, p):
        return self._expect(lambda x: np.abs(x - 1.0) ** p)

    def params(self):
        return {"lam": float(self.lam)}


@dataclass(frozen=True, init=False)
class DiscreteTable(OffspringLaw):
    """Finitely many litters ``weights_j`` drawn with probabilities ``prob_j``.

    ``DiscreteTable([(0.5, [0.75, 0.75]), (0.5, [0.5])])`` gives litter
    ``[0.75, 0.75]`` or ``[0.5]`` with equal chance.  Zero weights are kept
    in the table but behave like absent children.
    """

    outcomes: tuple
    family = "DiscreteTable"

    def w1_moment_finite(self, p):
        return True

    def __init__(self, outcomes):
        rows = []
        for prob, weights in outcomes:
            weights = tuple(float(x) for x in np.atleast_1d(np.asarray(weights, dtype=float)))
            if prob < 0 or any(not (x >= 0 and math.isfinite(x)) for x in weights):
                raise PreconditionError("probabilities and weights must be nonnegative and finite")
            rows.append((float(prob), weights))
        if not rows:
            raise PreconditionError("DiscreteTable needs at least one outcome")
        if abs(math.fsum(p for p, _ in rows) - 1.0) > 1e-12:
            raise PreconditionError("DiscreteTable probabilities must sum to 1")
        object.__setattr__(self, "outcomes", tuple(rows))

    @cached_property
    def _table(self):
        probs = np.array([p for p, _ in self.outcomes])
        lengths = np.array([len(w) for _, w in self.outcomes], dtype=np.int64)
        width = max(int(lengths.max()), 1)
        mat = np.zeros((len(self.outcomes), width))
        for i, (_, w) in enumerate(self.outcomes):
            mat[i, : len(w)] = w
        mask = np.arange(width)[None, :] < lengths[:, None]
        return probs / probs.sum(), lengths, mat, mask

    def sample_litters(self, count, rng):
        probs, lengths, mat, mask = self._table
        idx = rng.choice(len(probs), size=count, p=probs)
        return mat[idx][mask[idx]], lengths[idx]

    def _expect(self, litter_func):
        return math.fsum(p * litter_func(np.asarray(w)) for p, w in self.outcomes if p > 0)

    def mean_measure(self, r):
        self._check_domain(r)
        return self._expect(lambda w: math.fsum(w[w > 0] ** r))

    def mean_measure_derivative(self, r):
        self._check_domain(r)
        return self._expect(lambda w: math.fsum(w[w > 0] ** r * np.log(w[w > 0])))

    def mean_offspring(self):
        return self._expect(lambda w: float(np.count_nonzero(w)))

    def litter_bound(self):
        return max(math.fsum(w) for p, w in self.outcomes if p > 0)

    def is_degenerate(self):
        return all(abs(math.fsum(w) - 1.0) <= 1e-12 for p, w in self.outcomes if p > 0)

    def w1_exact_moment(self, p):
        return self._expect(lambda w: math.fsum(w) ** p)

    def mu_exact(self, p):
        return self._expect(lambda w: abs(math.fsum(w) - 1.0) ** p)

    def params(self):
        return {"outcomes": [[p, list(w)] for p, w in self.outcomes]}

    def __repr__(self):
        return f"DiscreteTable({[(p, list(w)) for p, w in self.outcomes]})"


# -- module-level operations ---------------------------------------------

def sample_litter(law, rng):
    """One litter as a weight vector."""
    w, _ = law.sample_litters(1, as_generator(rng))
    return w


def mean_measure(law, r):
    """``m(r) = E sum_i L_i^r``."""
    return law.mean_measure(r)


def mean_measure_derivative(law, r):
    """``m'(r) = E sum_i L_i^r log L_i``; zero weights contribute nothing."""
    return law.mean_measure_derivative(r)


def normalize(law):
    """Rescale weights so that ``m(1) = 1``."""
    m1 = law.mean_measure(1.0)
    if not (m1 > 0 and math.isfinite(m1)):
        raise DomainError(f"cannot normalize a law with m(1) = {m1}")
    # a rounding-level miss counts as normalized, which makes the map idempotent
    if abs(m1 - 1.0) <= 1e-12:
        return law
    if isinstance(law, DiscreteTable):
        return DiscreteTable([(p, [x / m1 for x in w]) for p, w in law.outcomes])
    raise PreconditionError(f"{law.family} cannot be rescaled; it has m(1) = {m1}")


def mc_mean_measure(law, r, n_litters=MC_LITTERS, rng=None) -> Estimate:
    """Monte Carlo estimate of ``m(r)`` from ``n_litters`` litters."""
    rng = as_generator(_MC_SEED if rng is None else rng)
    w, sizes = law.sample_litters(n_litters, rng)
    powered = np.where(w > 0, w, 0.0) ** r
    return mean_se(segment_sums(powered, offsets_from_sizes(sizes)))


def _mc_w1(law, func, p, n_litters, rng):
    rng = as_generator(_MC_SEED if rng is None else rng)
    x = func(law.litter_sums(n_litters, rng))
    est = mean_se(x)
    total = x.sum()
    # a single draw carrying a large share of the sum signals an infinite moment
    if total > 0 and x.max() / total > 0.25:
        raise DivergentMoment(f"E W_1^{p} looks infinite: one litter carries "
                              f"{x.max() / total:.0%} of the Monte Carlo sum")
    return est


def w1_moment(law, p, n_litters=MC_LITTERS, rng=None) -> Estimate:
    """``E W_1^p``; exact where a closed form exists, else Monte Carlo."""
    if not p > 1:
        raise PreconditionError("w1_moment needs p > 1")
    exact = law.w1_exact_moment(p)
    if exact is not None:
        return Estimate(exact, 0.0)
    return _mc_w1(law, lambda s: s**p, p, n_litters, rng)


def mu_p(law, p, n_litters=MC_LITTERS, rng=None) -> Estimate:
    """``E|W_1 - 1|^p``; exact where a closed form exists, else Monte Carlo."""
    if not p > 1:
        raise PreconditionError("mu_p needs p > 1")
    exact = law.mu_exact(p)
    if exact is not None:
        return Estimate(exact, 0.0)
    return _mc_w1(law, lambda s: np.abs(s - 1.0) ** p, p, n_litters, rng)


_FAMILIES = {
    "IidScaledUniform": IidScaledUniform,
    "LogNormalWeights": LogNormalWeights,
    "PoissonGW": PoissonGW,
    "DiscreteTable": DiscreteTable,
}


def law_from_dict(data):
    """Build a law from ``{"family": name, **params}``."""
    data = dict(data)
    try:
        cls = _FAMILIES[data.pop("family")]
    except KeyError as exc:
        raise PreconditionError(f"unknown law family {exc}") from None
    if cls is DiscreteTable:
        return DiscreteTable(data["outcomes"])
    return cls(**data)
