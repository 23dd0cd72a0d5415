"""Level-by-level simulation of the weighted branching process.

Only the current generation's weights are ever held in memory; per-level
statistics (``Z_n``, ``Z_n^{(r)}``, the maximal weight, the population size)
are reduced on the fly.  Replicates are simulated in fixed-size blocks, each
block with its own random substream, so an ensemble is reproducible from
its seed for any number of workers.

Also here: the truncation operator on laws, an exhaustive enumeration oracle
for small discrete laws, and Monte Carlo estimates of
``s_n(r) = E (Z_n^{(r)})^{p/r}``.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from ._stats import Estimate, mean_se, offsets_from_sizes, segment_max, segment_sums
from .errors import EnumerationTooLarge, PopulationOverflow, PreconditionError
from .model import MC_LITTERS, DiscreteTable, OffspringLaw, mc_mean_measure
from .streams import as_generator, substream

__all__ = [
    "DEFAULT_CAP",
    "GenerationLevel",
    "PopulationRun",
    "Ensemble",
    "Power",
    "iter_generations",
    "run_population",
    "simulate_ensemble",
    "truncate_law",
    "TruncatedLaw",
    "exact_level_distribution",
    "exact_functional",
    "exact_s_n",
    "estimate_s_n",
    "s_n_curve",
    "block_size_for",
]

DEFAULT_CAP = 10**7
#: positive weights below this are dropped (and counted)
TINY = 1e-300
#: target number of nodes per block at the last generation
_BLOCK_NODES = 2**21
_MAX_BLOCK = 4096


@dataclass
class GenerationLevel:
    generation: int
    weights: np.ndarray

    @property
    def total(self):
        return float(segment_sums(self.weights, np.array([0, self.weights.size]))[0])


class Power:
    """Picklable node function ``x -> x**r``."""

    def __init__(self, r):
        self.r = float(r)

    def __call__(self, x):
        return x**self.r

    def __repr__(self):
        return f"Power({self.r})"


@dataclass
class PopulationRun:
    """Trajectory of one tree for ``n = 0..n_max``.

    ``Wr[r]`` is the tilted martingale ``Z_n^{(r)} / m(r)^n``; ``extra`` holds
    per-level sums of user node functions.
    """

    W: np.ndarray
    Zr: dict
    Wr: dict
    M: np.ndarray
    size: np.ndarray
    seed: object = None
    truncated: bool = False
    dropped: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def n_max(self):
        return self.W.size - 1

    def rows(self, run_id=0):
        """Trajectory rows ``(run_id, n, W_n, W_n^{(r)}..., M_n, pop_size)``."""
        for n in range(self.W.size):
            yield (run_id, n, self.W[n], *(self.Wr[r][n] for r in self.Wr),
                   self.M[n], int(self.size[n]))


@dataclass
class Ensemble:
    """Independent replicates; every array has shape ``(reps, n_max + 1)``."""

    law: OffspringLaw
    W: np.ndarray
    Zr: dict
    Wr: dict
    M: np.ndarray
    size: np.ndarray
    extra: dict
    seed: int
    dropped: int = 0
    truncated: bool = False

    @property
    def reps(self):
        return self.W.shape[0]

    @property
    def n_max(self):
        return self.W.shape[1] - 1

    def run(self, i) -> PopulationRun:
        return PopulationRun(
            W=self.W[i], Zr={r: z[i] for r, z in self.Zr.items()},
            Wr={r: w[i] for r, w in self.Wr.items()}, M=self.M[i], size=self.size[i],
            seed=(self.seed, i), truncated=self.truncated,
            extra={k: v[i] for k, v in self.extra.items()},
        )

    def rows(self):
        for i in range(self.reps):
            yield from self.run(i).rows(run_id=i)


# -- simulation kernel ------------------------------------------------------------

def _simulate_block(law, n_max, reps, node_fns, cap, rng):
    """Simulate ``reps`` trees; returns per-level statistics and generations done."""
    stats = {name: np.zeros((reps, n_max + 1)) for name in node_fns}
    Z = np.zeros((reps, n_max + 1))
    M = np.zeros((reps, n_max + 1))
    size = np.zeros((reps, n_max + 1), dtype=np.int64)
    Z[:, 0] = M[:, 0] = 1.0
    size[:, 0] = 1
    for name, fn in node_fns.items():
        stats[name][:, 0] = fn(np.ones(1))[0]

    w = np.ones(reps)
    offsets = np.arange(reps + 1, dtype=np.int64)
    dropped = 0
    done = 0
    for n in range(1, n_max + 1):
        litter, sizes = law.sample_litters(w.size, rng)
        child = np.repeat(w, sizes) * litter
        offsets = offsets_from_sizes(sizes)[offsets]
        keep = child > TINY
        if not keep.all():
            dropped += int(np.count_nonzero((child > 0) & ~keep))
            kept_before = np.zeros(child.size + 1, dtype=np.int64)
            np.cumsum(keep, out=kept_before[1:])
            offsets = kept_before[offsets]
            child = child[keep]
        counts = np.diff(offsets)
        if counts.size and counts.max() > cap:
            break
        w = child
        Z[:, n] = segment_sums(w, offsets)
        M[:, n] = segment_max(w, offsets)
        size[:, n] = counts
        for name, fn in node_fns.items():
            stats[name][:, n] = segment_sums(np.asarray(fn(w), dtype=float), offsets)
        done = n
    return Z, M, size, stats, dropped, done


def _node_fns(r_set, extra):
    fns = {("Zr", float(r)): Power(r) for r in r_set}
    fns.update({("extra", k): f for k, f in (extra or {}).items()})
    return fns


def _split(law, n_max, Z, M, size, stats, r_set):
    Zr, Wr, extra = {}, {}, {}
    for (kind, key), arr in stats.items():
        if kind == "Zr":
            Zr[key] = arr
            mr = law.mean_measure(key)
            Wr[key] = arr / mr ** np.arange(n_max + 1)
        else:
            extra[key] = arr
    m1 = law.mean_measure(1.0)
    W = Z / m1 ** np.arange(n_max + 1)
    return W, Zr, Wr, extra


def iter_generations(law, n_max, rng=None, cap=DEFAULT_CAP):
    """Yield the weights of generations ``0..n_max`` of a single tree."""
    rng = as_generator(rng)
    w = np.ones(1)
    yield GenerationLevel(0, w)
    for n in range(1, n_max + 1):
        litter, sizes = law.sample_litters(w.size, rng)
        w = np.repeat(w, sizes) * litter
        w = w[w > TINY]
        if w.size > cap:
            raise PopulationOverflow(f"generation {n} has {w.size} > cap={cap} individuals")
        yield GenerationLevel(n, w)


def run_population(law, n_max, r_set=(), cap=DEFAULT_CAP, rng=None, node_fns=None):
    """Simulate one tree and return its trajectory.

    Raises :class:`PopulationOverflow` (with the partial trajectory attached)
    if a generation holds more than ``cap`` individuals.
    """
    if cap < 1:
        raise PreconditionError("cap must be at least 1")
    gen = as_generator(rng)
    fns = _node_fns(r_set, node_fns)
    Z, M, size, stats, dropped, done = _simulate_block(law, n_max, 1, fns, cap, gen)
    W, Zr, Wr, extra = _split(law, n_max, Z, M, size, stats, r_set)
    run = PopulationRun(W[0], {r: z[0] for r, z in Zr.items()}, {r: w[0] for r, w in Wr.items()},
                        M[0], size[0], seed=rng if not isinstance(rng, np.random.Generator) else None,
                        dropped=dropped, extra={k: v[0] for k, v in extra.items()})
    if done < n_max:
        run = _cut_run(run, done)
        raise PopulationOverflow(f"generation {done + 1} exceeded cap={cap}", partial=run)
    return run


def _cut_run(run, done):
    sl = slice(0, done + 1)
    return PopulationRun(run.W[sl], {r: z[sl] for r, z in run.Zr.items()},
                         {r: w[sl] for r, w in run.Wr.items()}, run.M[sl], run.size[sl],
                         seed=run.seed, truncated=True, dropped=run.dropped,
                         extra={k: v[sl] for k, v in run.extra.items()})


def block_size_for(law, n_max):
    """Replicates per block; a deterministic function of the law and horizon."""
    growth = max(law.mean_offspring(), 1.0)
    expected = growth**n_max
    return int(min(_MAX_BLOCK, max(1, _BLOCK_NODES // max(1, int(expected)))))


def _block_job(law, n_max, fns, cap, seed, tag, bsize, reps, index):
    count = min(bsize, reps - index * bsize)
    return _simulate_block(law, n_max, count, fns, cap, substream(seed, index, tag))


def simulate_ensemble(law, n_max, reps, r_set=(), *, seed=0, cap=DEFAULT_CAP, workers=1,
                      node_fns=None, tag=0, block_size=None) -> Ensemble:
    """Simulate ``reps`` independent trees up to generation ``n_max``.

    ``node_fns`` maps names to functions of the generation's weight vector;
    their per-level sums are returned in ``Ensemble.extra``.  They must be
    picklable when ``workers > 1``.
    """
    if reps < 1:
        raise PreconditionError("reps must be positive")
    fns = _node_fns(r_set, node_fns)
    bsize = block_size or block_size_for(law, n_max)
    nblocks = -(-reps // bsize)
    job = partial(_block_job, law, n_max, fns, cap, seed, tag, bsize, reps)
    if workers > 1 and nblocks > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, range(nblocks)))
    else:
        results = [job(i) for i in range(nblocks)]

    done = min(r[5] for r in results)
    Z = np.concatenate([r[0] for r in results])
    M = np.concatenate([r[1] for r in results])
    size = np.concatenate([r[2] for r in results])
    stats = {k: np.concatenate([r[3][k] for r in results]) for k in fns}
    dropped = sum(r[4] for r in results)
    W, Zr, Wr, extra = _split(law, n_max, Z, M, size, stats, r_set)
    ens = Ensemble(law, W, Zr, Wr, M, size, extra, seed, dropped)
    if done < n_max:
        sl = (slice(None), slice(0, done + 1))
        partial_ens = Ensemble(law, W[sl], {r: z[sl] for r, z in Zr.items()},
                               {r: w[sl] for r, w in Wr.items()}, M[sl], size[sl],
                               {k: v[sl] for k, v in extra.items()}, seed, dropped, True)
        raise PopulationOverflow(f"generation {done + 1} exceeded cap={cap}", partial=partial_ens)
    return ens


# -- truncation -------------------------------------------------------------------

class TruncatedLaw(OffspringLaw):
    """Thinning of a sampled law: whole litter zeroed if its sum exceeds ``K``,
    single weights below ``1/K`` zeroed.

    There is no closed form for the mean measure of a thinned continuous law;
    :meth:`mean_measure` is a Monte Carlo estimate from a fixed stream.
    """

    family = "Truncated"

    def __init__(self, base, K):
        self.base = base
        self.K = float(K)

    def sample_litters(self, count, rng):
        w, sizes = self.base.sample_litters(count, rng)
        sums = segment_sums(w, offsets_from_sizes(sizes))
        too_big = np.repeat(sums > self.K, sizes)
        return np.where(too_big | (w < 1.0 / self.K), 0.0, w), sizes

    def mean_measure(self, r):
        self._check_domain(r)
        return mc_mean_measure(self, r, MC_LITTERS).value

    def litter_bound(self):
        return self.K

    def params(self):
        return {"base": self.base.to_dict(), "K": self.K}


def truncate_law(law, K):
    """Apply the thinning ``L_i 1{L_i >= 1/K, W_1 <= K}`` to a law.

    Discrete tables are transformed exactly; any other law is wrapped in a
    :class:`TruncatedLaw`.
    """
    if not K >= 1:
        raise PreconditionError("truncation level K must be >= 1")
    if isinstance(law, DiscreteTable):
        rows = []
        for p, w in law.outcomes:
            if math.fsum(w) > K:
                rows.append((p, [0.0] * len(w)))
            else:
                rows.append((p, [x if x >= 1.0 / K else 0.0 for x in w]))
        return DiscreteTable(rows)
    return TruncatedLaw(law, K)


# -- exhaustive enumeration ----------------------------------------------------------

ENUMERATION_LIMIT = 10**7


def exact_level_distribution(law, n, limit=ENUMERATION_LIMIT):
    """Exact law of generation ``n`` of a :class:`DiscreteTable` process.

    Returns a list of ``(probability, weights)``; identical multisets of
    weights are merged.  Individuals are expanded in a fixed depth-major
    order.
    """
    if not isinstance(law, DiscreteTable):
        raise PreconditionError("exact enumeration needs a DiscreteTable law")
    outcomes = [(p, tuple(x for x in w if x > 0)) for p, w in law.outcomes if p > 0]
    width = max(len(w) for _, w in outcomes)
    nodes = sum(width**k for k in range(n))
    if nodes * math.log(len(outcomes)) > math.log(limit) + 1e-12:
        raise EnumerationTooLarge(
            f"{len(outcomes)}^{nodes} configurations exceed the limit {limit}")

    states = {(1.0,): 1.0}
    for _ in range(n):
        nxt = {}
        for weights, prob in states.items():
            for combo in itertools.product(outcomes, repeat=len(weights)):
                pr = prob
                children = []
                for parent, (p, litter) in zip(weights, combo):
                    pr *= p
                    children.extend(parent * x for x in litter)
                key = tuple(sorted(children))
                nxt[key] = nxt.get(key, 0.0) + pr
        states = nxt
    return [(p, np.array(w)) for w, p in states.items()]


def exact_functional(law, n, f, limit=ENUMERATION_LIMIT):
    """``E f(generation n weights)`` by exhaustive enumeration."""
    return math.fsum(p * f(w) for p, w in exact_level_distribution(law, n, limit))


def exact_s_n(law, n, r, p):
    """Exact ``s_n(r) = E (Z_n^{(r)})^{p/r}`` for a small discrete law."""
    return exact_functional(law, n, lambda w: math.fsum(w**r) ** (p / r))


# -- s_n(r) ---------------------------------------------------------------------------

def _check_s_args(r, p):
    if not (1 <= r <= 2):
        raise PreconditionError("s_n(r) needs r in [1, 2]")
    if not (1 < p < 2):
        raise PreconditionError("s_n(r) needs p in (1, 2)")


def s_n_curve(law, n_max, r, p, reps, seed=0, cap=DEFAULT_CAP, workers=1):
    """Monte Carlo ``s_n(r)`` for ``n = 0..n_max`` from one ensemble.

    Returns a list of ``(n, Estimate, nonzero_count)``.
    """
    _check_s_args(r, p)
    ens = simulate_ensemble(law, n_max, reps, r_set=(r,), seed=seed, cap=cap, workers=workers)
    vals = ens.Zr[float(r)] ** (p / r)
    return [(n, mean_se(vals[:, n]), int(np.count_nonzero(vals[:, n])))
            for n in range(n_max + 1)]


def estimate_s_n(law, n, r, p, reps, seed=0, cap=DEFAULT_CAP, workers=1) -> Estimate:
    """Monte Carlo ``s_n(r) = E (Z_n^{(r)})^{p/r}`` with standard error."""
    _check_s_args(r, p)
    if n == 0:
        return Estimate(1.0, 0.0)
    return s_n_curve(law, n, r, p, reps, seed, cap, workers)[n][1]
