"""Monte Carlo simulation of the Markov branching process.

With ``k`` particles alive the next death happens after ``Exp(k lam)``
time and the dying particle is replaced by ``nu ~ {p_k}`` offspring.
Replicates are advanced together, one event per live replicate per sweep.

Random streams: replicates are processed in blocks of ``BLOCK`` and block
``i`` draws from ``PCG64(SeedSequence(seed, spawn_key=(i,)))``.  The output
therefore depends only on ``(seed, replicates)``, not on the thread count.
"""

from __future__ import annotations

import json
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import chisquare

from .errors import DomainError
from .law import LinearFractionalLaw, OffspringLaw, fixed_points

BLOCK = 4096
DEFAULT_CAP = 10**7
CAP_WARNING = 0.01
CENSOR_WARNING = 0.05


# ---------------------------------------------------------------------------
# offspring samplers
# ---------------------------------------------------------------------------


class AliasTable:
    """Vose's alias method for a finite distribution."""

    def __init__(self, p: np.ndarray):
        p = np.asarray(p, dtype=float)
        n = p.size
        scaled = p * n / p.sum()
        prob = np.zeros(n)
        alias = np.zeros(n, dtype=np.int64)
        small = [i for i in range(n) if scaled[i] < 1.0]
        large = [i for i in range(n) if scaled[i] >= 1.0]
        while small and large:
            s, l = small.pop(), large.pop()
            prob[s] = scaled[s]
            alias[s] = l
            scaled[l] -= 1.0 - scaled[s]
            (small if scaled[l] < 1.0 else large).append(l)
        for i in large + small:
            prob[i] = 1.0
        self.prob = prob
        self.alias = alias

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        i = rng.integers(0, self.prob.size, size)
        keep = rng.random(size) < self.prob[i]
        return np.where(keep, i, self.alias[i])


class _LFSampler:
    def __init__(self, law: LinearFractionalLaw):
        self.p0, self.p = law.p0, law.p

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        zero = rng.random(size) < self.p0
        return np.where(zero, 0, rng.geometric(self.p, size))


def offspring_sampler(law: OffspringLaw):
    if isinstance(law, LinearFractionalLaw):
        return _LFSampler(law)
    return AliasTable(law.probabilities())


# ---------------------------------------------------------------------------
# configuration and statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SimConfig:
    law: OffspringLaw
    t: float
    replicates: int
    seed: int
    population_cap: int = DEFAULT_CAP
    t_max: float | None = None

    def __post_init__(self):
        if self.replicates < 1:
            raise DomainError("replicates must be >= 1")
        if self.population_cap < 1:
            raise DomainError("population_cap must be >= 1")
        if not (self.t >= 0 and math.isfinite(self.t)):
            raise DomainError("horizon must be finite and non-negative")


@dataclass
class SimStats:
    seed: int
    t: float
    replicates: int
    histogram: list[float]
    survival: float
    mean: float
    variance: float
    w_mean: float
    w_std: float
    censored: int
    status: str
    conditional_histogram: list[float] = field(default_factory=list)
    extinction_frequency: float | None = None
    extinction_histogram: list[float] = field(default_factory=list)
    ambiguous: int = 0
    w_samples: list[float] = field(default_factory=list, repr=False)

    @property
    def counts(self) -> np.ndarray:
        return np.rint(np.asarray(self.histogram) * (self.replicates - self.censored)).astype(np.int64)

    def to_json(self, include_samples: bool = False) -> str:
        d = asdict(self)
        if not include_samples:
            d.pop("w_samples")
        return json.dumps(d, indent=2)


# ---------------------------------------------------------------------------
# core
# ---------------------------------------------------------------------------


def _advance(z: np.ndarray, horizon: float, lam: float, sampler, rng, cap: int, high: int | None = None):
    """Run each replicate for ``horizon`` time from population ``z``.

    Replicates stop early on extinction, on reaching ``cap`` (censored) or
    on reaching ``high`` (used to declare survival).  Returns the final
    populations and the censoring mask.
    """
    z = z.astype(np.int64).copy()
    clock = np.zeros(z.size)
    stop = cap if high is None else min(cap, high)
    idx = np.flatnonzero((z > 0) & (z < stop))
    while idx.size:
        zi = z[idx]
        clock[idx] += rng.standard_exponential(idx.size) / (lam * zi)
        fire = clock[idx] <= horizon
        hit = idx[fire]
        if hit.size:
            z[hit] += sampler.sample(rng, hit.size) - 1
        idx = hit[(z[hit] > 0) & (z[hit] < stop)]
    return z, z >= cap


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("BRANCHKIT_THREADS", "1")))
    except ValueError:
        return 1


def _block_rng(seed: int, i: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(i,))))


def _blocks(n: int) -> list[tuple[int, int]]:
    return [(i, min(BLOCK, n - i * BLOCK)) for i in range(math.ceil(n / BLOCK))]


def _map_blocks(fn, n: int):
    blocks = _blocks(n)
    workers = min(_threads(), len(blocks))
    if workers <= 1:
        return [fn(i, size) for i, size in blocks]
    with ThreadPoolExecutor(workers) as ex:
        return list(ex.map(lambda b: fn(*b), blocks))


def _histogram(z: np.ndarray) -> list[float]:
    if z.size == 0:
        return []
    return (np.bincount(z) / z.size).tolist()


def simulate(config: SimConfig) -> SimStats:
    """Populations at time ``t`` for ``config.replicates`` independent runs."""
    law = config.law
    sampler = offspring_sampler(law)
    cap = config.population_cap

    def run(i, size):
        rng = _block_rng(config.seed, i)
        return _advance(np.ones(size, dtype=np.int64), config.t, law.lam, sampler, rng, cap)

    parts = _map_blocks(run, config.replicates)
    z = np.concatenate([p[0] for p in parts])
    capped = np.concatenate([p[1] for p in parts])
    ok = z[~capped]
    n_cens = int(capped.sum())
    m = law.mean
    mt = math.exp(law.lam * (m - 1.0) * config.t) if math.isfinite(m) else math.inf
    w = ok / mt
    status = "ok"
    if n_cens > CAP_WARNING * config.replicates:
        status = "warning: population cap reached in more than 1% of replicates"
        warnings.warn(status)
    pos = ok[ok > 0]
    return SimStats(
        seed=config.seed,
        t=config.t,
        replicates=config.replicates,
        histogram=_histogram(ok),
        survival=float(np.mean(ok > 0)) if ok.size else math.nan,
        mean=float(ok.mean()) if ok.size else math.nan,
        variance=float(ok.var(ddof=1)) if ok.size > 1 else math.nan,
        w_mean=float(w.mean()) if ok.size else math.nan,
        w_std=float(w.std(ddof=1)) if ok.size > 1 else math.nan,
        censored=n_cens,
        status=status,
        conditional_histogram=_histogram(pos),
        w_samples=w.tolist(),
    )


def extinction_conditioned_sample(config: SimConfig, survive_level: float = 1e-12) -> SimStats:
    """Histogram of ``Z_t`` over paths that die out by ``t_max``.

    After time ``t`` each path is continued until extinction, until
    ``t_max``, or until ``q**Z < survive_level`` (survival then being
    certain to that accuracy).  Paths in none of these states are counted
    as ambiguous.
    """
    law = config.law
    fp = fixed_points(law)
    if not (0.0 < fp.q < 1.0):
        raise DomainError("extinction conditioning needs 0 < q < 1")
    t_max = config.t_max if config.t_max is not None else max(40.0 / law.lam, config.t)
    if t_max < config.t:
        raise DomainError("t_max must be at least t")
    high = max(2, math.ceil(math.log(survive_level) / math.log(fp.q)))
    sampler = offspring_sampler(law)
    cap = config.population_cap

    def run(i, size):
        rng = _block_rng(config.seed, i)
        zt, c1 = _advance(np.ones(size, dtype=np.int64), config.t, law.lam, sampler, rng, cap)
        zend, _ = _advance(np.where(c1, high, zt), t_max - config.t, law.lam, sampler, rng, cap, high)
        return zt, zend

    parts = _map_blocks(run, config.replicates)
    zt = np.concatenate([p[0] for p in parts])
    zend = np.concatenate([p[1] for p in parts])
    extinct = zend == 0
    ambiguous = int(np.sum((zend > 0) & (zend < high)))
    status = "ok"
    if ambiguous > CENSOR_WARNING * max(1, int(np.sum(zend > 0))):
        status = "warning: more than 5% of surviving paths are unresolved at t_max"
        warnings.warn(status)
    ext_z = zt[extinct]
    return SimStats(
        seed=config.seed,
        t=config.t,
        replicates=config.replicates,
        histogram=_histogram(zt),
        survival=float(np.mean(zt > 0)),
        mean=float(zt.mean()),
        variance=float(zt.var(ddof=1)) if zt.size > 1 else math.nan,
        w_mean=math.nan,
        w_std=math.nan,
        censored=0,
        status=status,
        extinction_frequency=float(extinct.mean()),
        extinction_histogram=_histogram(ext_z),
        ambiguous=ambiguous,
    )


def histogram_chisquare(counts: np.ndarray, probs: np.ndarray, min_expected: float = 5.0) -> float:
    """Chi-square p-value of observed ``counts`` against cell probabilities.

    Mass beyond ``probs`` forms one extra cell, and cells with fewer than
    ``min_expected`` expected counts are pooled into it.
    """
    counts = np.asarray(counts, dtype=float)
    probs = np.asarray(probs, dtype=float)
    n = counts.sum()
    k = max(counts.size, probs.size)
    obs = np.zeros(k + 1)
    obs[: counts.size] = counts
    p = np.zeros(k + 1)
    p[: probs.size] = probs
    p[-1] = max(0.0, 1.0 - p[:-1].sum())
    expected = p * n
    keep = expected >= min_expected
    o = np.append(obs[keep], obs[~keep].sum())
    e = np.append(expected[keep], expected[~keep].sum())
    if e[-1] == 0.0:
        if o[-1] > 0:
            return 0.0
        o, e = o[:-1], e[:-1]
    if o.size < 2:
        return 1.0
    e *= o.sum() / e.sum()
    return float(chisquare(o, e).pvalue)
