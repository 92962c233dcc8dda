"""Monte Carlo hit-count statistics and their limiting-law comparisons.

Orbits are represented by certified digit strings: each trial samples a
dyadic interval from the requested law, extracts enough digits to score
every window position, and counts the positions whose digit window lands
in the target set.  The histogram of counts is then compared against the
Poisson law with matching intensity, the first-hit times against Exp(1),
and the count transform e^{-s k} against the spectral prediction.

Determinism contract: every trial owns a counter-based random stream
keyed by (seed, trial index), and results are merged by trial index, so
a run is a pure function of its arguments regardless of chunking, thread
count, or scheduling.  Threads exist to honor the CFPOISSON_THREADS
environment contract; the work is CPU-bound Python, so they buy
convenience, not speed.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from . import renewal as _renewal
from . import targets as _targets
from .cf import GAUSS, LEBESGUE
from .errors import ConfigError, PrecisionError
from .sampling import DigitStream, trial_bit_budget

STATIONARY = "stationary"

__all__ = [
    "STATIONARY",
    "HitHistogram",
    "DistributionReport",
    "HitTimeSample",
    "LaplaceEstimate",
    "run_trials",
    "first_hit_times",
    "poisson_pmf",
    "poisson_pmf_table",
    "tv_distance",
    "empirical_laplace",
    "ks_statistic_exp1",
    "overlap_montecarlo",
    "resolve_workers",
]


def resolve_workers(workers=None) -> int:
    """Thread count: explicit argument, else CFPOISSON_THREADS, else all."""
    if workers is None:
        env = os.environ.get("CFPOISSON_THREADS", "").strip()
        if env:
            try:
                workers = int(env)
            except ValueError:
                raise ConfigError(
                    f"CFPOISSON_THREADS must be an integer, got {env!r}")
        else:
            workers = os.cpu_count() or 1
    workers = int(workers)
    if workers < 1:
        raise ConfigError("worker count must be >= 1")
    return workers


def _run_chunks(worker, trials: int, chunk: int, workers: int):
    """Apply worker(lo, hi) over [0, trials) and yield results in order.

    Chunk boundaries are fixed by (trials, chunk) alone and results are
    consumed in submission order, so the output is scheduling-independent.
    """
    spans = [(lo, min(lo + chunk, trials)) for lo in range(0, trials, chunk)]
    if workers == 1 or len(spans) == 1:
        for lo, hi in spans:
            yield worker(lo, hi)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(worker, lo, hi) for lo, hi in spans]
        for fut in futures:
            yield fut.result()


@dataclass
class HitHistogram:
    """Counts of trials by number of target hits along length-n orbits.

    ``counts[k]`` is the number of trials with exactly k hits; ``t_hat``
    is the exact finite-n intensity (n times the target mass under the
    invariant law of the system).  ``aborted`` lists trials whose digit
    extraction hit the refinement cap; they contribute to no bin and are
    never silently dropped.
    """

    counts: np.ndarray
    trials: int
    n: int
    t_hat: float
    law: str
    seed: int
    system: str = "gauss"
    family: str | None = None
    aborted: list = field(default_factory=list)

    def __post_init__(self):
        if int(self.counts.sum()) + len(self.aborted) != self.trials:
            raise ConfigError("histogram does not account for every trial")

    @property
    def scored(self) -> int:
        return self.trials - len(self.aborted)

    def empirical(self) -> np.ndarray:
        return self.counts / self.scored

    def mean(self) -> float:
        k = np.arange(self.counts.size)
        return float(self.counts @ k) / self.scored


def _gauss_histogram(fam, n, trials, law, seed, workers, chunk):
    need = _targets.required_digits(fam, n)
    bits = trial_bit_budget(need)

    def count_chunk(lo, hi):
        local = np.zeros(8, dtype=np.int64)
        aborted = []
        for t in range(lo, hi):
            stream = DigitStream.for_trial(seed, t, bits, law)
            try:
                digits = stream.take(need)
            except PrecisionError:
                aborted.append(t)
                continue
            k = fam.hits(digits, n)
            if k >= local.size:
                local = np.concatenate(
                    [local, np.zeros(k + 1 - local.size, dtype=np.int64)])
            local[k] += 1
        return local, aborted

    hist = np.zeros(1, dtype=np.int64)
    aborted = []
    for local, bad in _run_chunks(count_chunk, trials, chunk, workers):
        if local.size > hist.size:
            local[: hist.size] += hist
            hist = local
        else:
            hist[: local.size] += local
        aborted.extend(bad)
    return hist, sorted(aborted)


def run_trials(system: str, fam, n: int, trials: int, law: str, seed: int,
               workers=None, chunk: int = 2048, chain=None,
               k_threshold=None) -> HitHistogram:
    """Histogram of hit counts over independent trials.

    system "gauss": ``fam`` gives the digit-window target, ``law`` is the
    sampling law for the initial point (gauss or lebesgue).  system
    "renewal": the orbit is a stationary path of ``chain`` and the target
    is the state tail {state >= k_threshold}; ``law`` must be
    "stationary" and ``fam`` is not used (the tail threshold plays its
    role).
    """
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    workers = resolve_workers(workers)
    if system == "gauss":
        if law not in (GAUSS, LEBESGUE):
            raise ConfigError(f"gauss system needs law gauss|lebesgue, got {law!r}")
        if fam is None:
            raise ConfigError("gauss system needs a target family")
        counts, aborted = _gauss_histogram(fam, n, trials, law, seed,
                                           workers, chunk)
        return HitHistogram(counts, trials, n, _targets.expected_hits(fam, n),
                            law, seed, system, fam.label, aborted)
    if system == "renewal":
        if law != STATIONARY:
            raise ConfigError(f"renewal system needs law stationary, got {law!r}")
        if chain is None or k_threshold is None:
            raise ConfigError("renewal system needs chain and k_threshold")
        counts = _renewal.hit_counts(chain, k_threshold, n, trials, seed,
                                     chunk=chunk)
        t_hat = n * chain.stationary_tail(k_threshold)
        return HitHistogram(counts, trials, n, t_hat, law, seed, system,
                            f"state>={k_threshold}")
    raise ConfigError(f"unknown system {system!r}")


# --- reference laws and distances -------------------------------------------


def poisson_pmf(t: float, k: int) -> float:
    """P(K = k) for K ~ Poisson(t), computed in log space."""
    if not (t > 0):
        raise ConfigError("t must be positive")
    if k < 0:
        raise ConfigError("k must be nonnegative")
    return math.exp(k * math.log(t) - t - math.lgamma(k + 1))


def poisson_pmf_table(t: float, kmax: int) -> np.ndarray:
    """Vector of Poisson(t) probabilities for k = 0..kmax."""
    if not (t > 0):
        raise ConfigError("t must be positive")
    k = np.arange(kmax + 1)
    return np.exp(k * math.log(t) - t - special.gammaln(k + 1))


@dataclass
class DistributionReport:
    """Comparison of an empirical hit-count law against a reference pmf.

    ``table`` columns: k, trial count, empirical probability, reference
    probability, binomial standard error.  ``tv`` is the total variation
    distance with all reference mass beyond the largest observed k folded
    into a single tail cell (``tail_reference``).
    """

    tv: float
    table: np.ndarray
    tail_reference: float
    trials: int


def tv_distance(hist: HitHistogram, reference) -> DistributionReport:
    """Total variation against a reference pmf (callable k -> p or array)."""
    counts = np.asarray(hist.counts, dtype=np.int64)
    kmax = counts.size - 1
    if callable(reference):
        ref = np.array([reference(k) for k in range(kmax + 1)])
    else:
        ref = np.zeros(kmax + 1)
        given = np.asarray(reference, dtype=float)
        take = min(given.size, kmax + 1)
        ref[:take] = given[:take]
    total = hist.scored
    emp = counts / total
    tail = max(0.0, 1.0 - float(ref.sum()))
    tv = 0.5 * (float(np.abs(emp - ref).sum()) + tail)
    se = np.sqrt(emp * (1.0 - emp) / total)
    table = np.column_stack([np.arange(kmax + 1), counts, emp, ref, se])
    return DistributionReport(tv, table, tail, hist.trials)


@dataclass
class LaplaceEstimate:
    value: float
    std_err: float
    s: float


def empirical_laplace(hist: HitHistogram, s: float) -> LaplaceEstimate:
    """Monte Carlo estimate of E[e^{-s K}] from a hit histogram.

    Identical to averaging e^{-s k_trial} over trials, since the
    histogram is a sufficient statistic for that average.
    """
    if s < 0:
        raise ConfigError("s must be nonnegative")
    k = np.arange(hist.counts.size)
    w = np.exp(-s * k)
    total = hist.scored
    mean = float(hist.counts @ w) / total
    var = float(hist.counts @ (w - mean) ** 2) / total
    return LaplaceEstimate(mean, math.sqrt(var / total), s)


# --- hitting times ------------------------------------------------------


@dataclass
class HitTimeSample:
    """First-hit times tau = min{i >= 1 : position i's window hits}.

    ``taus`` holds the hit position per trial with ``horizon`` standing
    in for censored trials (no hit by the horizon); ``scaled`` is tau
    times the target mass, the normalization under which the law tends
    to Exp(1).  ``ks`` is the one-sample Kolmogorov-Smirnov distance of
    the uncensored scaled times against Exp(1).  Aborted trials (digit
    refinement cap) stay censored at the horizon and are listed in
    ``aborted`` so nothing disappears from the accounting.
    """

    taus: np.ndarray
    censored: np.ndarray
    mu: float
    horizon: int
    trials: int
    n: int
    law: str
    seed: int
    system: str = "gauss"
    aborted: list = field(default_factory=list)

    @property
    def scaled(self) -> np.ndarray:
        return self.taus[~self.censored] * self.mu

    @property
    def censored_fraction(self) -> float:
        return float(self.censored.mean())

    @property
    def ks(self) -> float:
        return ks_statistic_exp1(self.scaled)


def ks_statistic_exp1(sample) -> float:
    """One-sample KS distance of the values against the Exp(1) cdf."""
    x = np.sort(np.asarray(sample, dtype=float))
    size = x.size
    if size == 0:
        raise ConfigError("KS needs a nonempty sample")
    cdf = -np.expm1(-x)
    d_plus = float((np.arange(1, size + 1) / size - cdf).max())
    d_minus = float((cdf - np.arange(size) / size).max())
    return max(d_plus, d_minus)


def scan_first_hit(stream: DigitStream, fam, n: int, horizon: int,
                   block: int = 2048):
    """First position i in [1, horizon] whose window hits, else None.

    Digits are pulled in blocks so a trial only pays for the orbit up to
    its hit, not for the full horizon.
    """
    if horizon < 1:
        raise ConfigError("horizon must be >= 1")
    w = fam.window
    pos = 1
    while pos <= horizon:
        hi = min(horizon, pos + block - 1)
        digits = stream.take(hi + w)
        arr = _targets._digits_to_array(digits[pos:], hi + w - pos)
        mask = fam.hit_mask(arr, hi - pos + 1, n)
        found = np.flatnonzero(mask)
        if found.size:
            return pos + int(found[0])
        pos = hi + 1
    return None


def first_hit_times(system: str, fam, n: int, trials: int, law: str,
                    seed: int, workers=None, horizon=None, chunk: int = 1024,
                    chain=None, k_threshold=None) -> HitTimeSample:
    """Scaled first-hit times and their censoring bookkeeping.

    The horizon defaults to ceil(20 / target mass): the Exp(1) mass
    beyond 20 is about 2e-9, far below Monte Carlo resolution, so the
    censored fraction stays negligible without unbounded orbits.
    """
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    workers = resolve_workers(workers)
    if system == "renewal":
        if law != STATIONARY:
            raise ConfigError(f"renewal system needs law stationary, got {law!r}")
        if chain is None or k_threshold is None:
            raise ConfigError("renewal system needs chain and k_threshold")
        mu = chain.stationary_tail(k_threshold)
        if horizon is None:
            horizon = math.ceil(20.0 / mu)
        taus = _renewal.first_hits(chain, k_threshold, horizon, trials, seed,
                                   start=1)
        return HitTimeSample(taus, taus >= horizon, mu, horizon, trials, n,
                             law, seed, system)
    if system != "gauss":
        raise ConfigError(f"unknown system {system!r}")
    if law not in (GAUSS, LEBESGUE):
        raise ConfigError(f"gauss system needs law gauss|lebesgue, got {law!r}")
    mu = _targets.target_measure(fam, n)
    if horizon is None:
        horizon = math.ceil(20.0 / mu)
    # budget digits for the typical hit, not the horizon; the stream
    # refines itself for the rare deep trials
    typical = min(horizon, math.ceil(6.0 / mu)) + fam.window
    bits = trial_bit_budget(typical)

    taus = np.full(trials, horizon, dtype=np.int64)
    censored = np.ones(trials, dtype=bool)
    aborted = []

    def scan_chunk(lo, hi):
        out = []
        for t in range(lo, hi):
            stream = DigitStream.for_trial(seed, t, bits, law)
            try:
                tau = scan_first_hit(stream, fam, n, horizon)
            except PrecisionError:
                out.append((t, -1))
                continue
            out.append((t, -2 if tau is None else tau))
        return out

    for rows in _run_chunks(scan_chunk, trials, chunk, workers):
        for t, tau in rows:
            if tau == -1:
                aborted.append(t)
            elif tau >= 0:
                taus[t] = tau
                censored[t] = False
    return HitTimeSample(taus, censored, mu, horizon, trials, n, law, seed,
                         "gauss", sorted(aborted))


# --- overlap cross-check ------------------------------------------------


def overlap_montecarlo(fam, n: int, lag: int, trials: int, seed: int,
                       law: str = GAUSS, workers=None, chunk: int = 4096):
    """Monte Carlo estimate of mu(A_n intersect T^-lag A_n) with its SE.

    Cross-validates the exact closed forms and the discretized-operator
    overlaps from an entirely independent direction (digit sampling).
    """
    if lag < 1:
        raise ConfigError("lag must be >= 1")
    workers = resolve_workers(workers)
    need = lag + fam.window
    bits = trial_bit_budget(need)

    def joint_chunk(lo, hi):
        hits = 0
        for t in range(lo, hi):
            stream = DigitStream.for_trial(seed, t, bits, law)
            arr = _targets._digits_to_array(stream.take(need), need)
            mask = fam.hit_mask(arr, lag + 1, n)
            hits += int(mask[0] and mask[lag])
        return hits

    joint = sum(_run_chunks(joint_chunk, trials, chunk, workers))
    p = joint / trials
    se = math.sqrt(p * (1.0 - p) / trials)
    return p, se
