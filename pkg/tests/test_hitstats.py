"""Monte Carlo statistics: reference laws, distances, and trial plumbing.

Statistical assertions use generous sigma bands, but every sampled run is
keyed by an explicit seed, so once green they are frozen regressions, not
flaky coin flips.
"""

import math
from fractions import Fraction as F

import numpy as np
import pytest
import scipy.stats

from cfpoisson import hitstats, renewal, targets
from cfpoisson.cf import GAUSS, LEBESGUE
from cfpoisson.errors import ConfigError, PrecisionError
from cfpoisson.hitstats import (
    STATIONARY,
    HitHistogram,
    empirical_laplace,
    first_hit_times,
    ks_statistic_exp1,
    overlap_montecarlo,
    poisson_pmf,
    poisson_pmf_table,
    resolve_workers,
    run_trials,
    scan_first_hit,
    tv_distance,
)
from cfpoisson.sampling import DigitStream
from cfpoisson.targets import TailSet, TupleSet


def make_hist(counts, **kw):
    counts = np.asarray(counts, dtype=np.int64)
    args = dict(trials=int(counts.sum()), n=10, t_hat=1.0, law=GAUSS, seed=0)
    args.update(kw)
    return HitHistogram(counts, **args)


# --- Poisson reference ----------------------------------------------------


def test_poisson_pmf_examples():
    t = 1.0 / math.log(2.0)
    p0 = poisson_pmf(t, 0)
    assert p0 == pytest.approx(math.exp(-t), rel=1e-15)
    assert p0 == pytest.approx(0.2363, abs=1e-4)
    total = sum(poisson_pmf(2.0, k) for k in range(61))
    assert total == pytest.approx(1.0, abs=1e-12)


def test_poisson_pmf_log_space_stability():
    # far tail: naive t^k/k! overflows long before this
    ref = scipy.stats.poisson.pmf(150, 5.0)
    assert poisson_pmf(5.0, 150) == pytest.approx(ref, rel=1e-10)
    assert poisson_pmf(5.0, 150) > 0.0


def test_poisson_pmf_validation():
    with pytest.raises(ConfigError):
        poisson_pmf(0.0, 1)
    with pytest.raises(ConfigError):
        poisson_pmf(-1.0, 1)
    with pytest.raises(ConfigError):
        poisson_pmf(1.0, -1)
    with pytest.raises(ConfigError):
        poisson_pmf_table(0.0, 5)


def test_poisson_pmf_table_matches_scalar():
    table = poisson_pmf_table(1.7, 40)
    for k in (0, 1, 7, 40):
        assert table[k] == pytest.approx(poisson_pmf(1.7, k), rel=1e-13)


# --- total variation ------------------------------------------------------


def test_tv_hand_examples():
    half = make_hist([2, 2])
    assert tv_distance(half, np.array([0.25, 0.75])).tv == pytest.approx(0.25)
    assert tv_distance(half, np.array([0.5, 0.5])).tv == pytest.approx(0.0)
    point = make_hist([4])
    assert tv_distance(point, np.array([0.0, 1.0])).tv == pytest.approx(1.0)


def test_tv_tail_folding():
    # all mass at k=0 vs Poisson(t): reference mass above the largest
    # observed k must fold into the tail cell, giving exactly 1 - e^{-t}
    t = 0.7
    report = tv_distance(make_hist([50]), lambda k: poisson_pmf(t, k))
    assert report.tv == pytest.approx(1.0 - math.exp(-t), rel=1e-12)
    assert report.tail_reference == pytest.approx(1.0 - math.exp(-t), rel=1e-12)


def test_tv_report_table():
    hist = make_hist([6, 3, 1])
    report = tv_distance(hist, lambda k: poisson_pmf(0.5, k))
    assert report.table.shape == (3, 5)
    assert report.table[:, 2].sum() == pytest.approx(1.0)
    p = 0.3
    assert report.table[1, 4] == pytest.approx(math.sqrt(p * (1 - p) / 10))
    assert report.trials == 10


# --- Laplace transform ----------------------------------------------------


def test_empirical_laplace_s_zero_exact():
    est = empirical_laplace(make_hist([3, 5, 2]), 0.0)
    assert est.value == 1.0
    assert est.std_err == 0.0


def test_empirical_laplace_hand_value():
    est = empirical_laplace(make_hist([1, 1]), math.log(2.0))
    assert est.value == pytest.approx(0.75, rel=1e-14)
    assert est.std_err == pytest.approx(math.sqrt(0.0625 / 2), rel=1e-12)


def test_empirical_laplace_negative_s():
    with pytest.raises(ConfigError):
        empirical_laplace(make_hist([4]), -0.1)


# --- KS distance ----------------------------------------------------------


def test_ks_statistic_matches_scipy():
    rng = np.random.default_rng(5)
    sample = rng.exponential(size=400)
    mine = ks_statistic_exp1(sample)
    ref = scipy.stats.kstest(sample, "expon").statistic
    assert mine == pytest.approx(ref, abs=1e-13)


def test_ks_statistic_empty():
    with pytest.raises(ConfigError):
        ks_statistic_exp1([])


# --- worker resolution ------------------------------------------------------


def test_resolve_workers(monkeypatch):
    assert resolve_workers(3) == 3
    monkeypatch.setenv("CFPOISSON_THREADS", "5")
    assert resolve_workers() == 5
    assert resolve_workers(2) == 2  # explicit beats env
    monkeypatch.setenv("CFPOISSON_THREADS", "many")
    with pytest.raises(ConfigError):
        resolve_workers()
    monkeypatch.delenv("CFPOISSON_THREADS")
    assert resolve_workers() >= 1
    with pytest.raises(ConfigError):
        resolve_workers(0)


# --- run_trials -----------------------------------------------------------


def test_run_trials_validation():
    fam = TailSet()
    with pytest.raises(ConfigError):
        run_trials("circle", fam, 10, 5, GAUSS, 0)
    with pytest.raises(ConfigError):
        run_trials("gauss", fam, 10, 5, STATIONARY, 0)
    with pytest.raises(ConfigError):
        run_trials("gauss", None, 10, 5, GAUSS, 0)
    with pytest.raises(ConfigError):
        run_trials("gauss", fam, 10, 0, GAUSS, 0)
    with pytest.raises(ConfigError):
        run_trials("renewal", None, 10, 5, GAUSS, 0)
    with pytest.raises(ConfigError):
        run_trials("renewal", None, 10, 5, STATIONARY, 0)  # no chain


def test_run_trials_deterministic_across_workers_and_chunks():
    fam = TailSet()
    base = run_trials("gauss", fam, 20, 300, GAUSS, 42, workers=1, chunk=64)
    for workers, chunk in [(2, 64), (4, 64), (1, 7), (3, 2048)]:
        other = run_trials("gauss", fam, 20, 300, GAUSS, 42,
                           workers=workers, chunk=chunk)
        assert np.array_equal(base.counts, other.counts)
        assert base.aborted == other.aborted
    assert int(base.counts.sum()) == 300
    assert base.t_hat == targets.expected_hits(fam, 20)
    assert base.family == "tail"
    assert base.empirical().sum() == pytest.approx(1.0)


def test_run_trials_mean_matches_intensity():
    fam = TailSet()
    hist = run_trials("gauss", fam, 50, 2000, GAUSS, 11)
    t = hist.t_hat
    sigma = math.sqrt(t / 2000)
    assert abs(hist.mean() - t) < 3.5 * sigma
    # pre-asymptotic n, so only a loose sanity band on the distance
    assert tv_distance(hist, lambda k: poisson_pmf(t, k)).tv < 0.08


def test_run_trials_lebesgue_law():
    fam = TailSet()
    hist = run_trials("gauss", fam, 50, 1200, LEBESGUE, 23)
    assert hist.law == LEBESGUE
    t = hist.t_hat
    assert abs(hist.mean() - t) < 4 * math.sqrt(t / 1200)


def test_run_trials_renewal_dispatch():
    chain = renewal.RenewalChain.poisson_weights(1.0)
    hist = run_trials("renewal", None, 300, 4000, STATIONARY, 9,
                      chain=chain, k_threshold=3)
    assert hist.system == "renewal"
    assert hist.t_hat == pytest.approx(300 * chain.stationary_tail(3), rel=1e-12)
    assert int(hist.counts.sum()) == 4000
    assert abs(hist.mean() - hist.t_hat) / hist.t_hat < 0.1


def test_histogram_accounting_validation():
    with pytest.raises(ConfigError):
        HitHistogram(np.array([3]), trials=5, n=1, t_hat=1.0, law=GAUSS, seed=0)
    ok = HitHistogram(np.array([3]), trials=5, n=1, t_hat=1.0, law=GAUSS,
                      seed=0, aborted=[1, 4])
    assert ok.scored == 3


def test_aborted_trials_reported(monkeypatch):
    class FlakyStream:
        def __init__(self, trial):
            self.trial = trial

        @classmethod
        def for_trial(cls, seed, trial, bits, law):
            return cls(trial)

        def take(self, count):
            if self.trial in (3, 5):
                raise PrecisionError("forced")
            return [1] * count

    monkeypatch.setattr(hitstats, "DigitStream", FlakyStream)
    hist = run_trials("gauss", TailSet(), 20, 8, GAUSS, 0, workers=2, chunk=3)
    assert hist.aborted == [3, 5]
    assert int(hist.counts[0]) == 6
    assert hist.scored == 6
    assert hist.empirical()[0] == pytest.approx(1.0)


# --- first hit times --------------------------------------------------------


def test_scan_first_hit_matches_bruteforce():
    horizon = 150
    for fam, n in [(TailSet(), 12), (TupleSet(2), 8)]:
        w = fam.window
        for trial in range(12):
            full = DigitStream.for_trial(31, trial, 4 * (horizon + w) + 64,
                                         GAUSS)
            arr = targets._digits_to_array(full.take(horizon + w), horizon + w)
            mask = fam.hit_mask(arr[1:], horizon, n)
            idx = np.flatnonzero(mask)
            expected = None if idx.size == 0 else 1 + int(idx[0])
            fresh = DigitStream.for_trial(31, trial, 4 * (horizon + w) + 64,
                                          GAUSS)
            assert scan_first_hit(fresh, fam, n, horizon, block=13) == expected


def test_scan_first_hit_bad_horizon():
    stream = DigitStream.for_trial(0, 0, 256, GAUSS)
    with pytest.raises(ConfigError):
        scan_first_hit(stream, TailSet(), 10, 0)


def test_first_hit_times_gauss():
    fam = TailSet()
    sample = first_hit_times("gauss", fam, 50, 1200, GAUSS, 7)
    assert sample.horizon == math.ceil(20.0 / sample.mu)
    assert sample.taus.min() >= 1
    assert sample.censored_fraction <= 1 / 1200
    assert abs(sample.scaled.mean() - 1.0) < 0.1
    assert sample.ks < 0.06
    again = first_hit_times("gauss", fam, 50, 1200, GAUSS, 7, workers=3,
                            chunk=77)
    assert np.array_equal(sample.taus, again.taus)
    assert np.array_equal(sample.censored, again.censored)


def test_first_hit_times_renewal():
    c = renewal.calibrate_poisson_tail(3, 200, 1.0)
    chain = renewal.RenewalChain.poisson_weights(c)
    sample = first_hit_times("renewal", None, 200, 600, STATIONARY, 13,
                             chain=chain, k_threshold=3)
    assert sample.system == "renewal"
    assert sample.taus.min() >= 1
    assert sample.censored_fraction < 0.01
    assert abs(sample.scaled.mean() - 1.0) < 0.13
    assert sample.ks < 0.08


def test_first_hit_times_validation():
    with pytest.raises(ConfigError):
        first_hit_times("renewal", None, 10, 5, STATIONARY, 0)
    with pytest.raises(ConfigError):
        first_hit_times("gauss", TailSet(), 10, 5, STATIONARY, 0)
    with pytest.raises(ConfigError):
        first_hit_times("other", TailSet(), 10, 5, GAUSS, 0)


def test_golden_ratio_orbit_is_censored():
    # the all-ones cylinder: every certified digit is 1, so a tail target
    # with threshold >= 2 is never hit and the trial censors cleanly
    fib = [1, 1]
    while len(fib) < 33:
        fib.append(fib[-1] + fib[-2])
    lo, hi = F(fib[29], fib[30]), F(fib[30], fib[31])
    assert lo < hi
    stream = DigitStream.from_interval((lo, hi))
    fam = TailSet()
    assert scan_first_hit(stream, fam, 1, horizon=15) is None
    deeper = DigitStream.from_interval((lo, hi))
    with pytest.raises(PrecisionError):
        scan_first_hit(deeper, fam, 1, horizon=200)


# --- overlap cross-check ----------------------------------------------------


def test_overlap_montecarlo_matches_exact():
    fam = TailSet()
    exact = targets.overlap_measure(fam, 10, 1)
    est, se = overlap_montecarlo(fam, 10, 1, 60000, seed=3)
    assert se < 0.001
    assert abs(est - exact) < 3.5 * se


def test_overlap_montecarlo_validation():
    with pytest.raises(ConfigError):
        overlap_montecarlo(TailSet(), 10, 0, 100, seed=0)
