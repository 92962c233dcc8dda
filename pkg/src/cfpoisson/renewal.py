r"""Renewal Markov chain on the positive integers.

From state 1 the chain jumps to state i with probability f_i; from any state
k > 1 it steps down deterministically to k - 1. Excursions away from state 1
therefore have i.i.d. lengths distributed like f, which makes the chain the
standard renewal model: everything about it (stationary law, tail masses,
mean recurrence) is analytic, so Monte Carlo output can be checked against
closed forms.

Weight families
---------------
``factorial``
    f_i = 1/(i! (e-1)), the running-example chain. Equals ``poisson`` at
    c = 1 and is kept as its own kind so reports name it distinctly.
``poisson``
    f_i = c^i / (i! (e^c - 1)) for c > 0.
``geometric``
    f_i = (1-rho) rho^(i-1) for 0 < rho < 1.
``zeta``
    f_i = i^(-s)/zeta(s). Needs s > 1 to normalize; the stationary law
    exists only for s > 2 (finite mean) and the constructor is happy with
    any s > 1 precisely so the failure is observable.
``explicit``
    user-supplied finite weight vector.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import optimize, special

__all__ = [
    "RenewalChain",
    "calibrate_poisson_tail",
    "hit_counts",
    "first_hits",
]

_TRUNC_TOL = 1e-12
_MAX_STATES = 5_000_000


def _poisson_sf(k: int, c: float) -> float:
    """P(X >= k) for X ~ Poisson(c), k >= 0."""
    if k <= 0:
        return 1.0
    return float(special.gammainc(k, c))


class RenewalChain:
    """Renewal chain with jump weights f; see the module docstring."""

    def __init__(self, kind: str, f: np.ndarray, params: dict):
        self.kind = kind
        self.params = params
        self.f = f  # f[i-1] = f_i, truncated so the dropped tail < 1e-12
        self._cdf_f = np.cumsum(f)
        self._pi = None
        # analytic mass of the dropped jump tail; ~1e-12 except for zeta
        # weights near s = 2 where the state cap binds (then it is reported
        # rather than hidden)
        self.trunc_tail = self.tail_f(len(f) + 1)

    # -- constructors --------------------------------------------------

    @classmethod
    def factorial(cls) -> "RenewalChain":
        chain = cls.poisson_weights(1.0)
        chain.kind = "factorial"
        chain.params = {}
        return chain

    @classmethod
    def poisson_weights(cls, c: float) -> "RenewalChain":
        if not (c > 0) or not math.isfinite(c):
            raise ValueError(f"poisson weight parameter must be positive, got {c}")
        norm = math.expm1(c)
        n, f = 1, []
        while True:
            w = math.exp(n * math.log(c) - math.lgamma(n + 1)) / norm
            f.append(w)
            # dropped tail P(X > n) e^c / (e^c - 1)
            if _poisson_sf(n + 1, c) * (1 + 1 / norm) < _TRUNC_TOL:
                break
            n += 1
        return cls("poisson", np.array(f), {"c": c})

    @classmethod
    def geometric(cls, rho: float) -> "RenewalChain":
        if not (0 < rho < 1):
            raise ValueError(f"geometric parameter must be in (0,1), got {rho}")
        n = max(int(math.log(_TRUNC_TOL) / math.log(rho)) + 2, 4)
        i = np.arange(1, n + 1)
        return cls("geometric", (1 - rho) * rho ** (i - 1.0), {"rho": rho})

    @classmethod
    def zeta_weights(cls, s: float) -> "RenewalChain":
        if not (s > 1):
            raise ValueError(f"zeta weights need s > 1 to normalize, got {s}")
        z = float(special.zeta(s, 1))
        # Hurwitz tail zeta(s, n)/zeta(s) < tol
        n = int((1 / ((s - 1) * z * _TRUNC_TOL)) ** (1 / (s - 1))) + 2
        if n > _MAX_STATES:
            n = _MAX_STATES
        i = np.arange(1, n + 1, dtype=np.float64)
        return cls("zeta", i ** (-s) / z, {"s": s})

    @classmethod
    def explicit(cls, weights) -> "RenewalChain":
        f = np.asarray(weights, dtype=np.float64)
        if f.ndim != 1 or len(f) == 0:
            raise ValueError("explicit weights must be a nonempty 1-d vector")
        if (f < 0).any():
            raise ValueError("explicit weights must be nonnegative")
        total = f.sum()
        if abs(total - 1) > 1e-9:
            raise ValueError(f"explicit weights sum to {total}, not 1")
        return cls("explicit", f / total, {"size": len(f)})

    # -- analytic quantities --------------------------------------------

    def tail_f(self, k: int) -> float:
        """P(jump from state 1 lands at or above k)."""
        if k <= 1:
            return 1.0
        kind = self.kind
        if kind in ("factorial", "poisson"):
            c = self.params.get("c", 1.0)
            return _poisson_sf(k, c) / (-math.expm1(-c))
        if kind == "geometric":
            return self.params["rho"] ** (k - 1)
        if kind == "zeta":
            s = self.params["s"]
            return float(special.zeta(s, k) / special.zeta(s, 1))
        return float(self.f[k - 1 :].sum())

    @property
    def mean_jump(self) -> float:
        """Mean excursion length sum i f_i (= 1/pi_1 when finite)."""
        kind = self.kind
        if kind in ("factorial", "poisson"):
            c = self.params.get("c", 1.0)
            return c / (-math.expm1(-c))
        if kind == "geometric":
            return 1.0 / (1 - self.params["rho"])
        if kind == "zeta":
            s = self.params["s"]
            if s <= 2:
                return math.inf
            return float(special.zeta(s - 1, 1) / special.zeta(s, 1))
        return float(np.arange(1, len(self.f) + 1) @ self.f)

    def stationary_tail(self, k: int) -> float:
        """Stationary mass of {k, k+1, ...}, computed analytically.

        Equals sum_{j >= k-1} tail_f(j+1) / mean, i.e. E[(X-k+1)^+]/E[X]
        for the jump law X. This avoids truncating the stationary vector,
        which matters for heavy-tailed weights.
        """
        if k <= 1:
            return 1.0
        m = self.mean_jump
        if not math.isfinite(m):
            raise ValueError(f"{self.kind} weights have infinite mean, no stationary law")
        kind = self.kind
        if kind in ("factorial", "poisson"):
            c = self.params.get("c", 1.0)
            # sum_{i>=k} (i-k+1) f_i, with sum_{i>=k} i c^i/i! = c e^c P(X>=k-1)
            num = (c * _poisson_sf(k - 1, c) - (k - 1) * _poisson_sf(k, c)) / (-math.expm1(-c))
            return num / m
        if kind == "geometric":
            return self.params["rho"] ** (k - 1)
        if kind == "zeta":
            s = self.params["s"]
            z = float(special.zeta(s, 1))
            num = (float(special.zeta(s - 1, k)) - (k - 1) * float(special.zeta(s, k))) / z
            return num / m
        i = np.arange(1, len(self.f) + 1)
        return float(np.clip(i - k + 1, 0, None) @ self.f) / m

    def stationary(self, tol: float = 1e-12, max_states: int = _MAX_STATES) -> np.ndarray:
        """Stationary probabilities pi_1..pi_N with dropped tail below tol.

        pi_k is proportional to r_{k-1} = P(jump >= k), normalized by the
        mean jump. Raises for infinite-mean weights and when the tail decays
        too slowly to reach ``tol`` within ``max_states`` (heavy-tailed zeta
        weights; loosen tol in that case).
        """
        m = self.mean_jump
        if not math.isfinite(m):
            raise ValueError(f"{self.kind} weights have infinite mean, no stationary law")
        if self._pi is not None and self._pi[1] <= tol:
            return self._pi[0]
        n = len(self.f)
        while self.stationary_tail(n + 2) > tol:
            n = int(n * 1.5) + 16
            if n > max_states:
                raise ValueError(
                    f"stationary tail still {self.stationary_tail(max_states):g} at "
                    f"{max_states} states; loosen tol for heavy-tailed weights")
        fpad = np.zeros(n)
        take = min(len(self.f), n)
        fpad[:take] = self.f[:take]
        r = np.empty(n)  # r[k] = P(jump > k) so pi_{k+1} = r[k]/mean
        r[0] = 1.0
        r[1:] = 1.0 - np.cumsum(fpad[:-1])
        np.clip(r, 0.0, None, out=r)
        pi = r / m
        self._pi = (pi, tol)
        return pi

    def gibbs_ratio_bound(self, floor: float = 1e-250, scan: int = 10000) -> float:
        """sup/inf over the support of the hazard ratios f_i / r_{i-1}.

        A finite value is the chain-side distortion constant; no particular
        magnitude is asserted anywhere, it is reported for inspection. The
        survivals r_{i-1} come from the analytic tail (cumulative-sum
        subtraction would drown the deep tail in rounding noise); the scan
        is capped for very long weight vectors.
        """
        n = min(len(self.f), scan)
        hi, lo = -math.inf, math.inf
        for i in range(1, n + 1):
            fi, ri = self.f[i - 1], self.tail_f(i)
            if fi <= floor or ri <= floor:
                continue
            h = fi / ri
            hi, lo = max(hi, h), min(lo, h)
        return hi / lo

    def transition_matrix(self, size: int) -> np.ndarray:
        """Dense truncated transition matrix on states 1..size.

        Row 0 is the jump law with the truncated remainder lumped into the
        last column so rows sum to 1 exactly; meant for residual checks at
        sizes where that lump is negligible.
        """
        P = np.zeros((size, size))
        take = min(size, len(self.f))
        P[0, :take] = self.f[:take]
        P[0, -1] += max(1.0 - P[0].sum(), 0.0)
        idx = np.arange(1, size)
        P[idx, idx - 1] = 1.0
        return P

    # -- simulation ------------------------------------------------------

    def _trial_generators(self, seed: int, trials: range):
        mask = (1 << 64) - 1
        return [
            np.random.Generator(np.random.Philox(key=((seed & mask) << 64) | (t & mask)))
            for t in trials
        ]

    def sample_path(self, length: int, seed: int = 0, trial: int = 0) -> np.ndarray:
        """One stationary path of the given length (states, 1-based)."""
        out = hit_counts(self, k_threshold=None, n=length, trials=1, seed=seed,
                         _first_trial=trial, _return_paths=True)
        return out[0]


def calibrate_poisson_tail(k: int, n: int, target: float = 1.0) -> float:
    """Weight parameter c with n * stationary_tail(k) = target.

    Used to put the expected hit count of the tail target {state >= k} at a
    prescribed value for a given orbit length.
    """
    if k < 2:
        raise ValueError("threshold must be >= 2")

    def gap(log_c):
        chain = RenewalChain.poisson_weights(math.exp(log_c))
        return n * chain.stationary_tail(k) - target

    lo, hi = math.log(1e-8), math.log(50.0)
    return math.exp(optimize.brentq(gap, lo, hi, xtol=1e-13))


def _chunked(trials: int, chunk: int):
    start = 0
    while start < trials:
        yield range(start, min(start + chunk, trials))
        start += chunk


def hit_counts(chain: RenewalChain, k_threshold, n: int, trials: int, seed: int = 0,
               chunk: int = 1024, _first_trial: int = 0, _return_paths: bool = False):
    """Hit counts of {state >= k_threshold} along stationary paths.

    Each trial owns a keyed Philox stream: one uniform starts the path from
    the stationary law and one uniform is consumed per step whether or not
    the step is a renewal jump, so results do not depend on chunking.

    Returns an integer histogram ``counts`` with counts[c] trials seeing c
    hits (or the raw paths when ``_return_paths`` is set, for diagnostics).
    """
    pi = chain.stationary()
    cdf_pi = np.cumsum(pi)
    cdf_f = chain._cdf_f
    top_pi, top_f = len(cdf_pi), len(cdf_f)
    hist = np.zeros(1, dtype=np.int64)
    paths = []
    for rng_block in _chunked(trials, chunk):
        gens = chain._trial_generators(seed, range(rng_block.start + _first_trial,
                                                   rng_block.stop + _first_trial))
        u = np.stack([g.random(n + 1) for g in gens])
        state = np.minimum(np.searchsorted(cdf_pi, u[:, 0], side="right") + 1, top_pi)
        if _return_paths:
            path = np.empty((len(gens), n), dtype=np.int64)
        hits = np.zeros(len(gens), dtype=np.int64)
        for i in range(n):
            if _return_paths:
                path[:, i] = state
            if k_threshold is not None:
                hits += state >= k_threshold
            jump = state == 1
            nxt = np.minimum(np.searchsorted(cdf_f, u[:, i + 1], side="right") + 1, top_f)
            state = np.where(jump, nxt, state - 1)
        if _return_paths:
            paths.append(path)
            continue
        c = np.bincount(hits)
        if len(c) > len(hist):
            c[: len(hist)] += hist
            hist = c
        else:
            hist[: len(c)] += c
    if _return_paths:
        return np.concatenate(paths)
    return hist


def first_hits(chain: RenewalChain, k_threshold: int, horizon: int, trials: int,
               seed: int = 0, chunk: int = 256, step_block: int = 2048,
               start: int = 0) -> np.ndarray:
    """First index i in [start, horizon) with state_i >= k_threshold, per trial.

    Censored trials (no hit before the horizon) report ``horizon``. Uniforms
    are drawn in fixed-size blocks from each trial's keyed stream, so the
    result is chunking-independent here too.
    """
    pi = chain.stationary()
    cdf_pi = np.cumsum(pi)
    cdf_f = chain._cdf_f
    top_pi, top_f = len(cdf_pi), len(cdf_f)
    out = np.empty(trials, dtype=np.int64)
    for rng_block in _chunked(trials, chunk):
        gens = chain._trial_generators(seed, rng_block)
        m = len(gens)
        u0 = np.array([g.random() for g in gens])
        state = np.minimum(np.searchsorted(cdf_pi, u0, side="right") + 1, top_pi)
        tau = np.full(m, horizon, dtype=np.int64)
        alive = np.ones(m, dtype=bool)
        i = 0
        while i < horizon and alive.any():
            u = np.stack([g.random(step_block) for g in gens])
            for j in range(step_block):
                if i >= horizon:
                    break
                if i >= start:
                    hit = alive & (state >= k_threshold)
                    tau[hit] = i
                    alive &= ~hit
                jump = state == 1
                nxt = np.minimum(np.searchsorted(cdf_f, u[:, j], side="right") + 1, top_f)
                state = np.where(jump, nxt, state - 1)
                i += 1
        out[rng_block.start : rng_block.stop] = tau
    return out
