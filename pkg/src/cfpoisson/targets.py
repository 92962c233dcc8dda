r"""Shrinking target families for digit-pattern hit statistics.

Each family assigns to an orbit length n a target set A_n defined through
the first digits of the expansion, with n * measure(A_n) tending to a
finite constant. Hits are counted over orbit positions i = 0..n-1; the
window at position i reads digits a_{i+1}..a_{i+m} (digits are 1-indexed,
positions 0-indexed), so a trial needs n - 1 + m certified digits.

Families
--------
``TailSet(theta)``
    A_n = (0, 1/thr) with thr = floor(theta n) + 1, i.e. first digit >= thr.
``TupleSet(m, theta)``
    m consecutive digits all >= K = floor((theta n)^(1/m)). For m >= 2 this
    is an infinite union of intervals; measures come from closed forms
    (telescoping for m = 2, a log-gamma second difference for m = 3) or a
    collocation recursion for larger m.
``PatternSet()``
    the cylinder of the repeated pair (j, j) with j = floor(n^(1/4)).
``NegControl()``
    cyl[1, n] union cyl[n, 1]: two patterns that feed each other under the
    shift, built to violate the short-range separation assumption. Its
    overlap ratio at lag 1 stays bounded away from 0, while n * measure -> 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import special

from cfpoisson.cf import (GAUSS, LN2, RationalInterval, cylinder_interval,
                          cylinder_measure, interval_measure)

F = Fraction


def _int_root(value: float, m: int) -> int:
    """floor(value ** (1/m)) with integer-power boundary adjustment."""
    k = max(int(value ** (1.0 / m)), 1)
    while (k + 1) ** m <= value:
        k += 1
    while k > 1 and k**m > value:
        k -= 1
    return k


def _digits_to_array(digits, need: int) -> np.ndarray:
    try:
        return np.asarray(digits[:need], dtype=np.int64)
    except OverflowError:
        big = 1 << 62
        return np.fromiter((d if d < big else big for d in digits[:need]),
                           dtype=np.int64, count=need)


@dataclass(frozen=True)
class TailSet:
    """First digit at least floor(theta n) + 1."""

    theta: float = 1.0
    window: int = 1

    def __post_init__(self):
        if not (self.theta > 0):
            raise ValueError(f"theta must be positive, got {self.theta}")

    label = "tail"

    def threshold(self, n: int) -> int:
        return int(math.floor(self.theta * n)) + 1

    def intervals(self, n: int) -> list[RationalInterval]:
        return [RationalInterval(F(0), F(1, self.threshold(n)))]

    def measure(self, n: int) -> float:
        return interval_measure(self.intervals(n)[0], GAUSS)

    def hit_mask(self, arr: np.ndarray, count: int, n: int) -> np.ndarray:
        """Which of ``count`` consecutive window positions lie in A_n.

        ``arr`` holds the digits feeding those windows (at least
        count - 1 + window entries, position p reading arr[p]).
        """
        return arr[:count] >= self.threshold(n)

    def hits(self, digits, n: int) -> int:
        arr = _digits_to_array(digits, n)
        return int(self.hit_mask(arr, n, n).sum())

    def limit_t(self) -> float:
        return 1.0 / (self.theta * LN2)

    def describe(self, n: int) -> dict:
        return {"family": self.label, "theta": self.theta,
                "threshold": self.threshold(n)}


@dataclass(frozen=True)
class TupleSet:
    """m consecutive digits all at least floor((theta n)^(1/m))."""

    m: int = 2
    theta: float = 1.0

    def __post_init__(self):
        if not isinstance(self.m, int) or self.m < 1:
            raise ValueError(f"m must be a positive int, got {self.m}")
        if not (self.theta > 0):
            raise ValueError(f"theta must be positive, got {self.theta}")

    label = "tuple"

    @property
    def window(self) -> int:
        return self.m

    def threshold(self, n: int) -> int:
        return _int_root(self.theta * n, self.m)

    def block_interval(self, n: int) -> RationalInterval:
        """The one-digit building block (0, 1/K); A_n is the set of points
        whose next m digits all start in it."""
        return RationalInterval(F(0), F(1, self.threshold(n)))

    def intervals(self, n: int):
        if self.m == 1:
            return [self.block_interval(n)]
        return None  # infinite union; see block_interval / measure

    def measure(self, n: int) -> float:
        return tuple_block_measure(self.m, self.threshold(n))

    def hit_mask(self, arr: np.ndarray, count: int, n: int) -> np.ndarray:
        ok = arr >= self.threshold(n)
        acc = ok[:count].copy()
        for t in range(1, self.m):
            acc &= ok[t : t + count]
        return acc

    def hits(self, digits, n: int) -> int:
        arr = _digits_to_array(digits, n - 1 + self.m)
        return int(self.hit_mask(arr, n, n).sum())

    def limit_t(self) -> float:
        return 1.0 / (self.theta * LN2)

    def describe(self, n: int) -> dict:
        return {"family": self.label, "m": self.m, "theta": self.theta,
                "threshold": self.threshold(n)}


@dataclass(frozen=True)
class PatternSet:
    """Cylinder of the repeated pair (j, j), j = floor(n^(1/4))."""

    window: int = 2
    label = "pattern"

    def pattern_digit(self, n: int) -> int:
        return _int_root(float(n), 4)

    def word(self, n: int) -> list[int]:
        j = self.pattern_digit(n)
        return [j, j]

    def intervals(self, n: int) -> list[RationalInterval]:
        return [cylinder_interval(self.word(n))]

    def measure(self, n: int) -> float:
        return cylinder_measure(self.word(n), GAUSS)

    def hit_mask(self, arr: np.ndarray, count: int, n: int) -> np.ndarray:
        eq = arr == self.pattern_digit(n)
        return eq[:count] & eq[1 : count + 1]

    def hits(self, digits, n: int) -> int:
        arr = _digits_to_array(digits, n + 1)
        return int(self.hit_mask(arr, n, n).sum())

    def limit_t(self) -> float:
        return 1.0 / LN2

    def describe(self, n: int) -> dict:
        return {"family": self.label, "pattern_digit": self.pattern_digit(n)}


@dataclass(frozen=True)
class NegControl:
    """cyl[1, n] union cyl[n, 1]; clusters under the shift by design."""

    window: int = 2
    label = "negcontrol"

    def _check(self, n: int) -> None:
        if n < 2:
            raise ValueError("negative control needs n >= 2")

    def intervals(self, n: int) -> list[RationalInterval]:
        self._check(n)
        return [cylinder_interval([1, n]), cylinder_interval([n, 1])]

    def measure(self, n: int) -> float:
        return sum(interval_measure(iv, GAUSS) for iv in self.intervals(n))

    def hit_mask(self, arr: np.ndarray, count: int, n: int) -> np.ndarray:
        is1, isn = arr == 1, arr == n
        fwd = is1[:count] & isn[1 : count + 1]
        rev = isn[:count] & is1[1 : count + 1]
        return fwd | rev

    def hits(self, digits, n: int) -> int:
        self._check(n)
        arr = _digits_to_array(digits, n + 1)
        return int(self.hit_mask(arr, n, n).sum())

    def limit_t(self):
        return None  # n * measure -> 0: no nondegenerate Poisson limit

    def describe(self, n: int) -> dict:
        return {"family": self.label, "patterns": [[1, n], [n, 1]]}


FAMILIES = {"tail": TailSet, "tuple": TupleSet, "pattern": PatternSet,
            "negcontrol": NegControl}


# --- measures for digit-tuple blocks --------------------------------------


def tuple_block_measure(m: int, k: int) -> float:
    r"""Gauss measure of {m consecutive digits all >= k}.

    m = 1 is an interval. For m = 2 the set is the disjoint union over
    a >= k of (1/(a + 1/k), 1/a) and the branch measures telescope into
    log2(1 + 1/k^2) exactly. For m = 3 one digamma reduction leaves a
    log-gamma second difference. Larger m falls back to a Chebyshev
    collocation recursion accurate to ~1e-10.
    """
    if m < 1 or k < 1:
        raise ValueError("need m >= 1 and k >= 1")
    if m == 1:
        return math.log1p(1.0 / k) / LN2
    if m == 2:
        return math.log1p(float(F(1, k * k))) / LN2
    if m == 3:
        import mpmath as mp

        with mp.workdps(60):
            e = mp.mpf(1) / k
            d2 = mp.loggamma(k + 2 * e) - 2 * mp.loggamma(k + e) + mp.loggamma(k)
            return float(d2 / mp.log(2))
    return _tuple_measure_collocation(m, k)


def _tuple_measure_collocation(m: int, k: int, deg: int = 40,
                               direct: int = 400) -> float:
    """Functional recursion psi_{j+1}(z) = sum_b psi_j(1/(b+z))/(b+z)^2 on
    Chebyshev nodes, branch tail summed via Hurwitz zeta with a 2nd order
    Taylor expansion of psi_j at 0."""
    from numpy.polynomial import chebyshev as cheb

    psi = cheb.Chebyshev.interpolate(lambda z: 1.0 / (k + z), deg, domain=[0, 1])
    for _ in range(m - 2):
        prev = psi
        p0 = prev(0.0)
        p1 = prev.deriv(1)(0.0)
        p2 = prev.deriv(2)(0.0)
        top = k + direct

        def level(z, prev=prev, p0=p0, p1=p1, p2=p2, top=top):
            z = np.asarray(z, dtype=float)
            out = np.zeros_like(z)
            for b in range(k, top):
                w = 1.0 / (b + z)
                out += prev(w) * w * w
            out += (p0 * special.zeta(2, top + z)
                    + p1 * special.zeta(3, top + z)
                    + 0.5 * p2 * special.zeta(4, top + z))
            return out

        psi = cheb.Chebyshev.interpolate(level, deg, domain=[0, 1])
    nodes, weights = np.polynomial.legendre.leggauss(64)
    half = 0.5 / k
    x = (nodes + 1) * half
    return float(weights @ psi(x)) * half / LN2


# --- module-level ops ------------------------------------------------------


def target_measure(fam, n: int) -> float:
    """Measure of A_n for the family."""
    return fam.measure(n)


def expected_hits(fam, n: int) -> float:
    """t_hat = n * measure(A_n), the finite-n Poisson parameter."""
    return n * fam.measure(n)


def required_digits(fam, n: int) -> int:
    """Certified digits needed to score all n window positions."""
    return n - 1 + fam.window


def hits_in_orbit(fam, n: int, digits) -> int:
    """Number of positions i in [0, n) whose digit window lies in A_n."""
    if len(digits) < required_digits(fam, n):
        raise ValueError(
            f"need {required_digits(fam, n)} digits for n={n}, got {len(digits)}")
    return fam.hits(digits, n)


def overlap_measure(fam, n: int, lag: int = 1) -> float:
    """Exact measure of A_n intersected with its lag-step shift preimage.

    Only lag = 1 has closed forms across families (larger lags go through
    the discretized transfer operator; see
    :func:`cfpoisson.ulam.operator_overlap`).
    """
    if lag != 1:
        raise ValueError("exact overlaps are implemented for lag=1 only; "
                         "use ulam.operator_overlap for larger lags")
    if isinstance(fam, TailSet):
        thr = fam.threshold(n)
        # {a_1 >= thr, a_2 >= thr} telescopes like the m=2 tuple block
        return tuple_block_measure(2, thr)
    if isinstance(fam, TupleSet):
        return tuple_block_measure(fam.m + 1, fam.threshold(n))
    if isinstance(fam, PatternSet):
        j = fam.pattern_digit(n)
        return cylinder_measure([j, j, j], GAUSS)
    if isinstance(fam, NegControl):
        fam._check(n)
        return (cylinder_measure([1, n, 1], GAUSS)
                + cylinder_measure([n, 1, n], GAUSS))
    raise TypeError(f"unknown family {fam!r}")


def assumption_b_ratio(fam, n: int, lag: int = 1) -> float:
    """overlap(A_n, lag) / measure(A_n): the short-range clustering ratio.

    Vanishing ratios as n grows are what keep hit counts Poissonian; the
    negative control keeps this ratio near 1/4 at lag 1 by construction.
    """
    return overlap_measure(fam, n, lag) / fam.measure(n)
