"""Exact-arithmetic checks of the expansion's structural hypotheses.

Three groups of tools, all built on integer convergent arithmetic so that
rounding enters only at the final logarithm:

* inverse-branch derivatives (``branch_derivative``) and their uniform
  comparability with cylinder masses (``renyi_report``), the distortion
  property that makes cylinder measures multiplicative up to a constant;
* the overlap combinatorics of a cylinder with its own shift preimages
  (``cylinder_self_overlap``), which reduces a geometric intersection to
  a word-periodicity test;
* the short-return bound (``short_return_report``): over an exhaustive
  family of cylinders, the mass a cylinder returns to itself within
  len(word) steps, measured against mu(a)^(1 + 1/(1+n)).

These serve as correctness oracles for the statistical modules: the same
cylinders drive the Monte Carlo targets and the discretized operator, so
an error in the interval algebra would surface here first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product

import numpy as np

from .cf import GAUSS, LEBESGUE, LN2, convergents, cylinder_measure
from .errors import CertificationError, ConfigError

__all__ = [
    "ReturnBoundReport",
    "branch_derivative",
    "renyi_report",
    "cylinder_self_overlap",
    "short_return_ratio",
    "short_return_report",
]

# enumeration guardrails: total words across lengths, and the largest
# integer product the closed-form measure may form (must stay below 2^63)
_MAX_WORDS = 20_000_000
_MAX_MEASURE_PRODUCT = 1 << 62


@dataclass
class ReturnBoundReport:
    """Worst case of a ratio family enumerated exhaustively over cylinders.

    ``worst_witness`` is (word, k) for short returns and (word, x) for the
    distortion scan; ``constant`` is the estimated uniform constant (M for
    distortion, M_1 for short returns).  ``details`` carries scan-specific
    companions (min/max ratios, sample counts, enumeration sizes).
    """

    kind: str
    max_len: int
    max_digit: int
    worst_ratio: float
    worst_witness: tuple
    constant: float
    words: int
    details: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        witness_word, witness_at = self.worst_witness
        return {
            "kind": self.kind,
            "max_len": self.max_len,
            "max_digit": self.max_digit,
            "worst_ratio": self.worst_ratio,
            "witness_word": list(witness_word),
            "witness_at": str(witness_at),
            "constant": self.constant,
            "words": self.words,
            **{k: (v if not isinstance(v, tuple) else str(v))
               for k, v in self.details.items()},
        }


def _tail_convergents(word):
    """(p_{n-1}, q_{n-1}, p_n, q_n) for a digit word."""
    cs = convergents(word)
    p_n, q_n = cs[-1]
    p_m, q_m = cs[-2] if len(cs) >= 2 else (0, 1)
    return p_m, q_m, p_n, q_n


def _word_measure(word) -> float:
    """Gauss mass of a cylinder from integer convergents.

    Same value as :func:`cfpoisson.cf.cylinder_measure` (the interval
    width over 1 + left endpoint is formed exactly, then fed to log1p),
    but skips Fraction interval construction: the ratio is 1 over a
    single integer product, read off the convergents.
    """
    p_m, q_m, p, q = _tail_convergents(word)
    if len(word) % 2 == 0:
        den = (p + q) * (q + q_m)
    else:
        den = q * (p + p_m + q + q_m)
    return math.log1p(1.0 / den) / LN2


def branch_derivative(word, x, law: str = GAUSS) -> Fraction:
    """|v'_a(x)| for the inverse branch v_a onto the word's cylinder.

    Lebesgue law: 1/(q_{n-1} x + q_n)^2 from the convergents of the word.
    Gauss law: that times the density ratio (1+x)/(1+v_a(x)); the 1/ln 2
    factors cancel, so both laws yield an exact Fraction for rational x.
    """
    if not word:
        raise ConfigError("word must be non-empty")
    x = Fraction(x)
    if not (0 <= x <= 1):
        raise ConfigError(f"x must lie in [0, 1], got {x}")
    p_m, q_m, p_n, q_n = _tail_convergents(word)
    leb = Fraction(1) / (q_m * x + q_n) ** 2
    if law == LEBESGUE:
        return leb
    if law != GAUSS:
        raise ConfigError(f"unknown law {law!r}")
    v = (p_n + p_m * x) / (q_n + q_m * x)
    return leb * (1 + x) / (1 + v)


def _check_caps(max_len: int, max_digit: int, min_len: int = 1) -> int:
    if max_len < min_len:
        raise ConfigError(f"max_len must be >= {min_len}")
    if max_digit < 1:
        raise ConfigError("max_digit must be >= 1")
    words = sum(max_digit ** n for n in range(1, max_len + 1))
    if words > _MAX_WORDS:
        raise ConfigError(
            f"caps enumerate {words} words; largest supported is {_MAX_WORDS}")
    return words


def _convergent_grids(n: int, max_digit: int):
    """Flattened p_{n-1}, p_n, q_{n-1}, q_n over every length-n word.

    Words are laid out in lexicographic order (C order of the digit
    grid), so flat index i decodes to a word via unravel_index.
    """
    shape = (max_digit,) * n
    digits = np.arange(1, max_digit + 1, dtype=np.int64)
    p_prev, p = np.ones(shape, np.int64), np.zeros(shape, np.int64)
    q_prev, q = np.zeros(shape, np.int64), np.ones(shape, np.int64)
    for k in range(n):
        a = digits.reshape((1,) * k + (max_digit,) + (1,) * (n - 1 - k))
        p, p_prev = a * p + p_prev, p
        q, q_prev = a * q + q_prev, q
    return (p_prev.ravel(), p.ravel(), q_prev.ravel(), q.ravel())


def _grid_measures(n, p_m, p, q_m, q) -> np.ndarray:
    if n % 2 == 0:
        den = (p + q) * (q + q_m)
    else:
        den = q * (p + p_m + q + q_m)
    return np.log1p(1.0 / den) / LN2


def _decode_word(flat: int, n: int, max_digit: int) -> list:
    idx = np.unravel_index(flat, (max_digit,) * n)
    return [int(i) + 1 for i in idx]


def renyi_report(max_len: int, max_digit: int,
                 samples_per_cylinder: int = 5) -> ReturnBoundReport:
    """Uniform comparability of branch derivatives with cylinder masses.

    Exhausts every word with length <= max_len and digits <= max_digit;
    for each, evaluates the Gauss-law v'_a at samples_per_cylinder
    interior grid points of the branch image plus both endpoints (every
    branch of the map is onto, so the image is the full unit interval)
    and tracks the extremes of v'_a(x)/mu(a).  The reported constant
    M = max(max_ratio, 1/min_ratio) is the empirical bound in
    mu(a)/M <= v'_a(x) <= M mu(a) over the family.
    """
    words = _check_caps(max_len, max_digit)
    if samples_per_cylinder < 1:
        raise ConfigError("samples_per_cylinder must be >= 1")
    if (max_digit + 1) ** max_len >= math.isqrt(_MAX_MEASURE_PRODUCT // 4):
        raise ConfigError("caps overflow the vectorized convergent scan")
    xs = [Fraction(j, samples_per_cylinder + 1)
          for j in range(samples_per_cylinder + 2)]
    best_max = (-math.inf, None)
    best_min = (math.inf, None)
    for n in range(1, max_len + 1):
        p_m, p, q_m, q = _convergent_grids(n, max_digit)
        mu = _grid_measures(n, p_m, p, q_m, q)
        for x in xs:
            xf = float(x)
            leb = 1.0 / (q_m * xf + q) ** 2
            v = (p + p_m * xf) / (q + q_m * xf)
            ratio = leb * (1.0 + xf) / ((1.0 + v) * mu)
            if not np.isfinite(ratio).all():
                bad = int(np.flatnonzero(~np.isfinite(ratio))[0])
                raise CertificationError(
                    f"non-finite derivative ratio at word "
                    f"{_decode_word(bad, n, max_digit)}, x={x}")
            hi = int(ratio.argmax())
            if ratio[hi] > best_max[0]:
                best_max = (float(ratio[hi]), (n, hi, x))
            lo = int(ratio.argmin())
            if ratio[lo] < best_min[0]:
                best_min = (float(ratio[lo]), (n, lo, x))
    max_ratio, (n_hi, flat_hi, x_hi) = best_max
    min_ratio, (n_lo, flat_lo, x_lo) = best_min
    max_w = (_decode_word(flat_hi, n_hi, max_digit), x_hi)
    min_w = (_decode_word(flat_lo, n_lo, max_digit), x_lo)
    constant = max(max_ratio, 1.0 / min_ratio)
    witness = max_w if max_ratio >= 1.0 / min_ratio else min_w
    return ReturnBoundReport(
        "renyi", max_len, max_digit, max_ratio, witness, constant, words,
        details={"min_ratio": min_ratio, "max_ratio": max_ratio,
                 "min_witness": min_w, "max_witness": max_w,
                 "samples_per_cylinder": samples_per_cylinder})


def cylinder_self_overlap(word, k: int) -> list:
    """Word of the cylinder a intersect T^{-k} a, or [] when empty.

    The intersection is nonempty exactly when the word overlaps itself
    shifted by k (word[k:] == word[:n-k]); it is then the cylinder of the
    length-(n+k) word formed by prepending the first k digits.
    """
    word = list(word)
    n = len(word)
    if not word:
        raise ConfigError("word must be non-empty")
    if not (1 <= k <= n):
        raise ConfigError(f"k must lie in [1, len(word)], got {k}")
    if word[k:] != word[: n - k]:
        return []
    return word[:k] + word


def short_return_ratio(word, k: int):
    """(overlap mass, base mass, ratio against mu(a)^(1+1/(1+n))).

    The ratio is the single-(word, k) contribution to the short-return
    constant; zero when the cylinder misses its shifted self entirely.
    """
    word = list(word)
    n = len(word)
    mu_a = _word_measure(word)
    over = cylinder_self_overlap(word, k)
    if not over:
        return 0.0, mu_a, 0.0
    mu_over = _word_measure(over)
    return mu_over, mu_a, mu_over / mu_a ** (1.0 + 1.0 / (1 + n))


def short_return_report(max_len: int, max_digit: int) -> ReturnBoundReport:
    """Exhaustive worst case of the short-return ratio.

    Enumerates every word with length n <= max_len and digits <= max_digit
    and every return lag k <= n, computing mu(a intersect T^{-k}a) exactly
    through the overlap word.  The worst ratio against mu(a)^(1+1/(1+n))
    is the empirical short-return constant; ties keep the first witness
    in (length, lexicographic word, k) order.
    """
    words = _check_caps(max_len, max_digit, min_len=2)
    best = -math.inf
    witness = None
    pairs = 0
    nonempty = 0
    for n in range(1, max_len + 1):
        expo = 1.0 + 1.0 / (1 + n)
        for word in product(range(1, max_digit + 1), repeat=n):
            bound = None
            lst = list(word)
            for k in range(1, n + 1):
                pairs += 1
                if lst[k:] != lst[: n - k]:
                    continue
                nonempty += 1
                if bound is None:
                    bound = _word_measure(lst) ** expo
                ratio = _word_measure(lst[:k] + lst) / bound
                if not math.isfinite(ratio):
                    raise CertificationError(
                        f"non-finite short-return ratio at {lst}, k={k}")
                if ratio > best:
                    best = ratio
                    witness = (lst, k)
    return ReturnBoundReport(
        "short-return", max_len, max_digit, best, witness, best, words,
        details={"pairs_checked": pairs, "nonempty_overlaps": nonempty})
