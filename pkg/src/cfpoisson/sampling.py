r"""Dyadic sampling and certified digit extraction.

A Monte Carlo trial never touches floating point: the sampled point is the
real number pinned down by an ever-extendable string of random bits, held as
the open dyadic interval (c/2^b, (c+1)/2^b). Digits (partial quotients) are
extracted from that interval and each one is *certified*: it is the digit of
every point of the interval, so the trial's hit counts are exact for the
sampled point no matter how the interval is later refined.

Randomness is counter-based: each trial owns a Philox stream keyed by
(seed, trial_index), so results are independent of worker count, chunking,
and evaluation order.

The extraction engine is Lehmer-style: the exact big-integer interval is
projected to a 62-bit fixed-point enclosure with one ulp of outward slack,
a small-integer interval-Euclid loop certifies a batch of digits (typically
15-17), and the batch's composite Moebius matrix is applied to the big state
once. The certification rule matches :func:`cfpoisson.cf.certified_digits`
digit for digit, which the tests exploit.
"""

from __future__ import annotations

from fractions import Fraction

import gmpy2
import numpy as np

from cfpoisson.cf import GAUSS, LEBESGUE, RationalInterval
from cfpoisson.errors import PrecisionError

_MASK64 = (1 << 64) - 1

# floor(2^96 / ln 2); tests verify the bracket against mpmath
_INV_LN2_LO = 114302077158074026402637675936
_INV_LN2_HI = _INV_LN2_LO + 1
_INV_LN2_BITS = 96

_SCALE = 62


class BitSource:
    """Deterministic bit supplier for one trial.

    Bits come from a Philox counter-based generator keyed by
    ``(seed << 64) | stream``, so every (seed, stream) pair is an
    independent, reproducible stream regardless of how many bits any other
    trial consumed.
    """

    def __init__(self, seed: int, stream: int):
        key = ((seed & _MASK64) << 64) | (stream & _MASK64)
        self._gen = np.random.Generator(np.random.Philox(key=key))
        self._buf = 0
        self._nbuf = 0

    def take(self, nbits: int) -> int:
        """Next ``nbits`` bits as a nonnegative int."""
        if nbits < 0:
            raise ValueError("nbits must be >= 0")
        while self._nbuf < nbits:
            nwords = max((nbits - self._nbuf + 63) // 64, 8)
            words = self._gen.integers(0, 1 << 64, size=nwords, dtype=np.uint64)
            self._buf |= int.from_bytes(words.tobytes(), "little") << self._nbuf
            self._nbuf += 64 * nwords
        out = self._buf & ((1 << nbits) - 1)
        self._buf >>= nbits
        self._nbuf -= nbits
        return out


class _DyadicPoint:
    """A sampled point known to lie in (c/2^b, (c+1)/2^b), extendable."""

    __slots__ = ("c", "b", "source")

    def __init__(self, source: BitSource, bits: int):
        self.source = source
        self.c = source.take(bits)
        self.b = bits

    def extend(self, extra: int) -> None:
        self.c = (self.c << extra) | self.source.take(extra)
        self.b += extra

    def interval(self) -> RationalInterval:
        den = 1 << self.b
        return RationalInterval(Fraction(self.c, den), Fraction(self.c + 1, den))


def _sample_point(source: BitSource, bits: int, law: str) -> _DyadicPoint:
    """Draw a dyadic point from the uniform or the Gauss law.

    The Gauss draw is von Neumann rejection against the density
    h(x) = 1/((1+x) ln 2) under the dyadic majorant 3/2 >= sup h. The
    accept/reject comparison is done with integer bounds on 1/ln 2, and when
    the proposal interval straddles the decision boundary both the point and
    the height are refined by 64 bits and retested, so the draw is bias-free
    at every precision.
    """
    if law == LEBESGUE:
        return _DyadicPoint(source, bits)
    if law != GAUSS:
        raise ValueError(f"unknown law {law!r}")
    while True:
        x = _DyadicPoint(source, bits)
        w, wb = source.take(64), 64
        while True:
            # v = 3w/2^(wb+1) is uniform on [0, 3/2); accept iff
            # v*(1+x) < 1/ln2 for every x in the interval, reject iff
            # v*(1+x) > 1/ln2 for every x; undecided -> refine both
            den = 1 << x.b
            shift = wb + 1 + x.b
            if 3 * w * (den + x.c + 1) << _INV_LN2_BITS < _INV_LN2_LO << shift:
                return x
            if 3 * w * (den + x.c) << _INV_LN2_BITS > _INV_LN2_HI << shift:
                break  # certain reject, draw a fresh proposal
            x.extend(64)
            w = (w << 64) | source.take(64)
            wb += 64


class DigitStream:
    """Certified partial quotients of a sampled or given interval.

    Parameters
    ----------
    point : _DyadicPoint or None
        Refinable sampled point; None for a fixed rational interval.
    interval : RationalInterval, optional
        Starting interval when no point is given.
    max_refinements : int
        How many times the dyadic expansion may be doubled before
        :class:`~cfpoisson.errors.PrecisionError` is raised.
    """

    def __init__(self, point=None, interval=None, max_refinements=8):
        if (point is None) == (interval is None):
            raise ValueError("give exactly one of point, interval")
        self._point = point
        self.max_refinements = max_refinements
        self.refinements = 0
        self.digits: list[int] = []
        if point is not None:
            self._load(point.c, 1 << point.b, point.c + 1, 1 << point.b)
        else:
            lo, hi = Fraction(interval[0]), Fraction(interval[1])
            if not (0 <= lo < hi <= 1):
                raise ValueError(f"bad interval ({lo}, {hi})")
            com = lo.denominator * hi.denominator
            self._load(lo.numerator * hi.denominator, com,
                       hi.numerator * lo.denominator, com)

    @classmethod
    def for_trial(cls, seed: int, trial: int, bits: int, law: str = GAUSS,
                  max_refinements: int = 8) -> "DigitStream":
        """Stream for one keyed Monte Carlo trial."""
        source = BitSource(seed, trial)
        return cls(point=_sample_point(source, bits, law),
                   max_refinements=max_refinements)

    @classmethod
    def from_interval(cls, interval: RationalInterval) -> "DigitStream":
        """Non-refinable stream over a fixed rational interval."""
        return cls(interval=interval, max_refinements=0)

    def _load(self, na, da, nb, db) -> None:
        self._na = gmpy2.mpz(na)
        self._da = gmpy2.mpz(da)
        self._nb = gmpy2.mpz(nb)
        self._db = gmpy2.mpz(db)

    def take(self, count: int) -> list[int]:
        """First ``count`` certified digits of the sampled point."""
        while len(self.digits) < count:
            if not self._advance():
                self._refine()
        return self.digits[:count]

    # -- engine ------------------------------------------------------------

    def _advance(self) -> bool:
        """Extract one batch of certified digits; False if none possible."""
        na, da, nb, db = self._na, self._da, self._nb, self._db
        if na <= 0:
            return False  # left end at 0: the next digit is unbounded
        # closed fixed-point enclosure with 1 ulp outward slack, scaled to
        # the interval's magnitude so points near 0 (huge digits ahead)
        # still get ~62 significant bits
        s = _SCALE + max(0, da.bit_length() - na.bit_length())
        one = 1 << s
        u_lo = int((na << s) // da) - 1
        u_hi = int(-((-nb << s) // db)) + 1
        if u_lo <= 0:
            return False
        if u_hi > one:
            u_hi = one
        v_lo = v_hi = one
        m00, m01, m10, m11 = 1, 0, 0, 1
        batch = []
        while True:
            if u_lo <= 0:
                break
            k = v_hi // u_hi
            if k < 1:
                break
            q, r = divmod(v_lo, u_lo)
            if k != (q - 1 if r == 0 else q):
                break
            batch.append(k)
            m00, m01, m10, m11 = -k * m00 + m10, -k * m01 + m11, m00, m01
            u_lo, v_lo, u_hi, v_hi = v_hi - k * u_hi, u_hi, v_lo - k * u_lo, u_lo
        if not batch:
            # the next digit outruns the enclosure's resolution (huge digit
            # or boundary-grazing endpoint): take one exact step instead
            return self._exact_step()
        # apply the composite x -> (m00 x_num + m01 x_den, m10 x_num + m11 x_den)
        na, da = m00 * na + m01 * da, m10 * na + m11 * da
        nb, db = m00 * nb + m01 * db, m10 * nb + m11 * db
        if da < 0:
            na, da = -na, -da
        if db < 0:
            nb, db = -nb, -db
        if len(batch) % 2:  # odd number of decreasing steps flips orientation
            na, da, nb, db = nb, db, na, da
        self._na, self._da, self._nb, self._db = na, da, nb, db
        self.digits.extend(batch)
        return True

    def _exact_step(self) -> bool:
        """Certify a single digit straight from the big-integer state.

        Same one-sided endpoint rule as :func:`cfpoisson.cf.certified_digits`
        (floor division is insensitive to the fractions not being reduced),
        so the engine's output always equals the exact reference's. Costs a
        couple of full-size divisions, but only runs when a batch stalls.
        """
        na, da, nb, db = self._na, self._da, self._nb, self._db
        if na <= 0:
            return False
        k = db // nb
        q, r = divmod(da, na)
        if k != (q - 1 if r == 0 else q) or k < 1:
            return False
        self._na, self._da = db - k * nb, nb
        self._nb, self._db = da - k * na, na
        self.digits.append(int(k))
        return True

    def _refine(self) -> None:
        if self._point is None:
            raise PrecisionError(
                f"interval certifies only {len(self.digits)} digits")
        if self.refinements >= self.max_refinements:
            raise PrecisionError(
                f"still short of certified digits after "
                f"{self.refinements} refinements ({self._point.b} bits)")
        self.refinements += 1
        self._point.extend(self._point.b)
        prev = self.digits
        self.digits = []
        self._load(self._point.c, 1 << self._point.b,
                   self._point.c + 1, 1 << self._point.b)
        # nested interval: replay is guaranteed to re-certify the old prefix
        while len(self.digits) < len(prev):
            if not self._advance():
                self._refine()
                return
        if self.digits[: len(prev)] != prev:
            raise AssertionError("refinement changed certified digits")


def sample_dyadic(source: BitSource, bits: int, law: str = GAUSS) -> RationalInterval:
    """Sample a dyadic interval of width 2^-bits from the given law."""
    if bits < 1:
        raise ValueError("bits must be >= 1")
    return _sample_point(source, bits, law).interval()


def trial_bit_budget(n_digits: int) -> int:
    """Initial dyadic bits that certify ``n_digits`` digits in one pass
    with overwhelming probability (the a.s. rate is ~3.42 bits per digit;
    the slack absorbs both CLT fluctuations and isolated huge digits)."""
    return 4 * n_digits + 64
