"""Exact continued-fraction arithmetic: convergents, cylinders, measures.

Everything here is integer or Fraction arithmetic until the final
logarithm, so the printed masses are correct to the last floating-point
digit even for cylinders of width 1e-30.
"""

from fractions import Fraction

from cfpoisson import (
    GAUSS,
    LEBESGUE,
    convergents,
    cylinder_interval,
    cylinder_measure,
    rational_cf,
)
from cfpoisson.sampling import DigitStream, trial_bit_budget


def main():
    word = [3, 7, 15, 1]
    print(f"digit word {word}")
    for k, (p, q) in enumerate(convergents(word), start=1):
        print(f"  convergent {k}: {p}/{q} = {p / q:.12f}")

    iv = cylinder_interval(word)
    print(f"cylinder: ({iv.lo} , {iv.hi})")
    print(f"  width        = {float(iv.hi - iv.lo):.3e}")
    print(f"  gauss mass   = {cylinder_measure(word, GAUSS):.6e}")
    print(f"  lebesgue mass= {cylinder_measure(word, LEBESGUE):.6e}")

    # pi is approximately 3 + [0; 7, 15, 1, ...], so 355/113 shares the
    # first digits of pi - 3 once inverted
    print(f"\ndigits of 113/355: {rational_cf(113, 355)}")

    # a sampled point carries only finitely many certified digits; the
    # stream refuses to print a digit its interval cannot certify
    stream = DigitStream.for_trial(seed=1, trial=0,
                                   bits=trial_bit_budget(25), law=GAUSS)
    print(f"25 certified digits of a Gauss-law sample: {stream.take(25)}")

    # deep cylinders stay exact: mass of the depth-40 golden-mean word
    ones = [1] * 40
    print(f"\nmu(all-ones, depth 40) = {cylinder_measure(ones, GAUSS):.6e}")
    lo, hi = cylinder_interval(ones)
    print(f"  interval width       = {float(Fraction(hi) - Fraction(lo)):.6e}")


if __name__ == "__main__":
    main()
