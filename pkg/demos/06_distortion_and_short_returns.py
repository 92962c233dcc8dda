"""Exact diagnostics: branch distortion and short-return bounds.

Two finite certificates behind the Poisson limit.  The distortion scan
bounds how far inverse-branch derivatives wander from the cylinder mass
(the bounded-distortion constant).  The short-return scan verifies that
a cylinder meeting its own k-step preimage has overlap mass bounded by
a power of its own mass, word by word, in exact arithmetic.
"""

from fractions import Fraction

from cfpoisson import branch_derivative, renyi_report, short_return_report
from cfpoisson.diagnostics import short_return_ratio


def main():
    word = [2, 1, 3]
    x = Fraction(1, 2)
    d = branch_derivative(word, x)
    print(f"|v'_{word}({x})| = {d} = {float(d):.8e} (exact rational)\n")

    rep = renyi_report(max_len=3, max_digit=12, samples_per_cylinder=5)
    print(f"distortion constant over {rep.words} cylinders: "
          f"M = {rep.constant:.6f}")
    word, where = rep.worst_witness
    print(f"  binding cylinder {list(word)} at x = {where}\n")

    rep = short_return_report(max_len=3, max_digit=12)
    print(f"short returns over {rep.words} words "
          f"({rep.details['nonempty_overlaps']} nonempty overlaps):")
    print(f"  worst mu(A cap T^-k A) / mu(A)^(1 + 1/(1+n)) "
          f"= {rep.worst_ratio:.6f}")
    word, k = rep.worst_witness
    print(f"  at word {list(word)}, shift k = {k}")

    # the extreme is always the all-ones word: golden-mean points return
    # as fast as the system allows
    over, mass, ratio = short_return_ratio([1, 1, 1], 1)
    print(f"\n[1,1,1] at k = 1: overlap = {over:.6e}, "
          f"mass = {mass:.6e}, ratio = {ratio:.6f}")


if __name__ == "__main__":
    main()
