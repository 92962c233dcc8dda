"""A target family built to fail, and why it has to.

The Poisson limit needs short-range hit clustering to vanish: the mass
of A_n intersected with its own 1-step shift preimage must be o(mu(A_n)).
Tail sets satisfy this with room to spare.  The control family (union of
two interleaved cylinders that feed into each other under the shift)
keeps the clustering ratio pinned near 1/4 no matter how small the sets
get, so its hit counts can never be Poisson even though its mass decays
just as fast.
"""

from cfpoisson import NegControl, TailSet
from cfpoisson.targets import assumption_b_ratio, target_measure


def main():
    neg, tail = NegControl(), TailSet(theta=1.0)
    print("         n    mass(control)  ratio(control)  ratio(tail)")
    for n in (10, 30, 100, 300, 1000):
        print(f"  {n:8d}    {target_measure(neg, n):.4e}     "
              f"{assumption_b_ratio(neg, n):.5f}        "
              f"{assumption_b_ratio(tail, n):.6f}")
    print("\nthe control ratio stays bounded away from 0; the tail ratio")
    print("decays like the set mass itself")


if __name__ == "__main__":
    main()
