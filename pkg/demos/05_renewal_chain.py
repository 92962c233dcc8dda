"""The countable renewal chain: same Poisson limit, different system.

The chain moves down a spine of states 0, 1, 2, ... (down-steps are
deterministic, up-jumps from 0 follow summable weights).  Hits of the
tail {state >= K} over n steps converge to a Poisson law whose
intensity is n times the stationary tail mass.  Calibrating the jump
weight so that intensity is close to 1 mirrors the digit experiments.
"""

from cfpoisson import RenewalChain, poisson_pmf, run_trials, tv_distance
from cfpoisson.hitstats import STATIONARY
from cfpoisson.renewal import calibrate_poisson_tail


def main():
    k, n = 3, 1000
    c = calibrate_poisson_tail(k, n, target=1.0)
    chain = RenewalChain.poisson_weights(c)
    pi_tail = chain.stationary_tail(k)
    print(f"calibrated jump weight c = {c:.6f}")
    print(f"stationary tail pi(>= {k}) = {pi_tail:.6e}, "
          f"n * pi = {n * pi_tail:.4f}\n")

    hist = run_trials("renewal", None, n, trials=20_000, law=STATIONARY,
                      seed=5, chain=chain, k_threshold=k)
    report = tv_distance(hist, lambda j: poisson_pmf(hist.t_hat, j))
    print(f"TV distance to Poisson({hist.t_hat:.4f}) = {report.tv:.4f}")
    print("  k   empirical   poisson")
    for j, _count, emp, ref, _se in report.table[:6]:
        print(f"  {int(j)}   {emp:.5f}     {ref:.5f}")

    # the factorial chain is the same construction with 1/k! weights
    fact = RenewalChain.factorial()
    print(f"\nfactorial chain: pi(>= 3) = {fact.stationary_tail(3):.6e}")


if __name__ == "__main__":
    main()
