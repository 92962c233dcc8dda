"""Monte Carlo hit counts against the Poisson limit.

Counts visits of the digit orbit to the shrinking tail set
{a_i >= theta n} over the first n digits.  As n grows the count
converges to Poisson(theta^{-1}/log 2); here a modest trial budget
already puts the total-variation distance well under 0.05.
"""

from cfpoisson import GAUSS, TailSet, poisson_pmf, run_trials, tv_distance


def main():
    fam = TailSet(theta=1.0)
    t_limit = fam.limit_t()
    print(f"target: {fam.describe(400)}")
    print(f"limit intensity 1/log2 = {t_limit:.6f}\n")

    for n in (100, 400, 1600):
        hist = run_trials("gauss", fam, n, trials=20_000, law=GAUSS, seed=11)
        report = tv_distance(hist, lambda k: poisson_pmf(t_limit, k))
        print(f"n = {n:5d}: n*mu = {hist.t_hat:.4f}  "
              f"mean hits = {hist.mean():.4f}  TV = {report.tv:.4f}")

    hist = run_trials("gauss", fam, 1600, trials=20_000, law=GAUSS, seed=11)
    report = tv_distance(hist, lambda k: poisson_pmf(t_limit, k))
    print("\nhistogram at n = 1600:")
    print("  k   empirical   poisson")
    for k, _count, emp, ref, _se in report.table:
        print(f"  {int(k)}   {emp:.5f}     {ref:.5f}")


if __name__ == "__main__":
    main()
