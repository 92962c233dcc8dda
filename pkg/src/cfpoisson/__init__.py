"""Continued-fraction Poisson statistics toolkit.

Exact cylinder arithmetic for the Gauss map, certified digit extraction from
dyadic samples, Ulam discretizations of the transfer operator with exact
target-set alignment, renewal Markov chains, and the Monte Carlo / spectral
experiments tying hit-count statistics to their Poisson and exponential
limits.
"""

from cfpoisson.cf import (
    GAUSS,
    LEBESGUE,
    RationalInterval,
    certified_digits,
    convergents,
    cylinder_interval,
    cylinder_measure,
    interval_measure,
    rational_cf,
)
from cfpoisson.diagnostics import (
    ReturnBoundReport,
    branch_derivative,
    cylinder_self_overlap,
    renyi_report,
    short_return_report,
)
from cfpoisson.errors import (
    CertificationError,
    ConfigError,
    PowerIterationError,
    PrecisionError,
)
from cfpoisson.hitstats import (
    STATIONARY,
    HitHistogram,
    HitTimeSample,
    empirical_laplace,
    first_hit_times,
    ks_statistic_exp1,
    poisson_pmf,
    run_trials,
    tv_distance,
)
from cfpoisson.renewal import RenewalChain
from cfpoisson.sampling import BitSource, DigitStream, trial_bit_budget
from cfpoisson.targets import NegControl, PatternSet, TailSet, TupleSet
from cfpoisson.ulam import (
    UlamGrid,
    UlamWeights,
    build_ulam,
    leading_eigen,
    perturb,
)

__version__ = "0.1.0"

__all__ = [
    "GAUSS",
    "LEBESGUE",
    "STATIONARY",
    "RationalInterval",
    "CertificationError",
    "ConfigError",
    "PowerIterationError",
    "PrecisionError",
    "BitSource",
    "DigitStream",
    "HitHistogram",
    "HitTimeSample",
    "NegControl",
    "PatternSet",
    "RenewalChain",
    "ReturnBoundReport",
    "TailSet",
    "TupleSet",
    "UlamGrid",
    "UlamWeights",
    "branch_derivative",
    "build_ulam",
    "certified_digits",
    "convergents",
    "cylinder_interval",
    "cylinder_measure",
    "cylinder_self_overlap",
    "empirical_laplace",
    "first_hit_times",
    "interval_measure",
    "ks_statistic_exp1",
    "leading_eigen",
    "perturb",
    "poisson_pmf",
    "rational_cf",
    "renyi_report",
    "run_trials",
    "short_return_report",
    "trial_bit_budget",
    "tv_distance",
    "__version__",
]
