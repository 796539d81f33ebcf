"""Testing membership in the class of Poisson Binomial distributions.

A Poisson Binomial distribution (PBD) is the law of a sum of independent,
not necessarily identical, Bernoulli variables.  This package implements a
sample-efficient tester deciding, from samples alone, whether an unknown
distribution on {0, ..., n} is a PBD or far from every PBD in total
variation, together with the exact distribution machinery, seeded
sampling, an adversarial indistinguishable family, and brute-force
oracles that validate all of it.
"""

from .distributions import (
    BoundReport,
    ExplicitDistribution,
    Pbd,
    TranslatedPoissonParams,
    binomial_pmf,
    effective_support_interval,
    ell1_distance,
    ell2_sq_distance,
    ell_inf_distance,
    indicator_chernoff_bound,
    pbd_moments,
    pbd_pmf,
    poisson_tail_bound,
    tp_approx_bounds,
    tp_pair_tv_bound,
    translated_poisson_pmf,
    truncated_log,
    tv_distance,
)
from .learner import (
    BinomialHypothesis,
    LearnedPbd,
    MomentEstimates,
    SparseHypothesis,
    estimate_mean_var,
    learn_pbd,
)
from .lowerbound import (
    PerturbedBinomial,
    chi2_indistinguishability_bound,
    construct_perturbed_binomial,
    detection_experiment,
    unimodal_distance_lb,
)
from .sampling import SampleHistogram, SampleStream, StreamExhausted, empirical_distribution
from .tester import (
    Branch,
    Closeness,
    TestConfig,
    TestVerdict,
    Verdict,
    coarsen_to_interval,
    heavy_case_test,
    l2_statistic,
    numeric_tv_tp_vs_hypothesis,
    simple_tolerant_identity_test,
    test_pbd,
)

__version__ = "0.1.0"
