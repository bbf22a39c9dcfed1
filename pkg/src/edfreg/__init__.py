"""Regularize an i.i.d. sample by moving a few points.

Given n observations from a known distribution and a budget m, the
regularizer relocates O(m) observations on average so that the Kolmogorov
distance between the sample and the population is at most 2/m.
"""

from .discrepancy import (
    DenseIntervalReport,
    DiscrepancyResult,
    DyadicInterval,
    GridSpec,
    dense_interval_stats,
    is_acceptable,
    is_equalized,
    kolmogorov_distance,
    local_discrepancy_dY,
)
from .distributions import (
    DistributionModel,
    DomainError,
    Sample,
    UniformizedSample,
    bernoulli,
    cdf,
    deuniformize,
    discrete,
    exponential,
    gaussian,
    parse_distribution,
    piecewise_linear,
    quantile,
    sample_iid,
    uniform01,
    uniformize,
)
from .regularizer import (
    MoveRecord,
    NodeSnapshot,
    RecursionTree,
    RegularizerConfig,
    RunReport,
    equalize_halves,
    regularize_general,
    regularize_uniform,
    run_algorithm2,
    run_coupled,
    verify_final_partition,
)

__version__ = "0.1.0"
