"""Empirical Wasserstein distances on finite metric spaces and their limit laws.

Transport distances are solved exactly as min-cost flows, optionally
under a thresholded metric.  Their Gaussian-driven limit laws are sampled
directly or bounded through tree metrics, and feed one- and two-sample
tests.
"""

__version__ = "0.1.0"

from .limits import (
    LimitSample,
    TruncationPlan,
    p_value,
    quantile,
    restrict,
    simulate_alt_limit,
    simulate_null_limit,
    tail_bound,
    truncate,
)
from .measures import (
    GaussianDraw,
    Measure,
    covariance_matrix,
    empirical_measure,
    gaussian_draws,
    jordan_decompose,
    sample_gaussian,
)
from .solver import (
    DualPair,
    FlowProblem,
    InfeasibleFlowError,
    TransportPlan,
    TransportResult,
    dual_face_max,
    dual_is_unique,
    limit_flow,
    thresholded_wasserstein,
    wasserstein,
)
from .space import GridSpace, MetricSpace, ThresholdedMetric, bin_cdf, build_space, summability_partial_sums, threshold_metric
from .testing import TestReport, one_sample_test, threshold_sweep, two_sample_test
from .tree import DyadicTree, WeightedTree, grid_bound_statistic, spanning_tree, subtree_sums, tree_dual_witness, z_statistic
