"""Reparameterizable subset sampling.

Exact samplers and probabilities for weighted sampling without
replacement, a successive-softmax relaxation of top-k selection fed with
Gumbel-perturbed log-weights, its reverse-mode Jacobian, and statistical
checks against exhaustive enumeration.
"""

__version__ = "0.1.0"

from .distributions import (
    SubsetDistribution,
    Weights,
    enumerate_subset_distribution,
    sequence_probability,
    subset_probability,
)
from .errors import (
    DivergenceError,
    EnumerationLimitError,
    SaturationWarning,
    SubsetRelaxError,
    WeightsError,
)
from .gradients import (
    FDReport,
    JacobianRecord,
    finite_difference_check,
    grad_wrt_log_weights,
    relaxed_topk_jacobian,
    relaxed_topk_vjp,
)
from .relaxation import (
    RelaxedKHot,
    relax_subset_sample,
    relax_subset_sample_batch,
    relaxed_topk,
    relaxed_topk_batch,
    relaxed_topk_hard,
)
from .samplers import (
    GumbelKeys,
    ReservoirKeys,
    UniformStream,
    gumbel_keys,
    hard_topk,
    key_equivalence_check,
    reservoir_keys,
    wrs_sample,
)
from .stats import (
    EmpiricalDistribution,
    binomial_ci,
    chi_square_gof,
    total_variation,
)
