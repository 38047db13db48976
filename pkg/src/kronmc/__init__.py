"""Matrix completion with Kronecker product models.

The package selects a Kronecker configuration from a partially observed
matrix, completes it by alternating least squares on the rearranged matrix,
and aggregates completions over several configurations.
"""

__version__ = "0.1.0"

from .aggregation import (
    AggregateEstimate,
    FeasibilityMap,
    FoldPartition,
    aggregate_estimate,
    aggregate_path,
    benchmark_mean_fill,
    cv_mse,
    cv_mse_curve,
    cv_partition,
    feasibility_map,
    irrecoverable_entries,
    irrecoverable_indices,
    pad_dimensions,
    select_num_configurations,
)
from .als import CompletionInfo, ConvergencePolicy, KroneckerModel, complete, reconstruct
from .core import (
    Configuration,
    ConfigurationSet,
    ObservationMask,
    candidate_set,
    inverse_rearrange,
    kronecker_product,
    parse_candidates,
    parse_configuration,
    project,
    rearrange,
    rearrange_mask,
    unvec,
    vec,
)
from .estimator import AggregatedKroneckerCompletion, KroneckerCompletion
from .exceptions import KronMCError
from .selection import ConfigRanking, ConfigScore, criterion, rank_configurations, select_configuration
from .spectral import SvdTriple, spectral_norm, truncated_svd
