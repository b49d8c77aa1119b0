"""Optimization over the nonnegative orthogonal set.

Minimize a smooth objective over {X : X^T X = I, X >= 0} by driving smooth
penalties of the nonnegativity violation over the Stiefel manifold, with a
nonmonotone line-search proximal gradient inner solver, an augmented
Lagrangian baseline, benchmark problem families, and error-bound diagnostics.
"""

from .stiefel import (
    ORTH_TOL,
    RetractionError,
    StiefelPoint,
    TangentVector,
    dist_to_stiefel,
    proj_tangent,
    qr_orthonormalize,
    retract_polar,
    retract_qr,
    riemannian_gradient,
)
from .penalty import (
    Objective,
    PenaltyObjective,
    PenaltyParams,
    nonneg_violation,
    nonneg_violation_envelope,
    nonneg_violation_envelope_grad,
    penalty_value_and_grad,
    prox_nonneg_violation,
    quad_penalty,
    quad_penalty_grad,
)
from .pgm import LineSearchError, PgmConfig, PgmTrace, bb_stepsize, pgm_solve, pgm_step
from .driver import (
    AugLagObjective,
    OuterRecord,
    PenaltyConfig,
    RoundingError,
    SolveReport,
    alm_solve,
    penalty_solve,
    round_to_feasible,
    stationarity_residual,
)
from .problems import (
    AffinityInstance,
    GraphMatchingObjective,
    LinearObjective,
    OnmfFactorObjective,
    OnmfInstance,
    ProjectionObjective,
    QapInstance,
    QapLiftedObjective,
    brute_force_qap,
    cluster_labels,
    nonneg_start,
    onmf_alternate,
    onmf_y_update,
    permutation_matrix,
    planted_onmf_instance,
    qap_permutation_value,
    random_stiefel_start,
    svd_start,
)
from .diagnostics import (
    ErrorBoundSample,
    OracleSizeError,
    SoscReport,
    brute_force_dist_splus,
    default_base_point,
    error_bound_constant,
    error_bound_sweep,
    evaluate_error_bound,
    nonexactness_probe_objective,
    nonexactness_probe_point,
    sosc_probe,
    zero_row_family,
)
from .bench import (
    ExperimentSpec,
    MetricsRow,
    QaplibParseError,
    clustering_metrics,
    load_best_known,
    load_dense_matrix,
    parse_qaplib,
    relgap,
    run_experiment,
)

__version__ = "0.1.0"
