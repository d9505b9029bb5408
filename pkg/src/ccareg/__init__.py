"""Canonical correlation analysis with structured L2 penalties.

Four penalty families share one solver: ridge (all coefficients), partial
(a subset), group (within- and between-group variation), and a general
PSD penalty matrix. Wide problems (p >> n) are reduced to n-dimensional
ones by kernel-trick factorizations, with coefficients mapped back to the
original feature space. Hyperparameters are picked by (nested) k-fold
cross-validation on the plain correlation of the first canonical pair.
"""

from .data import (
    CovarianceBlock,
    DataMatrix,
    center_columns,
    cohens_d,
    load_csv,
    regress_out,
    sample_covariance,
)
from .errors import (
    CapacityError,
    CCARegError,
    DegenerateDirection,
    DegenerateVariate,
    DomainError,
    EmptyInput,
    IdentifiabilityError,
    InvalidCovariance,
    NoFeasiblePoint,
    NumericalConsistencyError,
    ParseError,
    ShapeError,
    SingularCovariance,
    SingularDesign,
    StateError,
    UnsupportedPenalty,
)
from .penalties import (
    GroupStructure,
    PenaltyFactorization,
    PenaltySpec,
    build_penalty_matrix,
    extend_features,
    factor_group_penalty,
    factor_penalty,
    helmert_complement,
    load_group_map,
)
from .reduction import (
    CoefficientPath,
    MethodSpec,
    ReductionPlan,
    coefficient_path,
    fit_direct,
    fit_partial,
    general_fit,
    general_reduce,
    grcca_fit,
    prcca_kernel_fit,
    rcca_kernel_fit,
)
from .selection import (
    CVResult,
    Grid,
    HyperPoint,
    NCVResult,
    cross_validate,
    kfold_split,
    nested_cross_validate,
)
from .simulate import (
    ExperimentResult,
    SimulationConfig,
    default_lambda_grid,
    default_mu_grid,
    generate,
    run_experiment,
)
from .solver import (
    FittedCCA,
    modified_correlation,
    plain_correlation,
    solve_direct,
)

__version__ = "0.1.0"

__all__ = [
    "CCARegError", "CapacityError", "CoefficientPath", "CovarianceBlock",
    "CVResult", "DataMatrix", "DegenerateDirection", "DegenerateVariate",
    "DomainError", "EmptyInput", "ExperimentResult", "FittedCCA",
    "Grid", "GroupStructure", "HyperPoint", "IdentifiabilityError",
    "InvalidCovariance", "MethodSpec", "NCVResult", "NoFeasiblePoint",
    "NumericalConsistencyError", "ParseError", "PenaltyFactorization",
    "PenaltySpec", "ReductionPlan", "ShapeError", "SimulationConfig",
    "SingularCovariance", "SingularDesign", "StateError",
    "UnsupportedPenalty", "build_penalty_matrix", "center_columns",
    "coefficient_path", "cohens_d", "cross_validate",
    "default_lambda_grid", "default_mu_grid", "extend_features",
    "factor_group_penalty", "factor_penalty", "fit_direct", "fit_partial",
    "general_fit", "general_reduce", "generate", "grcca_fit",
    "helmert_complement", "kfold_split", "load_csv", "load_group_map",
    "modified_correlation", "nested_cross_validate", "plain_correlation",
    "prcca_kernel_fit", "rcca_kernel_fit", "regress_out", "run_experiment",
    "sample_covariance", "solve_direct",
]
