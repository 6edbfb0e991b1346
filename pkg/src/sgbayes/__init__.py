"""Adaptive hierarchical sparse-grid surrogates for Bayesian calibration.

Workflow: build a sparse-grid surrogate of an expensive forward model with
surplus-guided local refinement, swap it into the likelihood, and sample the
resulting posterior with a delayed-rejection adaptive-Metropolis chain.
"""

from .errors import (
    CacheError,
    ConfigurationError,
    DirectRunRefusedError,
    DomainError,
    IncompleteDataError,
    InitializationError,
    ModelExecutionError,
    PersistenceError,
    SgbayesError,
)
from .grid import Box, MultiIndex, Node1D, basis_eval, nodes_of_level, point_coordinates
from .interpolant import (
    SparseGrid,
    SurrogateModel,
    compute_surpluses,
    isotropic_grid,
    refine,
)
from .bayes import (
    LikelihoodSpec,
    PosteriorSpec,
    PriorSpec,
    exp_likelihood,
    log_likelihood_exp,
    log_likelihood_mvn,
    make_reference_data,
    mvn_likelihood,
)
from .mcmc import Chain, DramConfig, diagnostics, marginal_histogram, sample
from .models import (
    CALIBRATION_DOMAIN,
    ExternalModel,
    ExternalProtocol,
    ForwardModel,
    ModelSpec,
    SyntheticLESConfig,
    SyntheticLESModel,
    TRUE_THETA,
    analytic_model,
    multilinear_model,
    synthetic_les_model,
    van_driest,
)
from .persistence import EvalCache, load_surrogate, store_surrogate
from .pipeline import (
    BuildPlan,
    RunReport,
    build_surrogate,
    run_calibration,
    run_direct_mcmc,
)

__version__ = "0.1.0"

__all__ = [
    "Box",
    "BuildPlan",
    "CALIBRATION_DOMAIN",
    "CacheError",
    "Chain",
    "ConfigurationError",
    "DirectRunRefusedError",
    "DomainError",
    "DramConfig",
    "EvalCache",
    "ExternalModel",
    "ExternalProtocol",
    "ForwardModel",
    "IncompleteDataError",
    "InitializationError",
    "LikelihoodSpec",
    "ModelExecutionError",
    "ModelSpec",
    "MultiIndex",
    "Node1D",
    "PersistenceError",
    "PosteriorSpec",
    "PriorSpec",
    "RunReport",
    "SgbayesError",
    "SparseGrid",
    "SurrogateModel",
    "SyntheticLESConfig",
    "SyntheticLESModel",
    "TRUE_THETA",
    "analytic_model",
    "basis_eval",
    "build_surrogate",
    "compute_surpluses",
    "diagnostics",
    "exp_likelihood",
    "isotropic_grid",
    "load_surrogate",
    "log_likelihood_exp",
    "log_likelihood_mvn",
    "make_reference_data",
    "marginal_histogram",
    "multilinear_model",
    "mvn_likelihood",
    "nodes_of_level",
    "point_coordinates",
    "refine",
    "run_calibration",
    "run_direct_mcmc",
    "sample",
    "store_surrogate",
    "synthetic_les_model",
    "van_driest",
    "__version__",
]
