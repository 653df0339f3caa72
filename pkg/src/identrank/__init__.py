"""identrank: numerical parameter identifiability and redundancy diagnostics.

Decides which parameters of an exponential-family model are identifiable or
redundant by computing and rank-testing the mean Jacobian, the observed
Hessian of the log-likelihood, and the Fisher information matrix.
"""

from .errors import (
    DomainError,
    FullRankModelError,
    IdentRankError,
    InputError,
    InternalConsistencyError,
    SingularityError,
)
from .expfam import ExpFamily, FamilyKind, binomial, log_likelihood, normal, poisson
from .modelzoo import (
    AuxData,
    CustomLikelihoodModel,
    Dataset,
    Factorization,
    MeanModel,
    ParamRange,
    armitage_doll,
    build_model,
    cond_demo,
    linear_gaussian,
    poisson_glm,
    quartic_counterexample,
    two_mutation,
    two_mutation_hazard,
    two_mutation_hazard_ode,
)
from .ranklab import (
    RankDecision,
    left_null_space,
    max_rank_subset,
    numerical_rank,
    principal_submatrix_rank,
    right_null_space,
    svd,
)
from .identcore import (
    BoundReport,
    Classification,
    IdentReport,
    Sampler,
    analyze,
    bound_report,
    classify,
    factorization_bound_check,
    fisher_information,
    fisher_rank,
    hazard_hessian_rank,
    irls_step,
    mean_jacobian,
    newton_step,
    observed_hessian,
    redundancy_directions,
    redundancy_test,
    ridge_trace,
    score,
    subset_identifiability,
    total_log_likelihood,
)

__version__ = "0.1.0"
