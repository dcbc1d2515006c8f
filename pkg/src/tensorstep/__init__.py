"""Inexact and stochastic higher-order (tensor) methods for convex optimization."""

from .errors import (
    CapacityError,
    ConfigError,
    DimensionMismatchError,
    EstimationError,
    InsufficientDataError,
    NonsmoothPointError,
    SingularPointError,
    SubsolverError,
    TensorStepError,
)
from .linalg import (
    DenseSymTensor3,
    RankOneSumTensor3,
    SymTensor3,
    dp_grad,
    dp_hess,
    dp_value,
    opnorm_mat,
    t3_apply,
    t3_apply2,
    t3_apply3,
    t3_norm_estimate,
    zero_tensor3,
)
from .models import (
    DerivativeBundle,
    InexactnessBudget,
    ModelConfig,
    SmoothModelP3,
    TaylorModel,
    hessian_sandwich_report,
    residual_bound_report,
    zeta_radial_coefficients,
)
from .problems import (
    LipschitzProfile,
    LogisticProblem,
    QuadraticProblem,
    StochasticDraw,
    make_logistic,
    make_online_logistic,
    make_quadratic,
    problem_from_dict,
    problem_from_json,
    problem_to_json,
)
from .sampling import (
    EXACT,
    BatchPlan,
    ConditionReport,
    batch_size_offline,
    batch_size_online,
    plan_batches,
    sample_bundle,
    verify_condition,
)
from .subsolvers import (
    RegularizedQuartic,
    SubsolverConfig,
    bregman_minimize_zeta,
    generic_model_minimize,
    relative_smoothness_constant,
    rho_hessian,
    solve_model_p2,
    solve_regularized_quartic,
)
from .methods import (
    IterationRecord,
    RunConfig,
    RunTrace,
    alpha_schedule,
    exact_bundle,
    itm_run,
    iteration_budget,
    kappa_defaults,
    monotonicity_guard,
    reference_solution,
    stm_run,
    theoretical_residual_bound,
)
from .bench import (
    ComplexitySummary,
    ExperimentConfig,
    RateFit,
    complexity_sweep,
    fit_rate,
    gd_baseline,
    load_trace_csv,
    run_experiment,
    write_trace_csv,
)

__version__ = "0.1.0"
