"""Dense Gaussian process regression solved by greedy block coordinate descent."""

__version__ = "0.1.0"

from .baselines import (  # noqa: E402
    BaselineConfig,
    bcdc_solve,
    bcdg_solve,
    cg_solve,
    direct_solve,
    smo_solve,
    solve,
)
from .datasets import (  # noqa: E402
    Dataset,
    StandardizationParams,
    add_target_noise,
    apply_standardization,
    fit_standardization,
    friedman1_generate,
    load_table,
    split,
)
from .errors import (  # noqa: E402
    ContractViolation,
    NonConvergence,
    NumericalBreakdown,
    NumericalFailure,
    RefusalError,
)
from .gbcd import SolveConfig, gbcd_solve  # noqa: E402
from .kernels import KernelOperator, KernelSpec, kernel_eval  # noqa: E402
from .predict import (  # noqa: E402
    GPModel,
    fit,
    normalized_rmse,
    predict,
    predict_mean,
    predict_variance,
    relative_variance_rmse,
)
from .problem import Problem, SolveReport, objective_value  # noqa: E402
