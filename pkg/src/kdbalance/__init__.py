"""Kernel-distance balancing weights for treatment-effect estimation.

The package fits nonnegative weights that make the treated and control
covariate distributions close in a Gaussian-kernel discrepancy, optionally
with exact first-moment constraints, and compares them against propensity
and unadjusted baselines through simulation designs, balance diagnostics,
and a bootstrap. A dense active-set quadratic-programming solver with a
certified KKT residual does the optimization.
"""

from .balancing import (
    BalanceScheme,
    MomentConstraints,
    Target,
    att_kdb,
    build_ate_problem,
    build_att_problem,
    estimate_ate,
    estimate_att,
    kdbc,
    kdm1,
    solve_weights,
    solve_weights_detailed,
)
from .baselines import (
    PropensityModel,
    fit_propensity_logistic,
    ipw_ate_weights,
    ipw_att_weights,
    oracle_ate,
    oracle_att,
    unadjusted_weights,
)
from .cli import cli_dispatch, main
from .dataio import (
    CsvSchema,
    covariate_names,
    fmt5,
    nsw_schema,
    read_csv,
    read_weights,
    write_table,
    write_weights,
)
from .diagnostics import (
    ECDF,
    WeightedSample,
    asmd_ate,
    asmd_att,
    balance_report,
    estimator_metrics,
    mean_ks,
    mean_t,
    silverman_bandwidth,
    weighted_density_series,
    weighted_ecdf,
)
from .errors import (
    AllPointsIdentical,
    DataError,
    DegenerateAssignment,
    DegenerateWitness,
    DimensionMismatch,
    EmptyGroup,
    EmptySample,
    InconsistentOutcomes,
    InfeasibleBalance,
    KDBalanceError,
    MissingPotentialOutcomes,
    NonBinaryTreatment,
    NonFiniteValue,
    NumericalBreakdown,
    ParseError,
    RankDeficient,
    SchemeMismatch,
    SingularQ,
    SolverError,
    TooFewEstimates,
    UsageError,
    ZeroVariance,
)
from .kernel import (
    Bandwidth,
    InformationMatrix,
    gaussian_gram,
    gaussian_kernel,
    information_matrix,
    kernel_distance,
    median_bandwidth,
    rw_stat,
    squared_distances,
    witness_eval,
)
from .model import (
    ATE_SCHEMES,
    ATT_SCHEMES,
    BalanceReport,
    BalanceWeights,
    Dataset,
    EstimateReport,
    WeightScheme,
    validate_dataset,
)
from .qp import (
    KKTResiduals,
    QPSolution,
    QPStatus,
    QuadraticProgram,
    dual_objective,
    kkt_residuals,
    solve_qp,
    trace_text,
)
from .simlab import (
    DISPLAY_NAMES,
    METHODS,
    BalanceAverages,
    BootstrapMethod,
    BootstrapSummary,
    KangSchaferConfig,
    MethodSummary,
    MonteCarloSummary,
    Sim2Config,
    SimulatedData,
    bias_decomposition,
    bootstrap,
    child_seed,
    generate,
    kang_schafer_generate,
    monte_carlo,
    sim2_generate,
    summary_rows,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
