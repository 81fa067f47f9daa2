"""Semi-parametric degradation modeling for accelerated destructive
degradation tests: monotone B-spline baselines under Arrhenius time-scale
acceleration, with AIC knot selection, nonparametric bootstrap inference,
MTTF prediction, and Monte Carlo study harnesses."""

__version__ = "0.1.0"

from .bootstrap import (
    BootstrapResult,
    ResidualDecomposition,
    bias_corrected_ci,
    decompose_residuals,
    quantile_ci,
    resample_and_refit,
)
from .bspline import (
    FixedKnots,
    QuantileKnots,
    SplineSpec,
    basis_eval,
    basis_matrix,
    default_interior_knots,
    design_matrix,
    eta,
    path_derivative,
    path_is_monotone,
    path_value,
)
from .covariance import (
    ErrorStructure,
    block_inverse_apply,
    block_logdet,
    whiten,
)
from .dataset import (
    DEFAULT_KELVIN_OFFSET,
    AddtDataset,
    StressSet,
    arrhenius_x,
    dump_addt_csv,
    load_addt_csv,
    stress_set,
)
from .errors import (
    AddtError,
    CsvParseError,
    ExtrapolationError,
    InfeasibleBetaError,
    NumericalError,
    RankDeficiencyError,
    ValidationError,
)
from .fit import (
    BetaFitResult,
    FitControls,
    ModelFit,
    fit_given_beta,
    monotone_gls,
    profile_fit,
    reml_rho,
    reml_sigma,
    unique_design,
)
from .knotsel import (
    KnotSearchReport,
    aic_of_fit,
    backward_delete,
    select_knot_count,
    select_spec,
)
from .reliability import extrapolation_floor, mttf, predict_path
from .simulation import (
    MttfSpec,
    ParametricTruth,
    SimulationScenario,
    SplineTruth,
    StudyMetrics,
    fit_parametric,
    generate_parametric_data,
    generate_spline_data,
    load_scenario,
    run_misspec_study,
    run_recovery_study,
)
