"""Probabilistically robust state-feedback synthesis from multi-system rollouts."""

__version__ = "0.1.0"

from .data import (  # noqa: F401
    DataMatrices,
    NoiseModelQMI,
    SlaterReport,
    Trajectory,
    build_data_matrices,
    build_slater_matrix_V,
    check_generalized_slater,
    membership_consistent_set,
    noise_model_from_bound,
)
from .errors import (  # noqa: F401
    DataValidationError,
    NotPositiveDefiniteError,
    RolloutOverflowError,
    SamplingError,
    ScenarioDdcError,
    SolverFailureError,
)
from .fleet import (  # noqa: F401
    FixedLaw,
    FleetDistribution,
    GaussianLaw,
    RolloutConfig,
    SystemSample,
    UniformBoxLaw,
    default_benchmark_fleet,
    generate_dataset,
    sample_noise,
    sample_system,
    simulate_trajectory,
)
from .scenario import (  # noqa: F401
    ScenarioSpec,
    achievable_alpha,
    decision_dimension,
    required_scenarios,
    required_scenarios_raw,
)
from .synthesis import (  # noqa: F401
    Infeasible,
    LmiProblem,
    NumericalFailure,
    ScenarioConstraint,
    SynthesisCertificate,
    assemble_scenario_lmi,
    assemble_single_lmi,
    certify_quadratic_stability,
    extract_controller,
    solve_feasibility,
)
from .validation import (  # noqa: F401
    ConsistentSetRaster,
    ValidationReport,
    area_variance,
    centroid_dispersion,
    consistent_set_raster_1d,
    estimate_alpha,
    spectral_radius,
)
