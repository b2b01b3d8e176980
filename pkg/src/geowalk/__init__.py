"""Geodesic random walks, Riemannian Brownian motion and their large deviations."""
from .errors import (
    AllZeroCountsError,
    ConfigError,
    CutLocusError,
    DegenerateCurveError,
    DomainError,
    GeowalkError,
    InvalidPointError,
    NonConvergenceError,
    SchemaVersionError,
)
from .geometry import (
    Curve,
    Euclidean,
    Hyperbolic2,
    Manifold,
    Sphere,
    containment,
    distance,
    exp_map,
    geodesic_bvp,
    geodesic_curve,
    grad_sq_distance,
    log_map,
    metric_at,
    parallel_transport,
    parse_manifold,
)
from .measures import (
    IsotropicGaussian,
    MeasureFamily,
    RadialNorm,
    UniformBall,
    legendre,
    log_mgf,
    parse_family,
    sample_increment,
)
from .walks import WalkConfig, WalkPath, path_at, run_geodesic_walk, walk_endpoints
from .brownian import (
    BrownianPath,
    FrameState,
    exit_bound,
    horizontal_step,
    radial_exit_time,
    run_brownian,
    run_euclidean_sde,
)
from .rates import (
    RateModel,
    characteristic_flow,
    cramer_rate,
    hamiltonian,
    lagrangian,
    path_action,
    variational_semigroup,
)
from .estimator import (
    ExperimentReport,
    RateEstimate,
    estimate_endpoint_rate,
    estimate_heat_semigroup,
    load_report,
    persist_report,
    run_endpoint_experiment,
    verify_exit_bound,
)

__version__ = "0.1.0"
