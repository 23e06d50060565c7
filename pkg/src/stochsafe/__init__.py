"""Safety verification for discrete-time stochastic systems.

The pipeline: bound the gap between stochastic trajectories and their
associated deterministic trajectories (gap_bound), erode the safe set by that
bound (geometry), verify the deterministic system on the eroded set
(verifier), and validate every analytic claim by simulation (montecarlo).
"""

from .gap_bound import (
    ConcentrationConstants,
    DegenerateScheduleError,
    GapProfile,
    ScheduleSpec,
    capital_psi,
    capital_psi_sequence,
    gap_profile,
    gap_radius,
    noise_norm_bound,
    psi,
    tail_factor,
)
from .geometry import (
    AxisBox,
    Ball,
    ConvexObstacle,
    DimensionMismatchError,
    HalfspacePolytope,
    SafeSet,
    distance_to_obstacle,
    erosion_nonempty,
    in_eroded_set,
    min_obstacle_clearance,
)
from .dynamics import (
    InputBox,
    InputVertices,
    SystemModel,
    UnicycleConfig,
    estimate_lipschitz,
    estimate_lipschitz_tube,
    make_linear_matrix,
    make_linear_scalar,
    make_model,
    make_unicycle,
    register_model,
    step,
    trajectory,
)
from .montecarlo import (
    GapValidation,
    NoiseFamily,
    SimulationResult,
    estimate_failure,
    gap_batch,
    sample_noise,
    simulate_pair,
    validate_gap_profile,
)
from .verifier import (
    BarrierCandidate,
    BarrierProbeSpec,
    ClassKFunction,
    MalformedCandidateError,
    VerificationProblem,
    VerificationReport,
    interval_quadratic_ebf,
    interval_safe_set,
    linear_interval_threshold,
    verify_barrier,
    verify_reach_tube,
)

__version__ = "0.1.0"
