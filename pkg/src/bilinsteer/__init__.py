"""Multiplicative-control steering of semilinear heat equations on (0,1)^d."""

from .approx import (
    BernsteinOperator,
    MollifierParams,
    bernstein_basis,
    bernstein_derivative,
    bernstein_eval,
    bernstein_tail_bound,
    bernstein_total_bound,
    bump_normalizer,
    mollify,
    smooth_exponent,
)
from .control import (
    AdmissibilityReport,
    cancellation_control,
    check_admissibility,
    hold_control,
    log_ratio,
    static_control,
    two_phase_control,
)
from .grid import (
    Field,
    SpatialGrid,
    SupportMask,
    apply_laplacian,
    build_grid,
    discrete_gradient,
    inner,
    l2_norm,
    linf_norm,
)
from .pde import (
    ControlSchedule,
    NonlinearitySpec,
    Trajectory,
    make_nonlinearity,
    resolvent_smooth,
    simulate,
    step_heat,
    steering_identity_residual,
    vcf_residual,
)
from .steer import (
    SteeringProblem,
    SteeringReport,
    bernstein_pipeline_demo,
    convergence_study,
    resolvent_prefilter,
    steer_corollary1,
    steer_fixed_time,
    steer_theorem1,
)

__version__ = "0.1.0"
