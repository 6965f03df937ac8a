"""Sontag-type control from LQR-based control Lyapunov functions.

Construct CLFs from a Riccati design or from feedback-linearization
coordinates, synthesize the Sontag-type feedback, and verify
optimality, stability, and region-of-attraction properties by
closed-loop simulation and grid certification.
"""

from .analysis import (
    GlobalClfReport,
    GridSpec,
    RoaCertificate,
    SweepResult,
    global_clf_sample_check,
    largest_certified_sublevel,
    roa_certify,
    sweep_initial_angles,
)
from .clf import (
    LieDerivatives,
    QuadraticClf,
    TransformedClf,
    build_global_clf,
    build_lqr_clf,
    clf_condition_at,
    clf_value_grad,
    lie_derivatives,
    transform_P,
)
from .control import (
    Branch,
    ControlEval,
    FblController,
    LqrController,
    SontagController,
    SynthesisResult,
    fbl_control,
    fbl_gain_design,
    hjb_residual,
    lambda_factor,
    lqr_control,
    sontag_control,
    synthesize_design,
)
from .linalg import (
    NotPositiveDefinite,
    NotSymmetric,
    SingularMatrix,
    cholesky_pd,
    is_hurwitz,
    solve_linear,
    solve_lyapunov,
)
from .model import (
    DomainViolation,
    FeedbackLinearization,
    PendulumParams,
    SystemModel,
    eval_dynamics,
    linearize,
    lti_system,
    pendulum_system,
)
from .riccati import BadWeights, LqrDesign, NotStabilizable, solve_care, stabilizability_check
from .sim import (
    CostReport,
    SimConfig,
    Trajectory,
    cost_index,
    distorted_cost,
    lyap_decay_check,
    make_cost_report,
    rk4_step,
    simulate,
)

__version__ = "0.1.0"
