//! Single-agent optimal control against frozen costs.

pub mod checks;
pub mod direct;
pub mod feedback;
pub mod path;
pub mod pmp;
pub mod problem;
pub mod value;

pub use checks::{
    control_bound_check, feedback_identity, lipschitz_ratio, semiconcavity_ratio, uniqueness_after_start_check,
    ControlBoundReport, FeedbackIdentityReport, UniquenessReport,
};
pub use direct::{solve_direct, DirectOptions, DirectSolution};
pub use feedback::{feedback_flow, ArcCostateField, FeedbackField, FnField, ZeroField};
pub use path::ControlledPath;
pub use pmp::{default_starts, pmp_rhs, shoot, solve_pmp_shooting, CostateSolution, JacobianMode, Shot, ShootingOptions, ShootingReport};
pub use problem::{cost, OcpProblem, DEFAULT_STEPS};
pub use value::{control_bound, value, value_from, ValueOptions, ValueReport, ValueSource, CONTROL_BOUND_C2};
