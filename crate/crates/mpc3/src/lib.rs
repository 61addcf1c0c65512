//! Trajectory optimization and model predictive control via integral
//! Chebyshev collocation.
//!
//! The toolkit transcribes a continuous-time L2 tracking cost for
//! double-integrator dynamics into a fixed-size quadratic program whose
//! dimensions are independent of the prediction horizon, solves it with a
//! warm-started dense active-set method, and layers soft state/input
//! constraints and polytope collision avoidance on top. A condensed
//! discrete-time MPC baseline, a closed-loop docking simulator, and a
//! Monte Carlo harness round out the crate.

pub mod baseline;
pub mod chebyshev;
pub mod collision;
pub mod qpsolver;
pub mod transcription;

pub use baseline::{DiscreteMpcSession, DiscreteMpcSpec};
pub use chebyshev::{ChebyshevBasis, TimeMap};
pub use collision::{CollisionResult, Polytope};
pub use qpsolver::{QpProblem, QpSolution, QpSolver, WarmStart};
pub use transcription::{AxisSpec, ControlSolution, Mpc3Session, TranscriptionSpec};
