//! Dense convex quadratic-program and linear-program solvers.
//!
//! Both solvers are written for the small, dense, repeatedly re-solved
//! problems produced by the transcription layer: a primal active-set
//! method with warm starting for the QP, and a two-phase simplex with
//! Bland's anti-cycling rule for the LP. Tie-breaking is fixed everywhere
//! (lowest index wins) so identical inputs produce bit-identical outputs.

mod lp;
mod qp;

pub use lp::{solve_lp, LpError, LpSolution};
pub use qp::{solve_qp, QpError, QpProblem, QpSolution, QpSolver, SolveStats, WarmStart};

use nalgebra::DVector;

/// Infeasibility certificate for the constraint system
/// `A_eq·x = b_eq, A_in·x ≤ b_in`.
///
/// A valid certificate satisfies `A_eqᵀ·eq + A_inᵀ·ineq = 0`,
/// `ineq ≥ 0`, and `b_eqᵀ·eq + b_inᵀ·ineq < 0`, which proves that no
/// feasible point exists.
#[derive(Debug, Clone, PartialEq)]
pub struct FarkasCertificate {
    pub eq: DVector<f64>,
    pub ineq: DVector<f64>,
}
