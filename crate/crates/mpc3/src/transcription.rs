//! Transcription of the continuous L2 tracking cost for multi-DoF
//! double-integrator dynamics into a fixed-size quadratic program.
//!
//! Each degree of freedom gets its own coefficient vector for the series
//! `x''(τ) = T(τ)·α`; one shared slack variable `ε` softens the control
//! and velocity bounds. The decision vector is `χ = [α_1 … α_q, ε]` of
//! length `q(n+1)+1`, with `4(n+1)` inequality rows and 2 equality rows
//! per axis. `H`, `A_eq`, and `A_in` depend only on the basis, weights,
//! bounds, and horizon length — never on the current state — so a session
//! rebuilds only `f` and `b` between steps.
//!
//! All quantities inside the QP live in the computational domain: with
//! horizon `Δt`, velocities scale by `Δt/2` and accelerations (controls)
//! by `(Δt/2)²`.

use crate::chebyshev::{ChebyshevBasis, ChebyshevError, TimeMap};
use crate::qpsolver::{QpError, QpProblem, QpSolution, QpSolver, WarmStart};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TranscriptionError {
    #[error("axis {axis}: {reason}")]
    InvalidAxis { axis: usize, reason: String },
    #[error("spec needs at least one axis")]
    NoAxes,
    #[error("slack penalty rho must be positive, got {0}")]
    InvalidRho(f64),
    #[error("state has {got} entries, spec has {want} axes")]
    StateDimension { got: usize, want: usize },
    #[error(transparent)]
    Solver(#[from] QpError),
    #[error(transparent)]
    Domain(#[from] ChebyshevError),
}

/// Weights, targets, bounds, and softness factors for one
/// double-integrator degree of freedom. Bounds are physical units
/// (control as acceleration on a unit-mass-normalized plant, velocity in
/// m/s); softness factors of zero make the corresponding bounds hard.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisSpec {
    pub w_u: f64,
    pub w_x: f64,
    pub w_xp: f64,
    pub x_target: f64,
    pub v_target: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub softness_u: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub softness_v: f64,
}

impl AxisSpec {
    fn validate(&self, axis: usize) -> Result<(), TranscriptionError> {
        let fail = |reason: &str| {
            Err(TranscriptionError::InvalidAxis {
                axis,
                reason: reason.to_string(),
            })
        };
        if !(self.u_min < self.u_max) {
            return fail("u_min must be below u_max");
        }
        if !(self.v_min < self.v_max) {
            return fail("v_min must be below v_max");
        }
        if self.w_u < 0.0 || self.w_x < 0.0 || self.w_xp < 0.0 {
            return fail("weights must be nonnegative");
        }
        if self.w_u + self.w_x + self.w_xp <= 0.0 {
            return fail("at least one weight must be positive");
        }
        if self.softness_u < 0.0 || self.softness_v < 0.0 {
            return fail("softness factors must be nonnegative");
        }
        Ok(())
    }
}

impl Default for AxisSpec {
    fn default() -> Self {
        Self {
            w_u: 1.0,
            w_x: 1.0,
            w_xp: 0.0,
            x_target: 0.0,
            v_target: 0.0,
            u_min: -1.0,
            u_max: 1.0,
            softness_u: 0.0,
            v_min: -1.0,
            v_max: 1.0,
            softness_v: 0.0,
        }
    }
}

/// One transcription instance: basis order, horizon, per-axis data, and
/// the slack penalty. Immutable once built; cached constraint matrices
/// are shared by every solve.
#[derive(Debug, Clone)]
pub struct TranscriptionSpec {
    basis: ChebyshevBasis,
    horizon: TimeMap,
    axes: Vec<AxisSpec>,
    rho: f64,
}

impl TranscriptionSpec {
    pub fn new(
        basis: ChebyshevBasis,
        horizon: TimeMap,
        axes: Vec<AxisSpec>,
        rho: f64,
    ) -> Result<Self, TranscriptionError> {
        if axes.is_empty() {
            return Err(TranscriptionError::NoAxes);
        }
        for (i, ax) in axes.iter().enumerate() {
            ax.validate(i)?;
        }
        if !(rho > 0.0) {
            return Err(TranscriptionError::InvalidRho(rho));
        }
        Ok(Self {
            basis,
            horizon,
            axes,
            rho,
        })
    }

    pub fn basis(&self) -> &ChebyshevBasis {
        &self.basis
    }

    pub fn horizon(&self) -> TimeMap {
        self.horizon
    }

    pub fn axes(&self) -> &[AxisSpec] {
        &self.axes
    }

    pub fn axes_mut(&mut self) -> &mut [AxisSpec] {
        &mut self.axes
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn num_axes(&self) -> usize {
        self.axes.len()
    }

    /// Decision dimension `q(n+1) + 1`.
    pub fn decision_dim(&self) -> usize {
        self.num_axes() * self.basis.num_coeffs() + 1
    }

    /// Inequality row count `4(n+1)q`.
    pub fn num_inequalities(&self) -> usize {
        4 * self.basis.num_coeffs() * self.num_axes()
    }

    /// Equality row count: two initial-condition rows per axis.
    pub fn num_equalities(&self) -> usize {
        2 * self.num_axes()
    }

    /// Scale a physical velocity to the computational domain.
    pub fn vel_to_computational(&self, v: f64) -> f64 {
        v * 0.5 * self.horizon.dt()
    }

    pub fn vel_to_physical(&self, v_comp: f64) -> f64 {
        v_comp / (0.5 * self.horizon.dt())
    }

    /// Scale a physical control (acceleration) to the computational domain.
    pub fn ctrl_to_computational(&self, u: f64) -> f64 {
        let half = 0.5 * self.horizon.dt();
        u * half * half
    }

    pub fn ctrl_to_physical(&self, u_comp: f64) -> f64 {
        let half = 0.5 * self.horizon.dt();
        u_comp / (half * half)
    }

    /// Assemble the full QP for the given current state.
    pub fn build_qp(
        &self,
        x_now: &DVector<f64>,
        v_now: &DVector<f64>,
    ) -> Result<QpProblem, TranscriptionError> {
        self.check_state(x_now, v_now)?;
        let (h, a_eq, a_in) = self.constant_blocks();
        let (f, b_in) = self.linear_terms(x_now, v_now)?;
        let b_eq = DVector::zeros(self.num_equalities());
        Ok(QpProblem::new(h, f, a_eq, b_eq, a_in, b_in)?)
    }

    fn check_state(
        &self,
        x_now: &DVector<f64>,
        v_now: &DVector<f64>,
    ) -> Result<(), TranscriptionError> {
        let q = self.num_axes();
        if x_now.len() != q || v_now.len() != q {
            return Err(TranscriptionError::StateDimension {
                got: x_now.len().min(v_now.len()),
                want: q,
            });
        }
        Ok(())
    }

    /// The state-independent blocks `H`, `A_eq`, `A_in`.
    pub fn constant_blocks(&self) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let m = self.basis.num_coeffs();
        let q = self.num_axes();
        let d = self.decision_dim();
        let dt = self.horizon.dt();

        let dw = DMatrix::from_diagonal(self.basis.weights());
        let t = self.basis.t_mat();
        let gm = self.basis.gamma_mat();
        let bm = self.basis.beta_mat();
        let tt = t.transpose() * &dw * t;
        let gg = gm.transpose() * &dw * gm;
        let bb = bm.transpose() * &dw * bm;

        let mut h = DMatrix::<f64>::zeros(d, d);
        for (a, ax) in self.axes.iter().enumerate() {
            let block = (&tt * ax.w_u + &gg * ax.w_x + &bb * ax.w_xp) * dt;
            h.view_mut((a * m, a * m), (m, m)).copy_from(&block);
        }
        h[(d - 1, d - 1)] = self.rho;

        // Initial-condition rows γ(-1), β(-1); identically zero in the
        // integral form but retained as written.
        let mut a_eq = DMatrix::<f64>::zeros(self.num_equalities(), d);
        for a in 0..q {
            for j in 0..m {
                a_eq[(2 * a, a * m + j)] = self.basis.gamma_start()[j];
                a_eq[(2 * a + 1, a * m + j)] = self.basis.beta_start()[j];
            }
        }

        // Per axis: ±T rows bound the control, ±β rows bound the velocity
        // change; the shared slack column softens both.
        let mut a_in = DMatrix::<f64>::zeros(self.num_inequalities(), d);
        for (a, ax) in self.axes.iter().enumerate() {
            let base = 4 * m * a;
            for i in 0..m {
                for j in 0..m {
                    a_in[(base + i, a * m + j)] = t[(i, j)];
                    a_in[(base + m + i, a * m + j)] = -t[(i, j)];
                    a_in[(base + 2 * m + i, a * m + j)] = bm[(i, j)];
                    a_in[(base + 3 * m + i, a * m + j)] = -bm[(i, j)];
                }
                a_in[(base + i, d - 1)] = -ax.softness_u;
                a_in[(base + m + i, d - 1)] = -ax.softness_u;
                a_in[(base + 2 * m + i, d - 1)] = -ax.softness_v;
                a_in[(base + 3 * m + i, d - 1)] = -ax.softness_v;
            }
        }
        (h, a_eq, a_in)
    }

    /// The state-dependent terms `f` and `b_in`.
    pub fn linear_terms(
        &self,
        x_now: &DVector<f64>,
        v_now: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>), TranscriptionError> {
        self.check_state(x_now, v_now)?;
        let m = self.basis.num_coeffs();
        let d = self.decision_dim();
        let dt = self.horizon.dt();
        let w = self.basis.weights();
        let nodes = self.basis.nodes();
        let gm = self.basis.gamma_mat();
        let bm = self.basis.beta_mat();

        let mut f = DVector::<f64>::zeros(d);
        let mut b_in = DVector::<f64>::zeros(self.num_inequalities());
        for (a, ax) in self.axes.iter().enumerate() {
            let v0 = self.vel_to_computational(v_now[a]);
            let vt = self.vel_to_computational(ax.v_target);
            // Position deviation of the zero-coefficient trajectory at
            // each node, and the constant velocity deviation.
            let cx = DVector::from_fn(m, |i, _| v0 * (nodes[i] + 1.0) + x_now[a] - ax.x_target);
            let cv = DVector::from_element(m, v0 - vt);
            let wx = DVector::from_fn(m, |i, _| w[i] * cx[i]);
            let wv = DVector::from_fn(m, |i, _| w[i] * cv[i]);
            let fa = (gm.transpose() * wx) * (ax.w_x * dt) + (bm.transpose() * wv) * (ax.w_xp * dt);
            f.rows_mut(a * m, m).copy_from(&fa);

            let base = 4 * m * a;
            let u_hi = self.ctrl_to_computational(ax.u_max);
            let u_lo = self.ctrl_to_computational(ax.u_min);
            let v_hi = self.vel_to_computational(ax.v_max);
            let v_lo = self.vel_to_computational(ax.v_min);
            for i in 0..m {
                b_in[base + i] = u_hi;
                b_in[base + m + i] = -u_lo;
                b_in[base + 2 * m + i] = v_hi - v0;
                b_in[base + 3 * m + i] = -v_lo + v0;
            }
        }
        Ok((f, b_in))
    }

    /// Unpack a raw QP minimizer into per-axis coefficients and controls.
    pub fn extract_solution(
        &self,
        qp: &QpSolution,
        x_now: &DVector<f64>,
        v_now: &DVector<f64>,
    ) -> ControlSolution {
        let m = self.basis.num_coeffs();
        let q = self.num_axes();
        let alpha = DMatrix::from_fn(m, q, |j, a| qp.chi[a * m + j]);
        let u_now = DVector::from_fn(q, |a, _| {
            let u_comp = (self.basis.t_start() * alpha.column(a))[0];
            self.ctrl_to_physical(u_comp)
        });
        ControlSolution {
            alpha,
            epsilon: qp.chi[self.decision_dim() - 1],
            u_now,
            objective: qp.objective,
            x0: x_now.clone(),
            v0: v_now.clone(),
        }
    }

    /// Solve a single step without session caching.
    pub fn solve_once(
        &self,
        x_now: &DVector<f64>,
        v_now: &DVector<f64>,
    ) -> Result<ControlSolution, TranscriptionError> {
        let mut session = Mpc3Session::new(self.clone())?;
        session.solve_step(x_now, v_now)
    }
}

/// Optimal coefficients for one solve, plus the state it started from.
#[derive(Debug, Clone)]
pub struct ControlSolution {
    /// Coefficient matrix, one column per axis.
    pub alpha: DMatrix<f64>,
    /// Shared slack value.
    pub epsilon: f64,
    /// Instantaneous physical control `T(-1)·α` per axis, rescaled.
    pub u_now: DVector<f64>,
    pub objective: f64,
    pub x0: DVector<f64>,
    pub v0: DVector<f64>,
}

/// Trajectory samples in physical units.
#[derive(Debug, Clone)]
pub struct SampledTrajectory {
    pub times: Vec<f64>,
    /// One row per sample time, one column per axis.
    pub positions: DMatrix<f64>,
    pub velocities: DMatrix<f64>,
    pub controls: DMatrix<f64>,
}

/// Evaluate the planned state, velocity, and control at the given times
/// (in the horizon's time frame).
pub fn sample_trajectory(
    spec: &TranscriptionSpec,
    solution: &ControlSolution,
    times: &[f64],
) -> Result<SampledTrajectory, TranscriptionError> {
    let q = spec.num_axes();
    let map = spec.horizon();
    let mut positions = DMatrix::zeros(times.len(), q);
    let mut velocities = DMatrix::zeros(times.len(), q);
    let mut controls = DMatrix::zeros(times.len(), q);
    for (k, &t) in times.iter().enumerate() {
        let tau = map.to_tau(t)?;
        let t_row = spec.basis().t_row(tau)?;
        let b_row = spec.basis().beta_row(tau)?;
        let g_row = spec.basis().gamma_row(tau)?;
        for a in 0..q {
            let alpha = solution.alpha.column(a);
            let v0 = spec.vel_to_computational(solution.v0[a]);
            positions[(k, a)] = (&g_row * alpha)[0] + v0 * (tau + 1.0) + solution.x0[a];
            velocities[(k, a)] = solution.v0[a] + spec.vel_to_physical((&b_row * alpha)[0]);
            controls[(k, a)] = spec.ctrl_to_physical((&t_row * alpha)[0]);
        }
    }
    Ok(SampledTrajectory {
        times: times.to_vec(),
        positions,
        velocities,
        controls,
    })
}

/// Receding-horizon solver session: owns the cached problem, the solver's
/// factorizations, and the warm-start state. Single-threaded by design.
pub struct Mpc3Session {
    spec: TranscriptionSpec,
    problem: QpProblem,
    solver: QpSolver,
    warm: Option<WarmStart>,
    last_stats: Option<crate::qpsolver::SolveStats>,
}

impl Mpc3Session {
    pub fn new(spec: TranscriptionSpec) -> Result<Self, TranscriptionError> {
        let q = spec.num_axes();
        let problem = spec.build_qp(&DVector::zeros(q), &DVector::zeros(q))?;
        let solver = QpSolver::new(&problem)?;
        Ok(Self {
            spec,
            problem,
            solver,
            warm: None,
            last_stats: None,
        })
    }

    pub fn spec(&self) -> &TranscriptionSpec {
        &self.spec
    }

    pub fn problem(&self) -> &QpProblem {
        &self.problem
    }

    pub fn last_stats(&self) -> Option<crate::qpsolver::SolveStats> {
        self.last_stats
    }

    /// Retarget every axis; affects only the linear cost term.
    pub fn set_targets(&mut self, x_target: &DVector<f64>, v_target: &DVector<f64>) {
        for (a, ax) in self.spec.axes_mut().iter_mut().enumerate() {
            ax.x_target = x_target[a];
            ax.v_target = v_target[a];
        }
    }

    /// Drop the warm start (used after the problem changed shape).
    pub fn reset_warm_start(&mut self) {
        self.warm = None;
    }

    /// Solve the step QP for the current state, reusing cached matrices
    /// and warm-starting from the previous solution.
    pub fn solve_step(
        &mut self,
        x_now: &DVector<f64>,
        v_now: &DVector<f64>,
    ) -> Result<ControlSolution, TranscriptionError> {
        let (f, b_in) = self.spec.linear_terms(x_now, v_now)?;
        self.problem.update_linear_terms(f, b_in)?;
        let warm = self.warm.take().map(|mut w| {
            repair_slack(&self.problem, &mut w.chi0, self.spec.decision_dim() - 1);
            w
        });
        let qp = self.solver.solve(&self.problem, warm.as_ref())?;
        self.last_stats = Some(qp.stats);
        self.warm = Some(qp.warm_start());
        Ok(self.spec.extract_solution(&qp, x_now, v_now))
    }

    /// Solve with extra inequality rows appended (collision avoidance).
    /// The augmented problem is solved standalone; the session's own warm
    /// start and cache stay tied to the base shape.
    pub fn solve_with_extra_rows(
        &mut self,
        x_now: &DVector<f64>,
        v_now: &DVector<f64>,
        problem: &QpProblem,
    ) -> Result<ControlSolution, TranscriptionError> {
        let mut warm = self
            .warm
            .as_ref()
            .map(|w| WarmStart::new(w.chi0.clone(), Vec::new()));
        if let Some(w) = warm.as_mut() {
            repair_slack(problem, &mut w.chi0, self.spec.decision_dim() - 1);
        }
        let qp = crate::qpsolver::solve_qp(problem, warm.as_ref())?;
        self.last_stats = Some(qp.stats);
        // Seed the next base solve from the avoidance trajectory.
        self.warm = Some(WarmStart::new(qp.chi.clone(), Vec::new()));
        Ok(self.spec.extract_solution(&qp, x_now, v_now))
    }
}

/// Raise the slack entry of `chi` until every soft inequality row holds.
/// Rows with a zero slack coefficient are left to the solver's own
/// feasibility phase.
fn repair_slack(problem: &QpProblem, chi: &mut DVector<f64>, slack_idx: usize) {
    if chi.len() != problem.dim() {
        return;
    }
    let mut needed = chi[slack_idx];
    for i in 0..problem.num_in() {
        let row = problem.a_in.row(i);
        let v = -row[slack_idx];
        if v > 1e-12 {
            let lhs: f64 = (0..problem.dim())
                .filter(|&j| j != slack_idx)
                .map(|j| row[j] * chi[j])
                .sum();
            needed = needed.max((lhs - problem.b_in[i]) / v + 1e-9);
        }
    }
    chi[slack_idx] = needed;
}
