//! Condensed discrete-time MPC used as the comparison method.
//!
//! States are eliminated through stacked prediction matrices
//! `y = S_x·x_k + S_u·u`, leaving the control sequence as the only
//! decision variable. The problem therefore grows linearly with the
//! horizon `p` — decision dimension `p·m`, `2pq` output box rows — in
//! contrast to the collocation formulation whose size is horizon
//! independent.

use crate::qpsolver::{QpError, QpProblem, QpSolution, QpSolver, WarmStart};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("state has {got} entries, expected {want}")]
    StateDimension { got: usize, want: usize },
    #[error(transparent)]
    Solver(#[from] QpError),
}

/// Condensed MPC data: discrete plant, horizon, diagonal weights,
/// reference, and per-step box constraints.
#[derive(Debug, Clone)]
pub struct DiscreteMpcSpec {
    pub a_d: DMatrix<f64>,
    pub b_d: DMatrix<f64>,
    /// Prediction horizon in samples; also the control horizon.
    pub p: usize,
    /// Diagonal of the control weight (length m).
    pub w_u: DVector<f64>,
    /// Diagonal of the output weight (length q).
    pub w_y: DVector<f64>,
    pub y_ref: DVector<f64>,
    /// Optional per-step control box (lo, hi).
    pub u_bounds: Option<(DVector<f64>, DVector<f64>)>,
    /// Per-step output box (lo, hi).
    pub y_bounds: (DVector<f64>, DVector<f64>),
}

impl DiscreteMpcSpec {
    pub fn validate(&self) -> Result<(), BaselineError> {
        let q = self.a_d.nrows();
        let m = self.b_d.ncols();
        let fail = |s: &str| Err(BaselineError::InvalidSpec(s.to_string()));
        if self.a_d.ncols() != q || self.b_d.nrows() != q {
            return fail("A_d must be q×q and B_d q×m");
        }
        if self.p < 1 {
            return fail("horizon must be at least one sample");
        }
        if self.w_u.len() != m || self.w_y.len() != q || self.y_ref.len() != q {
            return fail("weight/reference lengths must match q and m");
        }
        if self.y_bounds.0.len() != q || self.y_bounds.1.len() != q {
            return fail("output bounds must have length q");
        }
        if let Some((lo, hi)) = &self.u_bounds {
            if lo.len() != m || hi.len() != m {
                return fail("control bounds must have length m");
            }
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.a_d.nrows()
    }

    pub fn control_dim(&self) -> usize {
        self.b_d.ncols()
    }

    /// Exact zero-order-hold double integrator with `dof` axes: per-axis
    /// state (position, velocity) blocks, one force input per axis.
    pub fn double_integrator(
        dof: usize,
        t_s: f64,
        p: usize,
        w_u: f64,
        w_pos: f64,
        w_vel: f64,
        pos_ref: &[f64],
    ) -> Result<Self, BaselineError> {
        if !(t_s > 0.0) {
            return Err(BaselineError::InvalidSpec(format!(
                "sample time must be positive, got {t_s}"
            )));
        }
        if pos_ref.len() != dof {
            return Err(BaselineError::InvalidSpec(
                "reference length must equal dof".into(),
            ));
        }
        let q = 2 * dof;
        let mut a_d = DMatrix::<f64>::zeros(q, q);
        let mut b_d = DMatrix::<f64>::zeros(q, dof);
        for a in 0..dof {
            a_d[(2 * a, 2 * a)] = 1.0;
            a_d[(2 * a, 2 * a + 1)] = t_s;
            a_d[(2 * a + 1, 2 * a + 1)] = 1.0;
            b_d[(2 * a, a)] = 0.5 * t_s * t_s;
            b_d[(2 * a + 1, a)] = t_s;
        }
        let mut y_ref = DVector::<f64>::zeros(q);
        let mut w_y = DVector::<f64>::zeros(q);
        for a in 0..dof {
            y_ref[2 * a] = pos_ref[a];
            w_y[2 * a] = w_pos;
            w_y[2 * a + 1] = w_vel;
        }
        let spec = Self {
            a_d,
            b_d,
            p,
            w_u: DVector::from_element(dof, w_u),
            w_y,
            y_ref,
            u_bounds: None,
            y_bounds: (DVector::from_element(q, -1e6), DVector::from_element(q, 1e6)),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Stacked prediction matrices over `p` steps: `y = S_x·x_k + S_u·u`
    /// with `y = [x_{k+1}; …; x_{k+p}]`. `S_u` is lower block triangular.
    pub fn condense(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let q = self.state_dim();
        let m = self.control_dim();
        let p = self.p;
        let mut s_x = DMatrix::<f64>::zeros(p * q, q);
        let mut s_u = DMatrix::<f64>::zeros(p * q, p * m);
        let mut a_pow = DMatrix::<f64>::identity(q, q);
        for i in 0..p {
            a_pow = &self.a_d * &a_pow;
            s_x.view_mut((i * q, 0), (q, q)).copy_from(&a_pow);
        }
        for i in 0..p {
            for j in 0..=i {
                // Block (i, j) = A_d^{i-j} B_d.
                let mut blk = self.b_d.clone();
                for _ in 0..(i - j) {
                    blk = &self.a_d * &blk;
                }
                s_u.view_mut((i * q, j * m), (q, m)).copy_from(&blk);
            }
        }
        (s_x, s_u)
    }
}

/// Receding-horizon session for the condensed problem; caches the
/// prediction matrices and the QP factorization, rebuilding only the
/// state-dependent `f` and `b` each step.
pub struct DiscreteMpcSession {
    spec: DiscreteMpcSpec,
    s_x: DMatrix<f64>,
    s_u: DMatrix<f64>,
    /// `2·S_uᵀ·W̄_y`, reused in every `f` rebuild.
    f_gain: DMatrix<f64>,
    y_ref_stack: DVector<f64>,
    problem: QpProblem,
    solver: QpSolver,
    warm: Option<WarmStart>,
    last_stats: Option<crate::qpsolver::SolveStats>,
}

impl DiscreteMpcSession {
    pub fn new(spec: DiscreteMpcSpec) -> Result<Self, BaselineError> {
        spec.validate()?;
        let q = spec.state_dim();
        let m = spec.control_dim();
        let p = spec.p;
        let (s_x, s_u) = spec.condense();

        let w_y_stack = DVector::from_fn(p * q, |i, _| spec.w_y[i % q]);
        let w_u_stack = DVector::from_fn(p * m, |i, _| spec.w_u[i % m]);
        let wy = DMatrix::from_diagonal(&w_y_stack);
        let h = (s_u.transpose() * &wy * &s_u + DMatrix::from_diagonal(&w_u_stack)) * 2.0;
        let h = (&h + h.transpose()) * 0.5;
        let f_gain = s_u.transpose() * &wy * 2.0;
        let y_ref_stack = DVector::from_fn(p * q, |i, _| spec.y_ref[i % q]);

        // Output box rows first (+y then -y), then optional control box.
        let n_y = 2 * p * q;
        let n_u = if spec.u_bounds.is_some() { 2 * p * m } else { 0 };
        let mut a_in = DMatrix::<f64>::zeros(n_y + n_u, p * m);
        a_in.view_mut((0, 0), (p * q, p * m)).copy_from(&s_u);
        a_in.view_mut((p * q, 0), (p * q, p * m)).copy_from(&(-&s_u));
        if spec.u_bounds.is_some() {
            for i in 0..p * m {
                a_in[(n_y + i, i)] = 1.0;
                a_in[(n_y + p * m + i, i)] = -1.0;
            }
        }

        let x0 = DVector::zeros(q);
        let (f, b_in) = Self::linear_terms_impl(&spec, &s_x, &f_gain, &y_ref_stack, &x0);
        let problem = QpProblem::inequality_constrained(h, f, a_in, b_in)?;
        let solver = QpSolver::new(&problem)?;
        Ok(Self {
            spec,
            s_x,
            s_u,
            f_gain,
            y_ref_stack,
            problem,
            solver,
            warm: None,
            last_stats: None,
        })
    }

    fn linear_terms_impl(
        spec: &DiscreteMpcSpec,
        s_x: &DMatrix<f64>,
        f_gain: &DMatrix<f64>,
        y_ref_stack: &DVector<f64>,
        x_now: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>) {
        let q = spec.state_dim();
        let m = spec.control_dim();
        let p = spec.p;
        let free = s_x * x_now;
        let f = f_gain * (&free - y_ref_stack);

        let n_y = 2 * p * q;
        let n_u = if spec.u_bounds.is_some() { 2 * p * m } else { 0 };
        let mut b_in = DVector::<f64>::zeros(n_y + n_u);
        for i in 0..p * q {
            b_in[i] = spec.y_bounds.1[i % q] - free[i];
            b_in[p * q + i] = free[i] - spec.y_bounds.0[i % q];
        }
        if let Some((lo, hi)) = &spec.u_bounds {
            for i in 0..p * m {
                b_in[n_y + i] = hi[i % m];
                b_in[n_y + p * m + i] = -lo[i % m];
            }
        }
        (f, b_in)
    }

    pub fn spec(&self) -> &DiscreteMpcSpec {
        &self.spec
    }

    pub fn problem(&self) -> &QpProblem {
        &self.problem
    }

    pub fn prediction_matrices(&self) -> (&DMatrix<f64>, &DMatrix<f64>) {
        (&self.s_x, &self.s_u)
    }

    pub fn last_stats(&self) -> Option<crate::qpsolver::SolveStats> {
        self.last_stats
    }

    /// Allocation proxy covering the condensed QP plus the prediction
    /// matrices kept for the per-step rebuild.
    pub fn data_bytes(&self) -> usize {
        self.problem.data_bytes()
            + (self.s_x.len() + self.s_u.len() + self.f_gain.len() + self.y_ref_stack.len())
                * std::mem::size_of::<f64>()
    }

    /// Solve the step QP and return the first control of the sequence.
    pub fn solve_step(&mut self, x_now: &DVector<f64>) -> Result<DVector<f64>, BaselineError> {
        if x_now.len() != self.spec.state_dim() {
            return Err(BaselineError::StateDimension {
                got: x_now.len(),
                want: self.spec.state_dim(),
            });
        }
        let (f, b_in) =
            Self::linear_terms_impl(&self.spec, &self.s_x, &self.f_gain, &self.y_ref_stack, x_now);
        self.problem.update_linear_terms(f, b_in)?;
        let qp: QpSolution = self.solver.solve(&self.problem, self.warm.as_ref())?;
        self.last_stats = Some(qp.stats);
        let m = self.spec.control_dim();
        let u_now = qp.chi.rows(0, m).into_owned();
        self.warm = Some(qp.warm_start());
        Ok(u_now)
    }
}
