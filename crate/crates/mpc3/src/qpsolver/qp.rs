//! Primal active-set method for dense convex quadratic programs.
//!
//! Equality constraints are eliminated once per problem shape through an
//! orthonormal null-space basis; the active-set iteration then runs on the
//! reduced inequality-only problem. `H`, `A_eq`, and `A_in` stay fixed
//! across MPC steps, so the reduction and the reduced data are cached in
//! [`QpSolver`] and only `f` and `b` change between solves.

use super::{
    lp::{solve_lp, LpError},
    FarkasCertificate,
};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Tolerance below which an inequality is treated as active.
const ACTIVE_TOL: f64 = 1e-8;
/// Primal feasibility tolerance triggering a phase-1 restore.
const FEAS_TOL: f64 = 1e-9;
/// Multiplier threshold for optimality (dual feasibility).
const DUAL_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("cost matrix is not symmetric")]
    NotSymmetric,
    #[error("quadratic program is infeasible")]
    Infeasible { certificate: FarkasCertificate },
    #[error("active-set iteration limit {limit} reached")]
    MaxIterations { limit: usize, best: Box<QpSolution> },
    #[error("working-set subproblem could not be solved")]
    Singular,
    #[error("phase-1 subproblem failed: {0}")]
    Phase1(LpError),
}

/// Dense convex QP `min ½χᵀHχ + fᵀχ  s.t.  A_eq·χ = b_eq, A_in·χ ≤ b_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub f: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub b_in: DVector<f64>,
}

impl QpProblem {
    pub fn new(
        h: DMatrix<f64>,
        f: DVector<f64>,
        a_eq: DMatrix<f64>,
        b_eq: DVector<f64>,
        a_in: DMatrix<f64>,
        b_in: DVector<f64>,
    ) -> Result<Self, QpError> {
        let d = f.len();
        if h.nrows() != d || h.ncols() != d {
            return Err(QpError::Dimension(format!(
                "H is {}x{}, expected {d}x{d}",
                h.nrows(),
                h.ncols()
            )));
        }
        if a_eq.nrows() != b_eq.len() || (a_eq.nrows() > 0 && a_eq.ncols() != d) {
            return Err(QpError::Dimension("equality block shape".into()));
        }
        if a_in.nrows() != b_in.len() || (a_in.nrows() > 0 && a_in.ncols() != d) {
            return Err(QpError::Dimension("inequality block shape".into()));
        }
        let scale = h.amax().max(1.0);
        for i in 0..d {
            for j in (i + 1)..d {
                if (h[(i, j)] - h[(j, i)]).abs() > 1e-10 * scale {
                    return Err(QpError::NotSymmetric);
                }
            }
        }
        Ok(Self {
            h,
            f,
            a_eq,
            b_eq,
            a_in,
            b_in,
        })
    }

    /// Problem with inequality constraints only.
    pub fn inequality_constrained(
        h: DMatrix<f64>,
        f: DVector<f64>,
        a_in: DMatrix<f64>,
        b_in: DVector<f64>,
    ) -> Result<Self, QpError> {
        let d = f.len();
        Self::new(h, f, DMatrix::zeros(0, d), DVector::zeros(0), a_in, b_in)
    }

    pub fn dim(&self) -> usize {
        self.f.len()
    }

    pub fn num_eq(&self) -> usize {
        self.a_eq.nrows()
    }

    pub fn num_in(&self) -> usize {
        self.a_in.nrows()
    }

    /// Replace the linear cost and the inequality right-hand side.
    ///
    /// `H`, `A_eq`, `b_eq`, and `A_in` are untouched, so any solver built
    /// on this problem keeps its cached factorizations.
    pub fn update_linear_terms(
        &mut self,
        f: DVector<f64>,
        b_in: DVector<f64>,
    ) -> Result<(), QpError> {
        if f.len() != self.dim() {
            return Err(QpError::Dimension(format!(
                "f has length {}, expected {}",
                f.len(),
                self.dim()
            )));
        }
        if b_in.len() != self.num_in() {
            return Err(QpError::Dimension(format!(
                "b_in has length {}, expected {}",
                b_in.len(),
                self.num_in()
            )));
        }
        self.f = f;
        self.b_in = b_in;
        Ok(())
    }

    /// Deterministic allocation proxy: stored matrix/vector entries times
    /// the scalar width.
    pub fn data_bytes(&self) -> usize {
        let entries = self.h.len()
            + self.f.len()
            + self.a_eq.len()
            + self.b_eq.len()
            + self.a_in.len()
            + self.b_in.len();
        entries * std::mem::size_of::<f64>()
    }
}

/// Initial point and guessed active inequality rows for a warm start.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub chi0: DVector<f64>,
    pub active_set: Vec<usize>,
}

impl WarmStart {
    pub fn new(chi0: DVector<f64>, active_set: Vec<usize>) -> Self {
        Self { chi0, active_set }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolveStats {
    /// Active-set loop passes, counting the final optimality check.
    pub iterations: usize,
    /// Dense factorizations performed during the solve.
    pub factorizations: usize,
    /// Whether a phase-1 feasibility LP was needed.
    pub phase1: bool,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub chi: DVector<f64>,
    pub objective: f64,
    pub eq_duals: DVector<f64>,
    /// One multiplier per inequality row; zero off the active set.
    pub in_duals: DVector<f64>,
    pub active_set: Vec<usize>,
    pub stats: SolveStats,
    /// False when the iterate comes from a failure path.
    pub optimal: bool,
}

impl QpSolution {
    /// Warm-start payload for re-solving the same problem shape.
    pub fn warm_start(&self) -> WarmStart {
        WarmStart::new(self.chi.clone(), self.active_set.clone())
    }
}

/// Cached equality elimination and reduced problem data for one QP shape.
pub struct QpSolver {
    dim: usize,
    num_eq: usize,
    num_in: usize,
    /// Orthonormal null-space basis of `A_eq` (d×k).
    z: DMatrix<f64>,
    /// Eigen-decomposition of `A_eq·A_eqᵀ` used for the particular
    /// solution and equality-dual recovery.
    eq_gram_vecs: DMatrix<f64>,
    eq_gram_vals: DVector<f64>,
    /// Reduced Hessian `Zᵀ H Z`.
    hz: DMatrix<f64>,
    /// Reduced inequality rows `A_in·Z`.
    a_in_z: DMatrix<f64>,
}

impl QpSolver {
    pub fn new(problem: &QpProblem) -> Result<Self, QpError> {
        let d = problem.dim();
        let m_eq = problem.num_eq();

        // Null space of A_eq from the eigenvectors of A_eqᵀA_eq; for an
        // empty or all-zero block this degenerates to the identity.
        let (z, eq_gram_vecs, eq_gram_vals) = if m_eq == 0 {
            (
                DMatrix::identity(d, d),
                DMatrix::zeros(0, 0),
                DVector::zeros(0),
            )
        } else {
            let normal = problem.a_eq.transpose() * &problem.a_eq;
            let eig = normal.symmetric_eigen();
            let lam_max = eig.eigenvalues.amax().max(0.0);
            let tol = lam_max * 1e-12;
            let mut null_cols: Vec<usize> = (0..d)
                .filter(|&i| eig.eigenvalues[i] <= tol)
                .collect();
            null_cols.sort_by(|&a, &b| {
                eig.eigenvalues[a]
                    .partial_cmp(&eig.eigenvalues[b])
                    .unwrap()
                    .then(a.cmp(&b))
            });
            let z = DMatrix::from_fn(d, null_cols.len(), |i, k| eig.eigenvectors[(i, null_cols[k])]);

            let gram = &problem.a_eq * problem.a_eq.transpose();
            let gram_eig = gram.symmetric_eigen();
            (z, gram_eig.eigenvectors, gram_eig.eigenvalues)
        };

        let hz = z.transpose() * &problem.h * &z;
        let a_in_z = &problem.a_in * &z;
        Ok(Self {
            dim: d,
            num_eq: m_eq,
            num_in: problem.num_in(),
            z,
            eq_gram_vecs,
            eq_gram_vals,
            hz,
            a_in_z,
        })
    }

    /// Apply the pseudo-inverse of `A_eq·A_eqᵀ`.
    fn gram_pinv(&self, rhs: &DVector<f64>) -> DVector<f64> {
        if self.num_eq == 0 {
            return DVector::zeros(0);
        }
        let lam_max = self.eq_gram_vals.amax().max(0.0);
        let tol = lam_max * 1e-12;
        let mut out = DVector::zeros(self.num_eq);
        for i in 0..self.num_eq {
            let lam = self.eq_gram_vals[i];
            if lam > tol && lam > 0.0 {
                let v = self.eq_gram_vecs.column(i);
                out += v.into_owned() * (v.dot(rhs) / lam);
            }
        }
        out
    }

    /// Minimum-norm particular solution of `A_eq·χ = b_eq`.
    fn particular(&self, problem: &QpProblem) -> DVector<f64> {
        if self.num_eq == 0 {
            return DVector::zeros(self.dim);
        }
        problem.a_eq.transpose() * self.gram_pinv(&problem.b_eq)
    }

    /// Solve with the cached reduction. The problem must have the same
    /// `H`, `A_eq`, and `A_in` the solver was built from; only `f`,
    /// `b_eq`, and `b_in` may differ.
    pub fn solve(
        &self,
        problem: &QpProblem,
        warm: Option<&WarmStart>,
    ) -> Result<QpSolution, QpError> {
        if problem.dim() != self.dim
            || problem.num_eq() != self.num_eq
            || problem.num_in() != self.num_in
        {
            return Err(QpError::Dimension(
                "problem shape differs from the solver cache".into(),
            ));
        }
        let d = self.dim;
        let k = self.z.ncols();
        let mut stats = SolveStats::default();

        // Equality consistency; the residual itself is a certificate when
        // the rows contradict each other.
        let chi_p = self.particular(problem);
        if self.num_eq > 0 {
            let resid = &problem.a_eq * &chi_p - &problem.b_eq;
            let scale = 1.0 + problem.b_eq.amax();
            if resid.amax() > 1e-8 * scale {
                return Err(QpError::Infeasible {
                    certificate: FarkasCertificate {
                        eq: resid,
                        ineq: DVector::zeros(self.num_in),
                    },
                });
            }
        }

        let a_in_chi_p = &problem.a_in * &chi_p;
        let mut zv: DVector<f64> = match warm {
            Some(w) if w.chi0.len() == d => self.z.transpose() * (&w.chi0 - &chi_p),
            _ => DVector::zeros(k),
        };

        let residuals = |zv: &DVector<f64>| -> DVector<f64> {
            &problem.b_in - &a_in_chi_p - &self.a_in_z * zv
        };

        let mut r = residuals(&zv);
        if self.num_in > 0 && r.min() < -FEAS_TOL {
            // Phase 1: find any point of the reduced inequality system.
            stats.phase1 = true;
            let zero_cost = DVector::zeros(k);
            let b_red = &problem.b_in - &a_in_chi_p;
            match solve_lp(
                &zero_cost,
                &self.a_in_z,
                &b_red,
                &DMatrix::zeros(0, k),
                &DVector::zeros(0),
            ) {
                Ok(sol) => {
                    zv = sol.x;
                    r = residuals(&zv);
                }
                Err(LpError::Infeasible { certificate }) => {
                    // Lift the reduced certificate back to the full space:
                    // A_inᵀz ⊥ null(A_eq), so it is matched by equality
                    // multipliers solving A_eqᵀν = -A_inᵀz.
                    let z_in = certificate.ineq;
                    let t = problem.a_in.transpose() * &z_in;
                    let nu = -self.gram_pinv(&(&problem.a_eq * &t));
                    return Err(QpError::Infeasible {
                        certificate: FarkasCertificate { eq: nu, ineq: z_in },
                    });
                }
                Err(e) => return Err(QpError::Phase1(e)),
            }
        }

        // Working set: warm guesses that are genuinely active now.
        let mut working: Vec<usize> = Vec::new();
        if let Some(w) = warm {
            let mut seen = vec![false; self.num_in];
            for &i in &w.active_set {
                if i < self.num_in && !seen[i] {
                    seen[i] = true;
                    let scale = 1.0 + problem.b_in[i].abs();
                    if r[i].abs() <= ACTIVE_TOL * scale {
                        working.push(i);
                    }
                }
            }
        }

        let limit = 50 * d.max(1);
        let mut iterations = 0;
        while iterations < limit {
            iterations += 1;
            let chi = &chi_p + &self.z * &zv;
            let g_full = &problem.h * &chi + &problem.f;
            let g_z = self.z.transpose() * &g_full;

            let w = working.len();
            let mut kkt = DMatrix::<f64>::zeros(k + w, k + w);
            kkt.view_mut((0, 0), (k, k)).copy_from(&self.hz);
            for (c, &row) in working.iter().enumerate() {
                for j in 0..k {
                    kkt[(k + c, j)] = self.a_in_z[(row, j)];
                    kkt[(j, k + c)] = self.a_in_z[(row, j)];
                }
            }
            let mut rhs = DVector::<f64>::zeros(k + w);
            for j in 0..k {
                rhs[j] = -g_z[j];
            }
            stats.factorizations += 1;
            let sol = match kkt.clone().lu().solve(&rhs) {
                Some(s) => s,
                None => {
                    // Degenerate working set: fall back to a least-squares
                    // step so the iteration can continue.
                    let svd = kkt.svd(true, true);
                    svd.solve(&rhs, 1e-12).map_err(|_| QpError::Singular)?
                }
            };
            let p = sol.rows(0, k).into_owned();
            let lambda = sol.rows(k, w).into_owned();

            let step_tol = 1e-11 * (1.0 + zv.amax());
            if p.amax() <= step_tol {
                // Stationary on the working set: optimal unless some
                // multiplier says a constraint should leave.
                let mut worst: Option<(usize, f64)> = None;
                for c in 0..working.len() {
                    if lambda[c] < -DUAL_TOL {
                        match worst {
                            Some((_, l)) if lambda[c] >= l => {}
                            _ => worst = Some((c, lambda[c])),
                        }
                    }
                }
                match worst {
                    None => {
                        return Ok(self.finish(
                            problem, chi, working, lambda, iterations, stats, true,
                        ));
                    }
                    Some((c, _)) => {
                        working.remove(c);
                    }
                }
            } else {
                // Ratio test against the inactive rows; ties go to the
                // lowest row index.
                let ap = &self.a_in_z * &p;
                let mut min_ratio = 1.0f64;
                for i in 0..self.num_in {
                    if working.contains(&i) {
                        continue;
                    }
                    if ap[i] > 1e-11 {
                        let ratio = (r[i].max(0.0)) / ap[i];
                        if ratio < min_ratio {
                            min_ratio = ratio;
                        }
                    }
                }
                let mut blocking = None;
                if min_ratio < 1.0 {
                    for i in 0..self.num_in {
                        if working.contains(&i) {
                            continue;
                        }
                        if ap[i] > 1e-11 {
                            let ratio = (r[i].max(0.0)) / ap[i];
                            if ratio <= min_ratio + 1e-12 * (1.0 + min_ratio) {
                                blocking = Some(i);
                                break;
                            }
                        }
                    }
                }
                zv += &p * min_ratio;
                r = residuals(&zv);
                if let Some(b) = blocking {
                    working.push(b);
                }
            }
        }

        let chi = &chi_p + &self.z * &zv;
        let lambda = DVector::zeros(working.len());
        let best = self.finish(problem, chi, working, lambda, iterations, stats, false);
        Err(QpError::MaxIterations {
            limit,
            best: Box::new(best),
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        problem: &QpProblem,
        chi: DVector<f64>,
        working: Vec<usize>,
        lambda: DVector<f64>,
        iterations: usize,
        mut stats: SolveStats,
        optimal: bool,
    ) -> QpSolution {
        stats.iterations = iterations;
        let mut in_duals = DVector::zeros(self.num_in);
        for (c, &row) in working.iter().enumerate() {
            in_duals[row] = lambda[c].max(0.0);
        }
        // Equality multipliers from full-space stationarity.
        let eq_duals = if self.num_eq > 0 {
            let t = -(&problem.h * &chi + &problem.f + problem.a_in.transpose() * &in_duals);
            self.gram_pinv(&(&problem.a_eq * &t))
        } else {
            DVector::zeros(0)
        };
        let mut active_set = working;
        active_set.sort_unstable();
        let objective = 0.5 * (&problem.h * &chi).dot(&chi) + problem.f.dot(&chi);
        QpSolution {
            chi,
            objective,
            eq_duals,
            in_duals,
            active_set,
            stats,
            optimal,
        }
    }
}

/// One-shot convenience wrapper: build the reduction and solve.
pub fn solve_qp(problem: &QpProblem, warm: Option<&WarmStart>) -> Result<QpSolution, QpError> {
    QpSolver::new(problem)?.solve(problem, warm)
}
