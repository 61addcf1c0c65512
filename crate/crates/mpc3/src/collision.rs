//! Differentiable collision detection for convex polytopes.
//!
//! Two bodies are uniformly inflated about their centers by a factor `s`
//! until they touch; the minimal such factor comes from a small linear
//! program whose constraints state that the witness point belongs to both
//! inflated polytopes. `s > 1` certifies separation, `s < 1` means the
//! bodies interpenetrate. The LP duals give `∂s/∂r_c`, the sensitivity to
//! the chaser's position, which in turn linearizes a keep-out constraint
//! that can be appended to the step QP.

use crate::qpsolver::{solve_lp, LpError, QpError, QpProblem};
use crate::transcription::{ControlSolution, TranscriptionSpec};
use nalgebra::{DMatrix, DVector, Matrix3, RowDVector, Vector3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CollisionError {
    #[error("degenerate polytope: {0}")]
    DegeneratePolytope(String),
    #[error("rotation matrix is not orthonormal")]
    BadRotation,
    #[error("configuration is non-smooth (multiple optimal bases)")]
    NonSmooth,
    #[error("collision constraints need a 3-axis transcription, got {0} axes")]
    NotThreeAxes(usize),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error(transparent)]
    Sampling(#[from] crate::transcription::TranscriptionError),
    #[error(transparent)]
    Domain(#[from] crate::chebyshev::ChebyshevError),
}

/// Convex body as body-frame half-spaces `A·y ≤ b` with a world pose.
/// The body frame origin must lie strictly inside (`b > 0`), which is
/// what gives "inflation about the center" its meaning.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    a_body: DMatrix<f64>,
    b_body: DVector<f64>,
    pub center: Vector3<f64>,
    pub rotation: Matrix3<f64>,
}

impl Polytope {
    pub fn new(
        a_body: DMatrix<f64>,
        b_body: DVector<f64>,
        center: Vector3<f64>,
        rotation: Matrix3<f64>,
    ) -> Result<Self, CollisionError> {
        if a_body.ncols() != 3 || a_body.nrows() == 0 || a_body.nrows() != b_body.len() {
            return Err(CollisionError::DegeneratePolytope(
                "half-space matrix must be h×3 with matching offsets".into(),
            ));
        }
        if b_body.min() <= 0.0 {
            return Err(CollisionError::DegeneratePolytope(
                "origin must be strictly interior (all offsets positive)".into(),
            ));
        }
        for i in 0..a_body.nrows() {
            if a_body.row(i).norm() < 1e-12 {
                return Err(CollisionError::DegeneratePolytope(format!(
                    "half-space row {i} has zero normal"
                )));
            }
        }
        let ortho = rotation.transpose() * rotation - Matrix3::identity();
        if ortho.abs().max() > 1e-10 {
            return Err(CollisionError::BadRotation);
        }
        Ok(Self {
            a_body,
            b_body,
            center,
            rotation,
        })
    }

    /// Axis-aligned box in the body frame with the given half-widths.
    pub fn cuboid(
        half_widths: Vector3<f64>,
        center: Vector3<f64>,
        rotation: Matrix3<f64>,
    ) -> Result<Self, CollisionError> {
        let mut a = DMatrix::<f64>::zeros(6, 3);
        let mut b = DVector::<f64>::zeros(6);
        for axis in 0..3 {
            a[(2 * axis, axis)] = 1.0;
            a[(2 * axis + 1, axis)] = -1.0;
            b[2 * axis] = half_widths[axis];
            b[2 * axis + 1] = half_widths[axis];
        }
        Self::new(a, b, center, rotation)
    }

    /// Convex hull of body-frame vertices, converted to half-space form.
    /// The origin must lie strictly inside the hull.
    pub fn from_vertices(
        vertices: &[Vector3<f64>],
        center: Vector3<f64>,
        rotation: Matrix3<f64>,
    ) -> Result<Self, CollisionError> {
        let (a, b) = hull_halfspaces(vertices)?;
        Self::new(a, b, center, rotation)
    }

    pub fn num_faces(&self) -> usize {
        self.a_body.nrows()
    }

    pub fn a_body(&self) -> &DMatrix<f64> {
        &self.a_body
    }

    pub fn b_body(&self) -> &DVector<f64> {
        &self.b_body
    }

    /// World-frame face normals: rows of `A·Rᵀ`.
    pub fn world_normals(&self) -> DMatrix<f64> {
        let mut out = DMatrix::<f64>::zeros(self.num_faces(), 3);
        for i in 0..self.num_faces() {
            let n_body = Vector3::new(self.a_body[(i, 0)], self.a_body[(i, 1)], self.a_body[(i, 2)]);
            let n_world = self.rotation * n_body;
            for j in 0..3 {
                out[(i, j)] = n_world[j];
            }
        }
        out
    }

    /// Membership residual of a world point in the body inflated by `s`:
    /// nonpositive inside.
    pub fn membership_residual(&self, point: Vector3<f64>, s: f64) -> f64 {
        let local = self.rotation.transpose() * (point - self.center);
        let mut worst = f64::NEG_INFINITY;
        for i in 0..self.num_faces() {
            let n = Vector3::new(self.a_body[(i, 0)], self.a_body[(i, 1)], self.a_body[(i, 2)]);
            worst = worst.max(n.dot(&local) - s * self.b_body[i]);
        }
        worst
    }

    pub fn at_center(&self, center: Vector3<f64>) -> Self {
        Self {
            center,
            ..self.clone()
        }
    }
}

/// Enumerate supporting planes of a small vertex set — every triple whose
/// plane has all points on one side is a face. Quartic in the vertex
/// count, which is fine for the hull sizes used here.
fn hull_halfspaces(vertices: &[Vector3<f64>]) -> Result<(DMatrix<f64>, DVector<f64>), CollisionError> {
    if vertices.len() < 4 {
        return Err(CollisionError::DegeneratePolytope(
            "need at least four vertices".into(),
        ));
    }
    let centroid: Vector3<f64> = vertices.iter().sum::<Vector3<f64>>() / vertices.len() as f64;
    let scale = vertices
        .iter()
        .map(|v| (v - centroid).norm())
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let tol = 1e-9 * scale;

    let mut faces: Vec<(Vector3<f64>, f64)> = Vec::new();
    let n = vertices.len();
    for i in 0..n {
        for j in (i + 1)..n {
            for k in (j + 1)..n {
                let normal = (vertices[j] - vertices[i]).cross(&(vertices[k] - vertices[i]));
                if normal.norm() < tol * scale {
                    continue;
                }
                let mut normal = normal.normalize();
                let mut offset = normal.dot(&vertices[i]);
                if normal.dot(&centroid) > offset {
                    normal = -normal;
                    offset = -offset;
                }
                if vertices.iter().all(|v| normal.dot(v) <= offset + tol) {
                    let key_exists = faces.iter().any(|(fn_, fo)| {
                        (fn_ - normal).norm() < 1e-7 && (fo - offset).abs() < 1e-7 * scale.max(1.0)
                    });
                    if !key_exists {
                        faces.push((normal, offset));
                    }
                }
            }
        }
    }
    if faces.len() < 4 {
        return Err(CollisionError::DegeneratePolytope(
            "vertex set does not span a solid".into(),
        ));
    }
    let a = DMatrix::from_fn(faces.len(), 3, |r, c| faces[r].0[c]);
    let b = DVector::from_fn(faces.len(), |r, _| faces[r].1);
    Ok((a, b))
}

/// Minimal scaling factor, witness point, and position gradient.
#[derive(Debug, Clone)]
pub struct CollisionResult {
    /// Minimal mutual inflation; > 1 iff the bodies are separated.
    pub s: f64,
    /// Intersection point of the two inflated bodies.
    pub witness: Vector3<f64>,
    /// `∂s/∂r_c` with respect to the chaser center, from the LP duals.
    pub grad_center: Vector3<f64>,
    /// True when the optimal basis is not unique, which makes the
    /// gradient a subgradient choice rather than a derivative.
    pub degenerate: bool,
}

/// Solve the scaling-factor LP for a chaser/target pair.
///
/// Variables are the witness point and `s`; each body contributes
/// `A·Rᵀ(x − r) ≤ s·b` rows. The gradient accumulates
/// `-λ_i·(A_c R_cᵀ)_i` over the chaser rows.
pub fn scaling_factor(
    chaser: &Polytope,
    target: &Polytope,
) -> Result<CollisionResult, CollisionError> {
    let hc = chaser.num_faces();
    let ht = target.num_faces();
    let rows = hc + ht + 1;
    let mut a = DMatrix::<f64>::zeros(rows, 4);
    let mut b = DVector::<f64>::zeros(rows);

    let cn = chaser.world_normals();
    let tn = target.world_normals();
    for i in 0..hc {
        for j in 0..3 {
            a[(i, j)] = cn[(i, j)];
        }
        a[(i, 3)] = -chaser.b_body()[i];
        b[i] = cn[(i, 0)] * chaser.center[0]
            + cn[(i, 1)] * chaser.center[1]
            + cn[(i, 2)] * chaser.center[2];
    }
    for i in 0..ht {
        for j in 0..3 {
            a[(hc + i, j)] = tn[(i, j)];
        }
        a[(hc + i, 3)] = -target.b_body()[i];
        b[hc + i] = tn[(i, 0)] * target.center[0]
            + tn[(i, 1)] * target.center[1]
            + tn[(i, 2)] * target.center[2];
    }
    // s ≥ 0 backstop.
    a[(rows - 1, 3)] = -1.0;

    let c = DVector::from_column_slice(&[0.0, 0.0, 0.0, 1.0]);
    let sol = solve_lp(&c, &a, &b, &DMatrix::zeros(0, 4), &DVector::zeros(0))?;

    let s = sol.x[3];
    let witness = Vector3::new(sol.x[0], sol.x[1], sol.x[2]);
    let mut grad = Vector3::zeros();
    for i in 0..hc {
        let lambda = sol.duals_in[i];
        if lambda > 0.0 {
            grad -= lambda * Vector3::new(cn[(i, 0)], cn[(i, 1)], cn[(i, 2)]);
        }
    }

    // Dual multiplicity: the gradients of the active rows must be
    // linearly independent for the duals (and hence ∂s/∂r_c) to be unique.
    let lhs = &a * &sol.x;
    let active: Vec<usize> = (0..rows)
        .filter(|&i| (lhs[i] - b[i]).abs() <= 1e-9 * (1.0 + b[i].abs()))
        .collect();
    let degenerate = if active.len() > 4 {
        true
    } else {
        let act = DMatrix::from_fn(active.len(), 4, |r, c| a[(active[r], c)]);
        act.svd(false, false).rank(1e-9) < active.len()
    };

    Ok(CollisionResult {
        s,
        witness,
        grad_center: grad,
        degenerate,
    })
}

/// Compare the dual gradient against central finite differences of the
/// scaling factor; returns the worst per-axis deviation.
///
/// Errors with [`CollisionError::NonSmooth`] when the configuration has a
/// non-unique optimal basis, where the derivative does not exist.
pub fn gradient_check(
    chaser: &Polytope,
    target: &Polytope,
    step: f64,
) -> Result<f64, CollisionError> {
    let base = scaling_factor(chaser, target)?;
    if base.degenerate {
        return Err(CollisionError::NonSmooth);
    }
    let mut worst: f64 = 0.0;
    for axis in 0..3 {
        let mut offset = Vector3::zeros();
        offset[axis] = step;
        let plus = scaling_factor(&chaser.at_center(chaser.center + offset), target)?;
        let minus = scaling_factor(&chaser.at_center(chaser.center - offset), target)?;
        if plus.degenerate || minus.degenerate {
            return Err(CollisionError::NonSmooth);
        }
        let fd = (plus.s - minus.s) / (2.0 * step);
        worst = worst.max((fd - base.grad_center[axis]).abs());
    }
    Ok(worst)
}

/// Outcome of checking a planned trajectory against the keep-out body.
#[derive(Debug, Clone)]
pub struct AvoidanceCheck {
    /// Scaling factor at each collocation node of the plan.
    pub node_s: Vec<f64>,
    pub min_s: f64,
    /// Augmented problem when at least one node fell below the threshold;
    /// `None` means the plan already clears the margin.
    pub problem: Option<QpProblem>,
}

/// Check the planned positions at every collocation node and, where the
/// scaling factor falls below `s_thr`, append the linearized half-space
/// `∂s/∂r_c · r(τᵢ) ≥ s_thr - s⁰ + ∂s/∂r_c · r⁰(τᵢ)` to the QP, written
/// over the coefficients through the γ operator. `softness` couples the
/// new rows to the shared slack like every other soft constraint.
pub fn inject_avoidance(
    problem: &QpProblem,
    spec: &TranscriptionSpec,
    solution: &ControlSolution,
    chaser: &Polytope,
    target: &Polytope,
    s_thr: f64,
    softness: f64,
) -> Result<AvoidanceCheck, CollisionError> {
    if spec.num_axes() != 3 {
        return Err(CollisionError::NotThreeAxes(spec.num_axes()));
    }
    let basis = spec.basis();
    let m = basis.num_coeffs();
    let d = problem.dim();

    let mut node_s = Vec::with_capacity(m);
    let mut new_rows: Vec<(RowDVector<f64>, f64)> = Vec::new();
    for i in 0..m {
        let tau = basis.nodes()[i];
        let g_row = basis.gamma_row(tau)?;
        let mut pos = Vector3::zeros();
        let mut affine = Vector3::zeros();
        for a in 0..3 {
            let v0 = spec.vel_to_computational(solution.v0[a]);
            affine[a] = v0 * (tau + 1.0) + solution.x0[a];
            pos[a] = (&g_row * solution.alpha.column(a))[0] + affine[a];
        }
        let mut res = scaling_factor(&chaser.at_center(pos), target)?;
        if res.degenerate {
            // Nudge the node an ulp-scale step along the plan and retry;
            // keeps the subgradient choice off the kink.
            let tau_eps = (tau + 1e-9).clamp(-1.0, 1.0);
            let g_eps = basis.gamma_row(tau_eps)?;
            let mut pos_eps = Vector3::zeros();
            for a in 0..3 {
                let v0 = spec.vel_to_computational(solution.v0[a]);
                pos_eps[a] = (&g_eps * solution.alpha.column(a))[0] + v0 * (tau_eps + 1.0)
                    + solution.x0[a];
            }
            res = scaling_factor(&chaser.at_center(pos_eps), target)?;
        }
        node_s.push(res.s);

        if res.s < s_thr {
            let g = res.grad_center;
            let rhs_required = s_thr - res.s + g.dot(&pos);
            let mut row = RowDVector::<f64>::zeros(d);
            for a in 0..3 {
                for j in 0..m {
                    row[a * m + j] = -g[a] * g_row[j];
                }
            }
            row[d - 1] = -softness;
            let rhs = g.dot(&affine) - rhs_required;
            new_rows.push((row, rhs));
        }
    }

    let min_s = node_s.iter().copied().fold(f64::INFINITY, f64::min);
    if new_rows.is_empty() {
        return Ok(AvoidanceCheck {
            node_s,
            min_s,
            problem: None,
        });
    }

    let extra = new_rows.len();
    let mut a_in = DMatrix::<f64>::zeros(problem.num_in() + extra, d);
    a_in.view_mut((0, 0), (problem.num_in(), d))
        .copy_from(&problem.a_in);
    let mut b_in = DVector::<f64>::zeros(problem.num_in() + extra);
    b_in.rows_mut(0, problem.num_in()).copy_from(&problem.b_in);
    for (k, (row, rhs)) in new_rows.iter().enumerate() {
        a_in.view_mut((problem.num_in() + k, 0), (1, d)).copy_from(row);
        b_in[problem.num_in() + k] = *rhs;
    }
    let augmented = QpProblem::new(
        problem.h.clone(),
        problem.f.clone(),
        problem.a_eq.clone(),
        problem.b_eq.clone(),
        a_in,
        b_in,
    )?;
    Ok(AvoidanceCheck {
        node_s,
        min_s,
        problem: Some(augmented),
    })
}
