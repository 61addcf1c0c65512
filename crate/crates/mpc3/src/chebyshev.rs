//! Chebyshev polynomial basis, Chebyshev-Gauss nodes, Fejér quadrature
//! weights, and the integral collocation operators.
//!
//! The basis represents a second derivative as a Chebyshev series
//! `x''(τ) = T(τ)·α` on the computational domain `τ ∈ [-1, 1]`. Lower
//! derivatives are obtained by analytic integration rather than
//! differentiation, so initial conditions enter as additive terms:
//!
//! ```text
//! x'(τ) = β(τ)·α + x'(-1)
//! x(τ)  = γ(τ)·α + x'(-1)(τ + 1) + x(-1)
//! ```
//!
//! `β` and `γ` are row functionals built from the Chebyshev antiderivative
//! recurrence with the constant of integration fixed so both vanish at
//! `τ = -1`. For a fixed order all node evaluations are precomputed into
//! constant matrices; downstream consumers never rebuild them.

use nalgebra::{DMatrix, DVector, RowDVector};
use std::f64::consts::PI;
use thiserror::Error;

/// Slack accepted on `|τ| ≤ 1` before an evaluation point is rejected.
pub const DOMAIN_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ChebyshevError {
    #[error("evaluation point {0} lies outside [-1, 1]")]
    OutOfDomain(f64),
    #[error("time {t} outside horizon [{t0}, {tf}]")]
    OutsideHorizon { t: f64, t0: f64, tf: f64 },
    #[error("horizon must have tf > t0, got [{t0}, {tf}]")]
    EmptyHorizon { t0: f64, tf: f64 },
    #[error("fixed-point iteration did not converge in {iterations} iterations (last residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
}

/// Evaluate the Chebyshev polynomial `T_j` at `tau`.
///
/// Uses the three-term recurrence `T_{j+1} = 2τ T_j - T_{j-1}` instead of
/// `cos(j·arccos τ)`; the recurrence keeps full precision at the interval
/// endpoints where `arccos` loses digits.
pub fn eval_chebyshev(j: usize, tau: f64) -> Result<f64, ChebyshevError> {
    if tau.abs() > 1.0 + DOMAIN_TOL || !tau.is_finite() {
        return Err(ChebyshevError::OutOfDomain(tau));
    }
    let tau = tau.clamp(-1.0, 1.0);
    let mut prev = 1.0;
    if j == 0 {
        return Ok(prev);
    }
    let mut cur = tau;
    for _ in 1..j {
        (prev, cur) = (cur, 2.0 * tau * cur - prev);
    }
    Ok(cur)
}

/// Chebyshev-Gauss nodes for order `n`: the `n+1` roots of `T_{n+1}`,
/// `τ_{k-1} = cos((k - ½)π / (n+1))` for `k = 1..n+1`, strictly decreasing.
pub fn cg_nodes(n: usize) -> DVector<f64> {
    assert!(n >= 1, "order must be at least 1");
    let m = n + 1;
    DVector::from_fn(m, |k, _| ((k as f64 + 0.5) * PI / m as f64).cos())
}

/// Fejér-first-rule quadrature weights on the Chebyshev-Gauss nodes.
///
/// The interpolatory rule for unweighted integrands on these nodes; all
/// weights are positive and polynomials of degree ≤ n integrate exactly
/// over [-1, 1].
pub fn quadrature_weights(n: usize) -> DVector<f64> {
    assert!(n >= 1, "order must be at least 1");
    let m = n + 1;
    DVector::from_fn(m, |k, _| {
        let theta = (k as f64 + 0.5) * PI / m as f64;
        let mut sum = 0.0;
        for j in 1..=(m / 2) {
            let j = j as f64;
            sum += (2.0 * j * theta).cos() / (4.0 * j * j - 1.0);
        }
        2.0 / m as f64 * (1.0 - 2.0 * sum)
    })
}

/// Chebyshev coefficients of the antiderivative of `Σ c_j T_j`, with the
/// integration constant fixed so the result vanishes at `τ = -1`.
///
/// Uses `∫T_0 = T_1`, `∫T_1 = T_2/4`, and
/// `∫T_j = T_{j+1}/(2(j+1)) - T_{j-1}/(2(j-1))` for `j ≥ 2`.
fn antiderivative(c: &[f64]) -> Vec<f64> {
    let n = c.len();
    let mut a = vec![0.0; n + 1];
    if n > 0 {
        a[1] += c[0];
    }
    if n > 1 {
        a[2] += c[1] / 4.0;
    }
    for (j, &cj) in c.iter().enumerate().skip(2) {
        a[j + 1] += cj / (2.0 * (j as f64 + 1.0));
        a[j - 1] -= cj / (2.0 * (j as f64 - 1.0));
    }
    let at_minus_one: f64 = a
        .iter()
        .enumerate()
        .skip(1)
        .map(|(j, aj)| if j % 2 == 0 { *aj } else { -*aj })
        .sum();
    a[0] = -at_minus_one;
    a
}

/// Clenshaw evaluation of `Σ c_j T_j(tau)`.
fn clenshaw(c: &[f64], tau: f64) -> f64 {
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for &cj in c.iter().skip(1).rev() {
        (b1, b2) = (2.0 * tau * b1 - b2 + cj, b1);
    }
    tau * b1 - b2 + c[0]
}

/// First and second integration operators evaluated at the CG nodes,
/// plus the (identically zero) rows at `τ = -1`.
///
/// Row `k` of `beta_mat` maps coefficients `α` to `∫_{-1}^{τ_k} T(σ)α dσ`;
/// `gamma_mat` is the corresponding double integral from -1.
pub fn integration_operators(
    n: usize,
) -> (DMatrix<f64>, DMatrix<f64>, RowDVector<f64>, RowDVector<f64>) {
    let basis = ChebyshevBasis::new(n);
    (
        basis.beta_mat.clone(),
        basis.gamma_mat.clone(),
        basis.beta_start.clone(),
        basis.gamma_start.clone(),
    )
}

/// Precomputed collocation data for a fixed approximation order.
///
/// Immutable after construction; safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebyshevBasis {
    order: usize,
    nodes: DVector<f64>,
    weights: DVector<f64>,
    t_mat: DMatrix<f64>,
    beta_mat: DMatrix<f64>,
    gamma_mat: DMatrix<f64>,
    t_start: RowDVector<f64>,
    beta_start: RowDVector<f64>,
    gamma_start: RowDVector<f64>,
    /// Column j holds the Chebyshev coefficients of ∫_{-1}^{τ} T_j.
    beta_coeffs: Vec<Vec<f64>>,
    /// Column j holds the coefficients of the double integral of T_j.
    gamma_coeffs: Vec<Vec<f64>>,
}

impl ChebyshevBasis {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "order must be at least 1");
        let m = order + 1;
        let nodes = cg_nodes(order);
        let weights = quadrature_weights(order);

        let beta_coeffs: Vec<Vec<f64>> = (0..m)
            .map(|j| {
                let mut e = vec![0.0; m];
                e[j] = 1.0;
                antiderivative(&e)
            })
            .collect();
        let gamma_coeffs: Vec<Vec<f64>> = beta_coeffs.iter().map(|c| antiderivative(c)).collect();

        let t_mat = DMatrix::from_fn(m, m, |k, j| eval_chebyshev(j, nodes[k]).unwrap());
        let beta_mat = DMatrix::from_fn(m, m, |k, j| clenshaw(&beta_coeffs[j], nodes[k]));
        let gamma_mat = DMatrix::from_fn(m, m, |k, j| clenshaw(&gamma_coeffs[j], nodes[k]));

        // Rows at τ = -1: T_j(-1) = (-1)^j exactly, and both integrals
        // vanish by the choice of integration constants.
        let t_start = RowDVector::from_fn(m, |_, j| if j % 2 == 0 { 1.0 } else { -1.0 });
        let beta_start = RowDVector::zeros(m);
        let gamma_start = RowDVector::zeros(m);

        Self {
            order,
            nodes,
            weights,
            t_mat,
            beta_mat,
            gamma_mat,
            t_start,
            beta_start,
            gamma_start,
            beta_coeffs,
            gamma_coeffs,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of coefficients, `n + 1`.
    pub fn num_coeffs(&self) -> usize {
        self.order + 1
    }

    pub fn nodes(&self) -> &DVector<f64> {
        &self.nodes
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn t_mat(&self) -> &DMatrix<f64> {
        &self.t_mat
    }

    pub fn beta_mat(&self) -> &DMatrix<f64> {
        &self.beta_mat
    }

    pub fn gamma_mat(&self) -> &DMatrix<f64> {
        &self.gamma_mat
    }

    pub fn t_start(&self) -> &RowDVector<f64> {
        &self.t_start
    }

    pub fn beta_start(&self) -> &RowDVector<f64> {
        &self.beta_start
    }

    pub fn gamma_start(&self) -> &RowDVector<f64> {
        &self.gamma_start
    }

    /// Row vector `[T_0(τ) … T_n(τ)]`.
    pub fn t_row(&self, tau: f64) -> Result<RowDVector<f64>, ChebyshevError> {
        if tau == -1.0 {
            return Ok(self.t_start.clone());
        }
        let m = self.num_coeffs();
        let mut row = RowDVector::zeros(m);
        for j in 0..m {
            row[j] = eval_chebyshev(j, tau)?;
        }
        Ok(row)
    }

    /// First-integration row functional at an arbitrary `τ`.
    pub fn beta_row(&self, tau: f64) -> Result<RowDVector<f64>, ChebyshevError> {
        if tau.abs() > 1.0 + DOMAIN_TOL || !tau.is_finite() {
            return Err(ChebyshevError::OutOfDomain(tau));
        }
        if tau == -1.0 {
            return Ok(self.beta_start.clone());
        }
        let tau = tau.clamp(-1.0, 1.0);
        Ok(RowDVector::from_fn(self.num_coeffs(), |_, j| {
            clenshaw(&self.beta_coeffs[j], tau)
        }))
    }

    /// Second-integration row functional at an arbitrary `τ`.
    pub fn gamma_row(&self, tau: f64) -> Result<RowDVector<f64>, ChebyshevError> {
        if tau.abs() > 1.0 + DOMAIN_TOL || !tau.is_finite() {
            return Err(ChebyshevError::OutOfDomain(tau));
        }
        if tau == -1.0 {
            return Ok(self.gamma_start.clone());
        }
        let tau = tau.clamp(-1.0, 1.0);
        Ok(RowDVector::from_fn(self.num_coeffs(), |_, j| {
            clenshaw(&self.gamma_coeffs[j], tau)
        }))
    }

    /// Write nodes, weights, and the three collocation matrices as CSV
    /// tables into `out`, one file per table.
    pub fn dump_csv(&self, out: &std::path::Path) -> std::io::Result<()> {
        use std::io::Write;
        std::fs::create_dir_all(out)?;
        let write_vec = |name: &str, v: &DVector<f64>| -> std::io::Result<()> {
            let mut f = std::fs::File::create(out.join(name))?;
            writeln!(f, "# schema=1")?;
            for x in v.iter() {
                writeln!(f, "{x:.17e}")?;
            }
            Ok(())
        };
        let write_mat = |name: &str, m: &DMatrix<f64>| -> std::io::Result<()> {
            let mut f = std::fs::File::create(out.join(name))?;
            writeln!(f, "# schema=1")?;
            for i in 0..m.nrows() {
                let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.17e}", m[(i, j)])).collect();
                writeln!(f, "{}", row.join(","))?;
            }
            Ok(())
        };
        write_vec("nodes.csv", &self.nodes)?;
        write_vec("weights.csv", &self.weights)?;
        write_mat("t.csv", &self.t_mat)?;
        write_mat("beta.csv", &self.beta_mat)?;
        write_mat("gamma.csv", &self.gamma_mat)
    }
}

/// Affine map between a time horizon `[t0, tf]` and the computational
/// domain `[-1, 1]`: `τ = (2t - (tf + t0)) / Δt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeMap {
    t0: f64,
    tf: f64,
}

impl TimeMap {
    pub fn new(t0: f64, tf: f64) -> Result<Self, ChebyshevError> {
        if !(tf - t0).is_finite() || tf <= t0 {
            return Err(ChebyshevError::EmptyHorizon { t0, tf });
        }
        Ok(Self { t0, tf })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn tf(&self) -> f64 {
        self.tf
    }

    pub fn dt(&self) -> f64 {
        self.tf - self.t0
    }

    pub fn to_tau(&self, t: f64) -> Result<f64, ChebyshevError> {
        let tau = (2.0 * t - (self.tf + self.t0)) / self.dt();
        if tau.abs() > 1.0 + DOMAIN_TOL {
            return Err(ChebyshevError::OutsideHorizon {
                t,
                t0: self.t0,
                tf: self.tf,
            });
        }
        Ok(tau.clamp(-1.0, 1.0))
    }

    pub fn to_time(&self, tau: f64) -> f64 {
        0.5 * (tau * self.dt() + self.tf + self.t0)
    }
}

const PICARD_TOL: f64 = 1e-12;
const PICARD_MAX_ITER: usize = 100;

/// Propagate the second-order IVP `ẍ = g(t, x, ẋ)` over `map` by
/// fixed-point iteration on the series coefficients of `ẍ`.
///
/// Each sweep evaluates the dynamics at the collocation nodes and
/// re-solves `𝒯 α = x''(nodes)`; iteration stops when the coefficient
/// update falls below 1e-12 (absolute) or errors after 100 sweeps.
/// Returns the terminal state and velocity in physical units.
pub fn icc_propagate<F>(
    dynamics: F,
    x0: &DVector<f64>,
    v0: &DVector<f64>,
    map: TimeMap,
    order: usize,
) -> Result<(DVector<f64>, DVector<f64>), ChebyshevError>
where
    F: Fn(f64, &DVector<f64>, &DVector<f64>) -> DVector<f64>,
{
    assert!(order >= 3, "propagation needs order >= 3");
    assert_eq!(x0.len(), v0.len());
    let basis = ChebyshevBasis::new(order);
    let m = basis.num_coeffs();
    let q = x0.len();
    let dt = map.dt();
    let half_dt = 0.5 * dt;

    let t_lu = basis.t_mat.clone().lu();
    // Velocity in computational units: x'(-1) = (Δt/2)·ẋ(t0).
    let v0_comp = v0 * half_dt;

    let mut alpha = DMatrix::<f64>::zeros(m, q);
    let mut residual = f64::INFINITY;
    for _ in 0..PICARD_MAX_ITER {
        let x_nodes = basis.gamma_mat() * &alpha;
        let vp_nodes = basis.beta_mat() * &alpha;
        let mut accel = DMatrix::<f64>::zeros(m, q);
        for k in 0..m {
            let tau = basis.nodes[k];
            let t = map.to_time(tau);
            let x = DVector::from_fn(q, |a, _| x_nodes[(k, a)] + v0_comp[a] * (tau + 1.0) + x0[a]);
            let v = DVector::from_fn(q, |a, _| (vp_nodes[(k, a)] + v0_comp[a]) / half_dt);
            let acc = dynamics(t, &x, &v);
            for a in 0..q {
                accel[(k, a)] = acc[a] * half_dt * half_dt;
            }
        }
        let alpha_new = t_lu.solve(&accel).expect("collocation matrix is nonsingular");
        residual = (&alpha_new - &alpha).abs().max();
        alpha = alpha_new;
        if residual < PICARD_TOL {
            let gamma_end = basis.gamma_row(1.0)?;
            let beta_end = basis.beta_row(1.0)?;
            let xf = DVector::from_fn(q, |a, _| {
                (&gamma_end * alpha.column(a))[0] + v0_comp[a] * 2.0 + x0[a]
            });
            let vf = DVector::from_fn(q, |a, _| {
                ((&beta_end * alpha.column(a))[0] + v0_comp[a]) / half_dt
            });
            return Ok((xf, vf));
        }
    }
    Err(ChebyshevError::NoConvergence {
        iterations: PICARD_MAX_ITER,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Adaptive Simpson integration, used as the independent oracle for
    /// the integration operators.
    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
            (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
        }
        fn recurse(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: usize) -> f64 {
            let m = 0.5 * (a + b);
            let left = simpson(f, a, m);
            let right = simpson(f, m, b);
            if depth == 0 || (left + right - whole).abs() < 15.0 * tol {
                left + right + (left + right - whole) / 15.0
            } else {
                recurse(f, a, m, left, 0.5 * tol, depth - 1)
                    + recurse(f, m, b, right, 0.5 * tol, depth - 1)
            }
        }
        recurse(f, a, b, simpson(f, a, b), tol, 40)
    }

    fn series_value(alpha: &[f64], tau: f64) -> f64 {
        alpha
            .iter()
            .enumerate()
            .map(|(j, a)| a * (j as f64 * tau.acos()).cos())
            .sum()
    }

    #[test]
    fn eval_known_values() {
        assert_eq!(eval_chebyshev(0, 0.37).unwrap(), 1.0);
        assert_abs_diff_eq!(eval_chebyshev(2, 0.5).unwrap(), -0.5, epsilon = 1e-15);
        assert_eq!(eval_chebyshev(3, -1.0).unwrap(), -1.0);
    }

    #[test]
    fn eval_rejects_out_of_domain() {
        assert!(eval_chebyshev(2, 1.0 + 1e-6).is_err());
        assert!(eval_chebyshev(2, f64::NAN).is_err());
        // Within tolerance of the endpoint is accepted.
        assert!(eval_chebyshev(2, 1.0 + 1e-14).is_ok());
    }

    #[test]
    fn recurrence_matches_arccos_form() {
        for j in 0..=30 {
            for k in 0..=200 {
                let tau = -1.0 + 2.0 * k as f64 / 200.0;
                let direct = (j as f64 * tau.acos()).cos();
                assert_abs_diff_eq!(eval_chebyshev(j, tau).unwrap(), direct, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn nodes_closed_forms() {
        let n1 = cg_nodes(1);
        assert_abs_diff_eq!(n1[0], (PI / 4.0).cos(), epsilon = 1e-15);
        assert_abs_diff_eq!(n1[1], (3.0 * PI / 4.0).cos(), epsilon = 1e-15);

        let n2 = cg_nodes(2);
        assert_abs_diff_eq!(n2[0], 3f64.sqrt() / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(n2[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(n2[2], -(3f64.sqrt()) / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn nodes_are_roots_and_decreasing() {
        for n in [1, 2, 3, 5, 8, 13, 20] {
            let nodes = cg_nodes(n);
            for k in 0..nodes.len() {
                assert!(nodes[k].abs() < 1.0);
                assert!(eval_chebyshev(n + 1, nodes[k]).unwrap().abs() < 1e-12);
                if k > 0 {
                    assert!(nodes[k] < nodes[k - 1]);
                }
            }
        }
    }

    #[test]
    fn weights_sum_and_second_moment() {
        for n in 1..=20 {
            let w = quadrature_weights(n);
            assert_abs_diff_eq!(w.sum(), 2.0, epsilon = 1e-13);
            assert!(w.iter().all(|&wi| wi > 0.0));
            if n >= 2 {
                let nodes = cg_nodes(n);
                let m2: f64 = nodes.iter().zip(w.iter()).map(|(t, w)| w * t * t).sum();
                assert_abs_diff_eq!(m2, 2.0 / 3.0, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn quadrature_exact_on_monomials() {
        // Symbolic moment oracle: ∫τ^k dτ = (1 + (-1)^k)/(k + 1).
        let n = 6;
        let nodes = cg_nodes(n);
        let w = quadrature_weights(n);
        for k in 0..=n {
            let approx: f64 = nodes.iter().zip(w.iter()).map(|(t, w)| w * t.powi(k as i32)).sum();
            let exact = if k % 2 == 0 { 2.0 / (k as f64 + 1.0) } else { 0.0 };
            assert_abs_diff_eq!(approx, exact, epsilon = 1e-13);
        }
    }

    #[test]
    fn operators_integrate_constant_acceleration() {
        // α = e_0 means x'' ≡ 1: x' = τ + 1 and x = (τ+1)²/2 with zero
        // initial conditions.
        let n = 5;
        let basis = ChebyshevBasis::new(n);
        let mut alpha = DVector::zeros(n + 1);
        alpha[0] = 1.0;
        let vp = basis.beta_mat() * &alpha;
        let x = basis.gamma_mat() * &alpha;
        for k in 0..=n {
            let tau = basis.nodes()[k];
            assert_abs_diff_eq!(vp[k], tau + 1.0, epsilon = 1e-13);
            assert_abs_diff_eq!(x[k], (tau + 1.0) * (tau + 1.0) / 2.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn operators_match_brute_force_integration() {
        // Independent oracle: adaptively integrate the explicit cosine
        // series and its antiderivative.
        let n = 8;
        let basis = ChebyshevBasis::new(n);
        let alpha: Vec<f64> = (0..=n).map(|j| ((j * 7 + 3) % 11) as f64 / 11.0 - 0.4).collect();
        let alpha_v = DVector::from_column_slice(&alpha);
        for &tau in basis.nodes().iter().chain([0.3, -0.99, 1.0].iter()) {
            let beta_val = (&basis.beta_row(tau).unwrap() * &alpha_v)[0];
            let oracle_beta =
                adaptive_simpson(&|s| series_value(&alpha, s), -1.0, tau, 1e-13);
            assert_abs_diff_eq!(beta_val, oracle_beta, epsilon = 1e-10);

            let gamma_val = (&basis.gamma_row(tau).unwrap() * &alpha_v)[0];
            // Fubini: the double integral from -1 collapses to
            // ∫ (τ - ξ)·f(ξ) dξ over [-1, τ].
            let oracle_gamma =
                adaptive_simpson(&|s| (tau - s) * series_value(&alpha, s), -1.0, tau, 1e-13);
            assert_abs_diff_eq!(gamma_val, oracle_gamma, epsilon = 1e-10);
        }
    }

    #[test]
    fn start_rows_and_signs() {
        let basis = ChebyshevBasis::new(7);
        for j in 0..=7 {
            let expect = if j % 2 == 0 { 1.0 } else { -1.0 };
            assert_eq!(basis.t_start()[j], expect);
            assert_eq!(basis.beta_start()[j], 0.0);
            assert_eq!(basis.gamma_start()[j], 0.0);
            // The coefficient tables really do vanish at -1.
            assert!(clenshaw(&basis.beta_coeffs[j], -1.0).abs() < 1e-14);
            assert!(clenshaw(&basis.gamma_coeffs[j], -1.0).abs() < 1e-14);
        }
    }

    /// Chebyshev-space differentiation, test-only: coefficients of the
    /// derivative of Σ c_j T_j.
    fn derivative(c: &[f64]) -> Vec<f64> {
        let n = c.len();
        if n <= 1 {
            return vec![0.0];
        }
        let mut d = vec![0.0; n - 1];
        // d_{k-1} = d_{k+1} + 2k c_k, downward recurrence.
        let mut next = 0.0; // d_{n}
        let mut next2 = 0.0; // d_{n+1}
        for k in (1..n).rev() {
            let dk = next2 + 2.0 * k as f64 * c[k];
            if k >= 1 {
                d[k - 1] = dk;
            }
            next2 = next;
            next = dk;
        }
        d[0] /= 2.0;
        d
    }

    #[test]
    fn double_integration_round_trip() {
        // Differentiating the γ coefficient table twice must reproduce
        // the basis polynomial, so the sampled second derivative at the
        // nodes equals 𝒯α.
        let n = 8;
        let basis = ChebyshevBasis::new(n);
        for j in 0..=n {
            let dd = derivative(&derivative(&basis.gamma_coeffs[j]));
            for &tau in basis.nodes().iter() {
                let recon = clenshaw(&dd, tau);
                assert_abs_diff_eq!(recon, eval_chebyshev(j, tau).unwrap(), epsilon = 1e-10);
            }
            let db = derivative(&basis.beta_coeffs[j]);
            for &tau in basis.nodes().iter() {
                assert_abs_diff_eq!(clenshaw(&db, tau), eval_chebyshev(j, tau).unwrap(), epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn time_map_round_trip() {
        let map = TimeMap::new(0.0, 10.0).unwrap();
        assert_eq!(map.to_tau(0.0).unwrap(), -1.0);
        assert_eq!(map.to_tau(10.0).unwrap(), 1.0);
        let mid = TimeMap::new(2.0, 4.0).unwrap();
        assert_abs_diff_eq!(mid.to_tau(3.0).unwrap(), 0.0, epsilon = 1e-15);
        for t in [0.0, 1.7, 5.5, 9.99, 10.0] {
            let tau = map.to_tau(t).unwrap();
            assert_abs_diff_eq!(map.to_time(tau), t, epsilon = 1e-14);
        }
        assert!(map.to_tau(-0.1).is_err());
        assert!(map.to_tau(10.1).is_err());
        assert!(TimeMap::new(1.0, 1.0).is_err());
    }

    #[test]
    fn propagate_free_drift() {
        let map = TimeMap::new(0.0, 1.0).unwrap();
        let (x, v) = icc_propagate(
            |_, _, _| DVector::zeros(1),
            &DVector::from_element(1, 1.0),
            &DVector::from_element(1, 2.0),
            map,
            4,
        )
        .unwrap();
        assert_abs_diff_eq!(x[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v[0], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn propagate_quarter_period_oscillator() {
        let map = TimeMap::new(0.0, PI / 2.0).unwrap();
        let (x, v) = icc_propagate(
            |_, x, _| -x.clone(),
            &DVector::from_element(1, 1.0),
            &DVector::zeros(1),
            map,
            12,
        )
        .unwrap();
        assert_abs_diff_eq!(x[0], 0.0, epsilon = 1e-8);
        assert_abs_diff_eq!(v[0], -1.0, epsilon = 1e-8);
    }

    #[test]
    fn propagate_spectral_decay() {
        let map = TimeMap::new(0.0, PI / 2.0).unwrap();
        let run = |n: usize| {
            let (x, v) = icc_propagate(
                |_, x, _| -x.clone(),
                &DVector::from_element(1, 1.0),
                &DVector::zeros(1),
                map,
                n,
            )
            .unwrap();
            (x[0].powi(2) + (v[0] + 1.0).powi(2)).sqrt()
        };
        let err4 = run(4);
        let err12 = run(12);
        assert!(err12 < 1e-6 * err4, "err4={err4:.3e} err12={err12:.3e}");
    }

    #[test]
    fn propagate_stored_series_matches_gamma_operator() {
        // Dynamics given by a fixed Chebyshev series in computational
        // time; the γ operator double-integrates it in closed form.
        let n = 9;
        let basis = ChebyshevBasis::new(n);
        let map = TimeMap::new(1.0, 3.5).unwrap();
        let half_dt = map.dt() / 2.0;
        let coeffs: Vec<f64> = (0..=n).map(|j| 0.3 / (1.0 + j as f64)).collect();
        let coeffs_v = DVector::from_column_slice(&coeffs);
        let x0 = DVector::from_element(1, 0.7);
        let v0 = DVector::from_element(1, -0.2);

        // u(t) where the series argument is τ(t); series gives the
        // *physical* acceleration here.
        let map_c = map;
        let (xf, vf) = icc_propagate(
            move |t, _, _| {
                let tau = map_c.to_tau(t).unwrap();
                DVector::from_element(1, series_value(&coeffs, tau))
            },
            &x0,
            &v0,
            map,
            n,
        )
        .unwrap();

        // Closed form: computational second derivative is (Δt/2)²·series,
        // so x(1) = γ(1)·α(Δt/2)² + x'(-1)·2 + x(-1).
        let alpha_comp = &coeffs_v * (half_dt * half_dt);
        let x_expect = (&basis.gamma_row(1.0).unwrap() * &alpha_comp)[0] + v0[0] * half_dt * 2.0 + x0[0];
        let v_expect = ((&basis.beta_row(1.0).unwrap() * &alpha_comp)[0] + v0[0] * half_dt) / half_dt;
        assert_abs_diff_eq!(xf[0], x_expect, epsilon = 1e-10);
        assert_abs_diff_eq!(vf[0], v_expect, epsilon = 1e-10);
    }

    #[test]
    fn basis_dimensions() {
        let basis = ChebyshevBasis::new(3);
        assert_eq!(basis.num_coeffs(), 4);
        assert_eq!(basis.t_mat().shape(), (4, 4));
        assert_eq!(basis.beta_mat().shape(), (4, 4));
        assert_eq!(basis.gamma_mat().shape(), (4, 4));
    }
}
