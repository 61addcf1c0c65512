//! Two-phase dense simplex for small linear programs.
//!
//! Solves `min cᵀx  s.t.  A_in·x ≤ b_in, A_eq·x = b_eq` with `x` free.
//! Free variables are split into positive parts, slacks turn inequalities
//! into equations, and phase one minimizes artificial variables to find a
//! basic feasible solution. Bland's rule (lowest-index entering variable,
//! lowest-index basic variable on ratio ties) prevents cycling and makes
//! every pivot sequence deterministic.

use super::FarkasCertificate;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

const RESIDUAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
/// Phase-1 objective above this value certifies infeasibility.
const PHASE1_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible { certificate: FarkasCertificate },
    #[error("linear program is unbounded")]
    Unbounded { ray: DVector<f64> },
    #[error("simplex iteration limit reached")]
    Stalled,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Optimal vertex of a linear program.
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    /// Multipliers for the inequality rows; nonnegative at an optimum and
    /// satisfying `c + A_inᵀ·duals_in + A_eqᵀ·duals_eq = 0`.
    pub duals_in: DVector<f64>,
    pub duals_eq: DVector<f64>,
}

enum Step {
    Optimal,
    Unbounded { entering: usize },
}

/// One simplex phase: pivots until optimal or unbounded.
///
/// `enterable` filters which columns may enter the basis (used to bar
/// artificial columns in phase two).
fn run_simplex(
    g: &DMatrix<f64>,
    h: &DVector<f64>,
    costs: &DVector<f64>,
    basis: &mut Vec<usize>,
    enterable: &dyn Fn(usize) -> bool,
) -> Result<Step, LpError> {
    let m = g.nrows();
    let ncols = g.ncols();
    let max_iter = 2000 + 50 * (m + ncols);
    let mut in_basis = vec![false; ncols];
    for &j in basis.iter() {
        in_basis[j] = true;
    }

    for _ in 0..max_iter {
        let b_mat = gather_columns(g, basis);
        let lu = b_mat.clone().lu();
        let xb = lu.solve(h).ok_or(LpError::Stalled)?;
        let c_b = DVector::from_fn(m, |i, _| costs[basis[i]]);
        let y = b_mat.transpose().lu().solve(&c_b).ok_or(LpError::Stalled)?;

        // Bland: lowest-index column with a negative reduced cost enters.
        let mut entering = None;
        for j in 0..ncols {
            if in_basis[j] || !enterable(j) {
                continue;
            }
            let reduced = costs[j] - y.dot(&g.column(j).into_owned());
            if reduced < -RESIDUAL_TOL {
                entering = Some(j);
                break;
            }
        }
        let Some(e) = entering else {
            return Ok(Step::Optimal);
        };

        let d = lu.solve(&g.column(e).into_owned()).ok_or(LpError::Stalled)?;
        let mut min_ratio = f64::INFINITY;
        for i in 0..m {
            if d[i] > PIVOT_TOL {
                let ratio = xb[i].max(0.0) / d[i];
                if ratio < min_ratio {
                    min_ratio = ratio;
                }
            }
        }
        if !min_ratio.is_finite() {
            return Ok(Step::Unbounded { entering: e });
        }
        // Bland on ties: leaving row whose basic variable has the lowest
        // column index.
        let mut leaving = None;
        for i in 0..m {
            if d[i] > PIVOT_TOL {
                let ratio = xb[i].max(0.0) / d[i];
                if ratio <= min_ratio + 1e-12 * (1.0 + min_ratio) {
                    match leaving {
                        None => leaving = Some(i),
                        Some(r) if basis[i] < basis[r] => leaving = Some(i),
                        _ => {}
                    }
                }
            }
        }
        let r = leaving.expect("finite min ratio implies a leaving row");
        in_basis[basis[r]] = false;
        in_basis[e] = true;
        basis[r] = e;
    }
    Err(LpError::Stalled)
}

fn gather_columns(g: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(g.nrows(), cols.len(), |i, k| g[(i, cols[k])])
}

/// Solve `min cᵀx  s.t.  A_in·x ≤ b_in, A_eq·x = b_eq`.
///
/// Infeasible and unbounded problems are distinguished in the error; the
/// infeasible branch carries a Farkas certificate built from the phase-1
/// duals.
pub fn solve_lp(
    c: &DVector<f64>,
    a_in: &DMatrix<f64>,
    b_in: &DVector<f64>,
    a_eq: &DMatrix<f64>,
    b_eq: &DVector<f64>,
) -> Result<LpSolution, LpError> {
    let d = c.len();
    let m_in = a_in.nrows();
    let m_eq = a_eq.nrows();
    if a_in.ncols() != d && m_in > 0 {
        return Err(LpError::Dimension(format!(
            "A_in has {} columns, cost has {}",
            a_in.ncols(),
            d
        )));
    }
    if a_eq.ncols() != d && m_eq > 0 {
        return Err(LpError::Dimension(format!(
            "A_eq has {} columns, cost has {}",
            a_eq.ncols(),
            d
        )));
    }
    if b_in.len() != m_in || b_eq.len() != m_eq {
        return Err(LpError::Dimension("right-hand side length mismatch".into()));
    }

    let m = m_in + m_eq;
    // Columns: x⁺ (d) | x⁻ (d) | slacks (m_in) | artificials (appended).
    // Inequality rows come first, equality rows after.
    let n_core = 2 * d + m_in;
    let mut art_rows = Vec::new();
    for i in 0..m_in {
        if b_in[i] < 0.0 {
            art_rows.push(i);
        }
    }
    for i in 0..m_eq {
        art_rows.push(m_in + i);
    }
    let ncols = n_core + art_rows.len();

    let mut g = DMatrix::<f64>::zeros(m, ncols);
    let mut h = DVector::<f64>::zeros(m);
    for i in 0..m_in {
        for j in 0..d {
            g[(i, j)] = a_in[(i, j)];
            g[(i, d + j)] = -a_in[(i, j)];
        }
        g[(i, 2 * d + i)] = 1.0;
        h[i] = b_in[i];
    }
    for i in 0..m_eq {
        for j in 0..d {
            g[(m_in + i, j)] = a_eq[(i, j)];
            g[(m_in + i, d + j)] = -a_eq[(i, j)];
        }
        h[m_in + i] = b_eq[i];
    }
    // Artificial column sign matches the row's right-hand side so its
    // initial basic value is nonnegative.
    for (k, &row) in art_rows.iter().enumerate() {
        g[(row, n_core + k)] = if h[row] < 0.0 { -1.0 } else { 1.0 };
    }

    // Initial basis: slacks on rows with b ≥ 0, artificials elsewhere.
    let mut basis = vec![usize::MAX; m];
    for i in 0..m_in {
        if b_in[i] >= 0.0 {
            basis[i] = 2 * d + i;
        }
    }
    for (k, &row) in art_rows.iter().enumerate() {
        basis[row] = n_core + k;
    }

    // Phase 1: minimize the artificial total.
    if !art_rows.is_empty() {
        let phase1_costs =
            DVector::from_fn(ncols, |j, _| if j >= n_core { 1.0 } else { 0.0 });
        match run_simplex(&g, &h, &phase1_costs, &mut basis, &|_| true)? {
            Step::Optimal => {}
            Step::Unbounded { .. } => return Err(LpError::Stalled),
        }
        let b_mat = gather_columns(&g, &basis);
        let lu = b_mat.clone().lu();
        let xb = lu.solve(&h).ok_or(LpError::Stalled)?;
        let infeas: f64 = basis
            .iter()
            .zip(xb.iter())
            .filter(|(j, _)| **j >= n_core)
            .map(|(_, v)| v.max(0.0))
            .sum();
        if infeas > PHASE1_TOL {
            // Phase-1 duals give the Farkas certificate: with y = B⁻ᵀc_B,
            // -y is a nonnegative combination proving emptiness.
            let c_b = DVector::from_fn(m, |i, _| phase1_costs[basis[i]]);
            let y = b_mat.transpose().lu().solve(&c_b).ok_or(LpError::Stalled)?;
            let ineq = DVector::from_fn(m_in, |i, _| (-y[i]).max(0.0));
            let eq = DVector::from_fn(m_eq, |i, _| -y[m_in + i]);
            return Err(LpError::Infeasible {
                certificate: FarkasCertificate { eq, ineq },
            });
        }
    }

    // Drive leftover zero-level artificials out of the basis; rows where
    // that is impossible are redundant and dropped.
    let mut kept_rows: Vec<usize> = (0..m).collect();
    loop {
        let m_cur = g.nrows();
        let Some(row) = (0..m_cur).find(|&i| basis[i] >= n_core) else {
            break;
        };
        let b_mat = gather_columns(&g, &basis);
        let bt_lu = b_mat.transpose().lu();
        let e_row = DVector::from_fn(m_cur, |i, _| if i == row { 1.0 } else { 0.0 });
        let w = bt_lu.solve(&e_row).ok_or(LpError::Stalled)?;
        let mut replaced = false;
        for j in 0..n_core {
            if basis.contains(&j) {
                continue;
            }
            let piv = w.dot(&g.column(j).into_owned());
            if piv.abs() > PIVOT_TOL {
                basis[row] = j;
                replaced = true;
                break;
            }
        }
        if !replaced {
            g = g.remove_row(row);
            h = h.remove_row(row);
            basis.remove(row);
            kept_rows.remove(row);
        }
    }

    // Phase 2 with the original objective; artificial columns are barred.
    let costs = DVector::from_fn(ncols, |j, _| {
        if j < d {
            c[j]
        } else if j < 2 * d {
            -c[j - d]
        } else {
            0.0
        }
    });
    match run_simplex(&g, &h, &costs, &mut basis, &|j| j < n_core)? {
        Step::Optimal => {}
        Step::Unbounded { entering } => {
            let b_mat = gather_columns(&g, &basis);
            let dir = b_mat
                .clone()
                .lu()
                .solve(&g.column(entering).into_owned())
                .ok_or(LpError::Stalled)?;
            let mut ray = DVector::<f64>::zeros(d);
            if entering < d {
                ray[entering] += 1.0;
            } else if entering < 2 * d {
                ray[entering - d] -= 1.0;
            }
            for (i, &bj) in basis.iter().enumerate() {
                if bj < d {
                    ray[bj] -= dir[i];
                } else if bj < 2 * d {
                    ray[bj - d] += dir[i];
                }
            }
            return Err(LpError::Unbounded { ray });
        }
    }

    let m_cur = g.nrows();
    let b_mat = gather_columns(&g, &basis);
    let lu = b_mat.clone().lu();
    let xb = lu.solve(&h).ok_or(LpError::Stalled)?;
    let c_b = DVector::from_fn(m_cur, |i, _| costs[basis[i]]);
    let y = b_mat.transpose().lu().solve(&c_b).ok_or(LpError::Stalled)?;

    let mut x = DVector::<f64>::zeros(d);
    for (i, &bj) in basis.iter().enumerate() {
        if bj < d {
            x[bj] += xb[i];
        } else if bj < 2 * d {
            x[bj - d] -= xb[i];
        }
    }
    let mut duals_in = DVector::<f64>::zeros(m_in);
    let mut duals_eq = DVector::<f64>::zeros(m_eq);
    for (i, &orig) in kept_rows.iter().enumerate() {
        if orig < m_in {
            duals_in[orig] = -y[i];
        } else {
            duals_eq[orig - m_in] = -y[i];
        }
    }
    Ok(LpSolution {
        objective: c.dot(&x),
        x,
        duals_in,
        duals_eq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn empty(d: usize) -> (DMatrix<f64>, DVector<f64>) {
        (DMatrix::zeros(0, d), DVector::zeros(0))
    }

    #[test]
    fn bounded_scalar() {
        // min -x s.t. x ≤ 3, x ≥ 0.
        let c = DVector::from_column_slice(&[-1.0]);
        let a_in = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let b_in = DVector::from_column_slice(&[3.0, 0.0]);
        let (a_eq, b_eq) = empty(1);
        let sol = solve_lp(&c, &a_in, &b_in, &a_eq, &b_eq).unwrap();
        assert_abs_diff_eq!(sol.x[0], 3.0, epsilon = 1e-10);
        assert_abs_diff_eq!(sol.objective, -3.0, epsilon = 1e-10);
        // Stationarity: c + A_inᵀλ = 0 with λ ≥ 0.
        assert_abs_diff_eq!(sol.duals_in[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(sol.duals_in[1], 0.0, epsilon = 1e-10);
    }

    #[test]
    fn max_of_lower_bounds() {
        // min s s.t. s ≥ 2, s ≥ 0.5.
        let c = DVector::from_column_slice(&[1.0]);
        let a_in = DMatrix::from_row_slice(2, 1, &[-1.0, -1.0]);
        let b_in = DVector::from_column_slice(&[-2.0, -0.5]);
        let (a_eq, b_eq) = empty(1);
        let sol = solve_lp(&c, &a_in, &b_in, &a_eq, &b_eq).unwrap();
        assert_abs_diff_eq!(sol.x[0], 2.0, epsilon = 1e-10);
    }

    #[test]
    fn equality_constrained() {
        // min x + y s.t. x + y = 1, x,y ≥ 0 → objective 1.
        let c = DVector::from_column_slice(&[1.0, 1.0]);
        let a_in = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]);
        let b_in = DVector::zeros(2);
        let a_eq = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let b_eq = DVector::from_column_slice(&[1.0]);
        let sol = solve_lp(&c, &a_in, &b_in, &a_eq, &b_eq).unwrap();
        assert_abs_diff_eq!(sol.objective, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn detects_unbounded() {
        let c = DVector::from_column_slice(&[-1.0]);
        let a_in = DMatrix::from_row_slice(1, 1, &[-1.0]);
        let b_in = DVector::from_column_slice(&[0.0]);
        let (a_eq, b_eq) = empty(1);
        match solve_lp(&c, &a_in, &b_in, &a_eq, &b_eq) {
            Err(LpError::Unbounded { ray }) => assert!(ray[0] > 0.5),
            other => panic!("expected unbounded, got {other:?}"),
        }
    }

    #[test]
    fn detects_infeasible_with_certificate() {
        // x ≤ -1 and x ≥ 1 cannot hold together.
        let c = DVector::from_column_slice(&[0.0]);
        let a_in = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let b_in = DVector::from_column_slice(&[-1.0, -1.0]);
        let (a_eq, b_eq) = empty(1);
        match solve_lp(&c, &a_in, &b_in, &a_eq, &b_eq) {
            Err(LpError::Infeasible { certificate }) => {
                let z = &certificate.ineq;
                assert!(z.iter().all(|&v| v >= -1e-12));
                // A_inᵀz = 0 and b_inᵀz < 0.
                let combo = a_in.transpose() * z;
                assert_abs_diff_eq!(combo[0], 0.0, epsilon = 1e-9);
                assert!(b_in.dot(z) < -1e-6);
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn stationarity_on_degenerate_problem() {
        // Redundant equalities (duplicated row) must not break the solve.
        let c = DVector::from_column_slice(&[0.0, 1.0]);
        let a_eq = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let b_eq = DVector::from_column_slice(&[1.0, 1.0]);
        let a_in = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]);
        let b_in = DVector::zeros(2);
        let sol = solve_lp(&c, &a_in, &b_in, &a_eq, &b_eq).unwrap();
        assert_abs_diff_eq!(sol.objective, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.x[0], 1.0, epsilon = 1e-9);
    }

    /// Enumerate all basic solutions of the row set and keep the best
    /// feasible one — an independent optimum oracle for small LPs.
    fn vertex_enumeration_optimum(
        c: &DVector<f64>,
        a_in: &DMatrix<f64>,
        b_in: &DVector<f64>,
    ) -> f64 {
        let d = c.len();
        let m = a_in.nrows();
        let mut best = f64::INFINITY;
        let mut idx = vec![0usize; d];
        fn combos(
            start: usize,
            picked: &mut Vec<usize>,
            d: usize,
            m: usize,
            f: &mut impl FnMut(&[usize]),
        ) {
            if picked.len() == d {
                f(picked);
                return;
            }
            for i in start..m {
                picked.push(i);
                combos(i + 1, picked, d, m, f);
                picked.pop();
            }
        }
        let mut picked = Vec::new();
        combos(0, &mut picked, d, m, &mut |rows: &[usize]| {
            idx.copy_from_slice(rows);
            let a = DMatrix::from_fn(d, d, |i, j| a_in[(rows[i], j)]);
            let b = DVector::from_fn(d, |i, _| b_in[rows[i]]);
            if let Some(x) = a.lu().solve(&b) {
                let feasible = (0..m).all(|i| {
                    let lhs: f64 = (0..d).map(|j| a_in[(i, j)] * x[j]).sum();
                    lhs <= b_in[i] + 1e-7
                });
                if feasible {
                    best = best.min(c.dot(&x));
                }
            }
        });
        best
    }

    #[test]
    fn random_lps_match_vertex_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..30 {
            let d = rng.gen_range(2..=10usize);
            let extra = rng.gen_range(1..=3usize);
            let m = 2 * d + extra;
            // Box plus a few random cuts keeps every instance bounded.
            let mut a = DMatrix::<f64>::zeros(m, d);
            let mut b = DVector::<f64>::zeros(m);
            for j in 0..d {
                a[(j, j)] = 1.0;
                b[j] = rng.gen_range(0.5..2.0);
                a[(d + j, j)] = -1.0;
                b[d + j] = rng.gen_range(0.5..2.0);
            }
            for i in 0..extra {
                for j in 0..d {
                    a[(2 * d + i, j)] = rng.gen_range(-1.0..1.0);
                }
                b[2 * d + i] = rng.gen_range(0.1..1.5);
            }
            let c = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0f64));
            let (a_eq, b_eq) = empty(d);
            let sol = solve_lp(&c, &a, &b, &a_eq, &b_eq)
                .unwrap_or_else(|e| panic!("trial {trial}: {e:?}"));
            let oracle = vertex_enumeration_optimum(&c, &a, &b);
            assert_abs_diff_eq!(sol.objective, oracle, epsilon = 1e-7);

            // Dual stationarity and sign.
            let grad = &c + a.transpose() * &sol.duals_in;
            assert!(grad.amax() < 1e-7, "trial {trial}: stationarity {grad:?}");
            assert!(sol.duals_in.iter().all(|&l| l >= -1e-9));
        }
    }

    #[test]
    fn deterministic_repeat() {
        let c = DVector::from_column_slice(&[-1.0, 2.0, 0.3]);
        let a_in = DMatrix::from_row_slice(4, 3, &[
            1.0, 2.0, -1.0, //
            -1.0, 0.5, 0.0, //
            0.3, -2.0, 1.0, //
            0.0, 1.0, 1.0,
        ]);
        let b_in = DVector::from_column_slice(&[1.0, 2.0, 1.5, 2.0]);
        let a_eq = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]);
        let b_eq = DVector::from_column_slice(&[0.5]);
        let s1 = solve_lp(&c, &a_in, &b_in, &a_eq, &b_eq).unwrap();
        let s2 = solve_lp(&c, &a_in, &b_in, &a_eq, &b_eq).unwrap();
        assert_eq!(s1.x, s2.x);
        assert_eq!(s1.duals_in, s2.duals_in);
        assert_eq!(s1.duals_eq, s2.duals_eq);
    }
}
