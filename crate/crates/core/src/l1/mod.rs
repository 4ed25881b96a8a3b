//! ℓ1 minimization under ℓ∞ residual constraints (Dantzig selector and CLIME
//! columns) and ℓ1-penalized least squares.

mod clime;
mod lasso;
mod simplex;

pub use clime::{solve_clime, solve_clime_with, try_clime, try_clime_warm, ClimeFailure};
pub use lasso::{lasso_cd, lasso_kkt_violation, LassoFit, LassoSolver};
pub use simplex::Basis;

use ndarray::{Array1, ArrayView1, ArrayView2};

use crate::error::{Result, TedError};
use simplex::{L1LinfLp, LpOutcome};

pub const DEFAULT_TOL: f64 = 1e-8;

/// `min ‖β‖₁` subject to `‖Aβ − b‖_max ≤ λ`.
#[derive(Debug, Clone)]
pub struct L1LinfProblem {
    pub a: ndarray::Array2<f64>,
    pub b: Array1<f64>,
    pub lambda: f64,
    pub tol: f64,
}

impl L1LinfProblem {
    pub fn new(a: ndarray::Array2<f64>, b: Array1<f64>, lambda: f64) -> Self {
        Self { a, b, lambda, tol: DEFAULT_TOL }
    }

    pub fn validate(&self) -> Result<()> {
        if self.a.nrows() != self.b.len() {
            return Err(TedError::Argument(format!(
                "A has {} rows but b has length {}",
                self.a.nrows(),
                self.b.len()
            )));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(TedError::Argument(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if self.a.iter().chain(self.b.iter()).any(|v| !v.is_finite()) {
            return Err(TedError::Argument("A and b must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct L1Solution {
    pub beta: Array1<f64>,
    pub objective: f64,
    /// `‖Aβ − b‖_max − λ`, recomputed from the returned `β`.
    pub feasibility_gap: f64,
    pub status: SolveStatus,
    pub iterations: usize,
}

impl L1Solution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// `‖Aβ − b‖_max`, evaluated column by column, independent of the solver's
/// internal factorization.
pub fn constraint_residual(a: ArrayView2<f64>, beta: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let mut worst = 0.0_f64;
    for (i, row) in a.rows().into_iter().enumerate() {
        let mut s = -b[i];
        for (aij, bj) in row.iter().zip(beta.iter()) {
            s += aij * bj;
        }
        worst = worst.max(s.abs());
    }
    worst
}

/// Reusable solver for problems sharing the matrix `A`. Solutions can be
/// chained through [`Basis`] warm starts.
#[derive(Debug, Clone)]
pub struct L1LinfSolver {
    lp: L1LinfLp,
    a: ndarray::Array2<f64>,
    max_iter: usize,
}

impl L1LinfSolver {
    pub fn new(a: ArrayView2<f64>) -> Self {
        let (m, p) = a.dim();
        let lp = L1LinfLp::new(m, p, a.iter().copied().collect());
        L1LinfSolver { lp, a: a.to_owned(), max_iter: 50 * (m + 2 * p) + 1000 }
    }

    pub fn nrows(&self) -> usize {
        self.a.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.a.ncols()
    }

    pub fn solve(&self, b: ArrayView1<f64>, lambda: f64, tol: f64) -> L1Solution {
        self.solve_warm(b, lambda, tol, None).0
    }

    /// Solve, optionally seeding the simplex with a basis from another right
    /// hand side or bound. Returns the final basis for further chaining.
    pub fn solve_warm(&self, b: ArrayView1<f64>, lambda: f64, tol: f64, warm: Option<&Basis>) -> (L1Solution, Basis) {
        let bvec: Vec<f64> = b.iter().copied().collect();
        let mut res = self.lp.solve(&bvec, lambda, warm, self.max_iter);
        if warm.is_some() && res.outcome != LpOutcome::Optimal {
            // A poor warm start should never change the answer class.
            let cold = self.lp.solve(&bvec, lambda, None, self.max_iter);
            res = cold;
        }
        let beta = Array1::from(res.beta);
        let resid = constraint_residual(self.a.view(), beta.view(), b);
        let gap = resid - lambda;
        let status = match res.outcome {
            LpOutcome::Optimal if gap <= tol => SolveStatus::Optimal,
            LpOutcome::Infeasible => SolveStatus::Infeasible,
            _ => SolveStatus::NumericalFailure,
        };
        let objective = beta.iter().map(|v| v.abs()).sum();
        (L1Solution { beta, objective, feasibility_gap: gap, status, iterations: res.iterations }, res.basis)
    }
}

/// Solve one ℓ1/ℓ∞ problem from the slack basis.
pub fn solve_l1_linf(prob: &L1LinfProblem) -> Result<L1Solution> {
    prob.validate()?;
    Ok(L1LinfSolver::new(prob.a.view()).solve(prob.b.view(), prob.lambda, prob.tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_when_lambda_dominates() {
        let a = array![[1.0, 0.3], [0.3, 1.0]];
        let prob = L1LinfProblem::new(a, array![0.4, -0.2], 0.5);
        let sol = solve_l1_linf(&prob).unwrap();
        assert!(sol.is_optimal());
        assert_eq!(sol.beta, array![0.0, 0.0]);
        assert_eq!(sol.objective, 0.0);
    }

    #[test]
    fn identity_shrinks_toward_boundary() {
        let prob = L1LinfProblem::new(Array2::eye(3), array![2.0, 0.0, 0.0], 0.5);
        let sol = solve_l1_linf(&prob).unwrap();
        assert!(sol.is_optimal());
        for (v, e) in sol.beta.iter().zip([1.5, 0.0, 0.0]) {
            assert!((v - e).abs() < 1e-12);
        }
        assert!(sol.feasibility_gap <= 1e-12);
    }

    #[test]
    fn detects_infeasibility() {
        // Two rows demand β = 1 and β = -1 within 0.1.
        let prob = L1LinfProblem::new(array![[1.0], [1.0]], array![1.0, -1.0], 0.1);
        let sol = solve_l1_linf(&prob).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn rejects_negative_lambda() {
        let prob = L1LinfProblem::new(Array2::eye(2), array![1.0, 1.0], -0.1);
        assert!(matches!(solve_l1_linf(&prob), Err(TedError::Argument(_))));
    }

    #[test]
    fn warm_start_agrees_with_cold() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = 12;
        let x = Array2::from_shape_fn((30, p), |_| rng.gen::<f64>() - 0.5);
        let a = x.t().dot(&x) / 30.0;
        let solver = L1LinfSolver::new(a.view());
        let mut basis = None;
        for step in 0..6 {
            let b = Array1::from_shape_fn(p, |_| rng.gen::<f64>() - 0.5);
            let lam = 0.01 * (step + 1) as f64;
            let cold = solver.solve(b.view(), lam, 1e-8);
            let (warm, next) = solver.solve_warm(b.view(), lam, 1e-8, basis.as_ref());
            assert!(cold.is_optimal() && warm.is_optimal());
            assert!((cold.objective - warm.objective).abs() < 1e-8 * (1.0 + cold.objective));
            basis = Some(next);
        }
    }
}
