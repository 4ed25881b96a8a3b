use ndarray::{Array1, Array2, ArrayView2};

use super::{Basis, L1LinfSolver, SolveStatus, DEFAULT_TOL};
use crate::error::{Result, TedError};

/// Column-wise CLIME: column `j` of the result minimizes `‖ω‖₁` subject to
/// `‖Â ω − e_j‖_max ≤ τ`. No symmetrization is applied.
pub fn solve_clime(ahat: ArrayView2<f64>, tau: f64) -> Result<Array2<f64>> {
    if ahat.nrows() != ahat.ncols() {
        return Err(TedError::Argument(format!("CLIME needs a square matrix, got {:?}", ahat.dim())));
    }
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(TedError::Argument(format!("tau must be finite and >= 0, got {tau}")));
    }
    solve_clime_with(&L1LinfSolver::new(ahat), tau, DEFAULT_TOL)
}

/// A CLIME column that could not be solved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClimeFailure {
    pub column: usize,
    pub status: SolveStatus,
    pub gap: f64,
    pub iterations: usize,
}

impl ClimeFailure {
    pub fn into_error(self, tau: f64) -> TedError {
        match self.status {
            SolveStatus::Infeasible => {
                TedError::Numerical(format!("CLIME column {} infeasible at tau = {tau}", self.column))
            }
            _ => TedError::Numerical(format!(
                "CLIME column {} failed (gap {:.3e} after {} pivots)",
                self.column, self.gap, self.iterations
            )),
        }
    }
}

/// CLIME on a prepared solver sharing one copy of `Â` across columns,
/// stopping at the first column that fails.
/// Each column starts from the slack basis; chaining the previous column's
/// basis was measured to take more pivots, since optimal supports differ.
pub fn try_clime(solver: &L1LinfSolver, tau: f64, tol: f64) -> std::result::Result<Array2<f64>, ClimeFailure> {
    let p = solver.ncols();
    let mut omega = Array2::zeros((p, p));
    let mut e = Array1::zeros(p);
    for j in 0..p {
        e[j] = 1.0;
        let sol = solver.solve(e.view(), tau, tol);
        e[j] = 0.0;
        if sol.status != SolveStatus::Optimal {
            return Err(ClimeFailure { column: j, status: sol.status, gap: sol.feasibility_gap, iterations: sol.iterations });
        }
        omega.column_mut(j).assign(&sol.beta);
    }
    Ok(omega)
}

/// [`try_clime`] seeded column by column from `bases`, which are replaced
/// by the final bases. Meant for a decreasing sequence of `τ` on one matrix:
/// only the bounds change, so each stored basis stays dual feasible.
pub fn try_clime_warm(
    solver: &L1LinfSolver,
    tau: f64,
    tol: f64,
    bases: &mut Vec<Option<Basis>>,
) -> std::result::Result<Array2<f64>, ClimeFailure> {
    let p = solver.ncols();
    bases.resize(p, None);
    let mut omega = Array2::zeros((p, p));
    let mut e = Array1::zeros(p);
    for j in 0..p {
        e[j] = 1.0;
        let (sol, basis) = solver.solve_warm(e.view(), tau, tol, bases[j].as_ref());
        e[j] = 0.0;
        if sol.status != SolveStatus::Optimal {
            return Err(ClimeFailure { column: j, status: sol.status, gap: sol.feasibility_gap, iterations: sol.iterations });
        }
        bases[j] = Some(basis);
        omega.column_mut(j).assign(&sol.beta);
    }
    Ok(omega)
}

pub fn solve_clime_with(solver: &L1LinfSolver, tau: f64, tol: f64) -> Result<Array2<f64>> {
    if solver.nrows() != solver.ncols() {
        return Err(TedError::Argument("CLIME needs a square matrix".into()));
    }
    try_clime(solver, tau, tol).map_err(|f| f.into_error(tau))
}
