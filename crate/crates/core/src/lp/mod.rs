//! Linear programming: model type, builders for the mechanism LPs and a
//! self-contained simplex solver.

mod build;
mod factor;
mod model;
mod simplex;

pub use build::{
    build_dual_spanner, build_primal_exact, build_primal_spanner, dual_edge_var, dual_row_var,
};
pub use model::{LpModel, Row, Sense};
pub use simplex::{
    solve, solve_with, LpBackend, LpSolution, LpStatus, Route, SimplexSolver, SolverOptions,
};

use crate::error::{Error, Result};

/// True iff the two optimal objectives agree within `tol * (1 + |primal|)`.
pub fn check_strong_duality(primal: &LpSolution, dual: &LpSolution, tol: f64) -> Result<bool> {
    for (what, s) in [("primal", primal), ("dual", dual)] {
        if s.status != LpStatus::Optimal {
            return Err(Error::Contract(format!(
                "{what} solution has status {:?}, expected optimal",
                s.status
            )));
        }
    }
    let gap = (primal.objective_value - dual.objective_value).abs();
    Ok(gap <= tol * (1.0 + primal.objective_value.abs()))
}
