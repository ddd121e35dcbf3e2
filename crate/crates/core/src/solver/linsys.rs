//! Dense GMRES solves with optional rank-one deflation and bookkeeping.

use nalgebra::{DMatrix, DVector};

use super::{gmres, GmresStatus, SolveReport};
use crate::{Error, Result};

/// Rank-one deflation `A + u vᵀ` for a singular but consistent system with
/// left null direction `u` and right null direction `v` (both unit).
#[derive(Debug, Clone)]
pub(crate) struct Deflation {
    pub left: DVector<f64>,
    pub right: DVector<f64>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct SolveCfg {
    pub tol: f64,
    pub maxit: Option<usize>,
}

/// Solves `mat·x = rhs` by GMRES from a zero guess and records the
/// iteration count and residual. Hitting the iteration cap aborts.
pub(crate) fn solve(
    mat: &DMatrix<f64>,
    rhs: &DVector<f64>,
    deflation: Option<&Deflation>,
    cfg: SolveCfg,
    report: &mut SolveReport,
) -> Result<DVector<f64>> {
    let size = rhs.len();
    let maxit = cfg.maxit.unwrap_or(4 * size);
    let outcome = match deflation {
        None => gmres(
            |v: &[f64]| (mat * DVector::from_column_slice(v)).as_slice().to_vec(),
            rhs.as_slice(),
            cfg.tol,
            maxit,
        )?,
        Some(d) => {
            let b = rhs - &d.left * d.left.dot(rhs);
            gmres(
                |v: &[f64]| {
                    let x = DVector::from_column_slice(v);
                    let y = mat * &x + &d.left * d.right.dot(&x);
                    y.as_slice().to_vec()
                },
                b.as_slice(),
                cfg.tol,
                maxit,
            )?
        }
    };
    if outcome.status == GmresStatus::MaxIterations {
        return Err(Error::NotConverged {
            iterations: outcome.iterations,
            residual: outcome.residual,
        });
    }
    report.iterations.push(outcome.iterations);
    report.residuals.push(outcome.residual);
    Ok(DVector::from_vec(outcome.x))
}
