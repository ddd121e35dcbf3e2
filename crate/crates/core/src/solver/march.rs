//! Uniform-step marching: fully implicit (FI) and predictor–corrector PC(k).
//!
//! The vortex-source density is represented by piecewise polynomials in time:
//! the piece `[t_{l}, t_{l+1}]` interpolates the backward stencil
//! `t_{l+1}, …, t_{l+1−K}` (shortened near `t = 0`). With uniform steps the
//! history operator depends only on the lag, so the per-lag blocks are summed
//! once into `B_e` and the far history at step `j` is `Σ_e B_e μ_{j−e}`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::linsys::{solve, Deflation, SolveCfg};
use super::{DataSource, MarchOutcome, Problem, SchemeKind, SolveReport, TimeScheme};
use crate::heat_pot::{build_local_block, build_piece_block, DensityHistory, LocalHeatBlock};
use crate::specfun::lagrange_weights;
use crate::{Error, Result};

/// Full FI system matrix `[[½I+S_Lν, A_τ0], [−S_Lτ, ½I+A_ν0]]` for the
/// current-node blocks of `local`.
pub fn fi_assemble(problem: &Problem, local: &LocalHeatBlock) -> DMatrix<f64> {
    let n = problem.n();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&problem.neumann);
    m.view_mut((0, n), (n, n)).copy_from(&local.tau[0]);
    m.view_mut((n, 0), (n, n)).copy_from(&(-&problem.laplace.sl_tau));
    let mut d = local.nu[0].clone();
    for i in 0..n {
        d[(i, i)] += 0.5;
    }
    m.view_mut((n, n), (n, n)).copy_from(&d);
    m
}

/// The two-node (backward Euler in `μ`) local block over one step `dt`.
pub fn fi_local_block(problem: &Problem, dt: f64) -> Result<LocalHeatBlock> {
    build_local_block(&problem.heat, dt, &[0.0, dt])
}

/// FI system matrix for step `dt`.
pub fn fi_matrix(problem: &Problem, dt: f64) -> Result<DMatrix<f64>> {
    Ok(fi_assemble(problem, &fi_local_block(problem, dt)?))
}

pub(crate) fn rho_deflation(problem: &Problem) -> Deflation {
    Deflation {
        left: problem.left_null.clone(),
        right: problem.rho0.clone(),
    }
}

/// Lag-summed far-history blocks `B_e`, `e ≥ 1` (stored at `e − 1`).
struct FarCache {
    dt: f64,
    order: usize,
    nu: Vec<DMatrix<f64>>,
    tau: Vec<DMatrix<f64>>,
    lags: usize,
}

impl FarCache {
    fn new(dt: f64, order: usize) -> Self {
        Self {
            dt,
            order,
            nu: Vec::new(),
            tau: Vec::new(),
            lags: 0,
        }
    }

    fn piece(&self, problem: &Problem, d: usize, nodes: usize) -> Result<LocalHeatBlock> {
        let dt = self.dt;
        let node_u: Vec<f64> = (0..nodes).map(|q| (d + q) as f64 * dt).collect();
        build_piece_block(&problem.heat, d as f64 * dt, (d + 1) as f64 * dt, &node_u)
    }

    /// Adds the piece blocks of lags up to `d_max`.
    fn extend_to(&mut self, problem: &Problem, d_max: usize) -> Result<()> {
        let n = problem.n();
        while self.lags < d_max {
            let d = self.lags + 1;
            let w = self.piece(problem, d, self.order + 1)?;
            for q in 0..=self.order {
                let e = d + q;
                while self.nu.len() < e {
                    self.nu.push(DMatrix::zeros(n, n));
                    self.tau.push(DMatrix::zeros(n, n));
                }
                self.nu[e - 1] += &w.nu[q];
                self.tau[e - 1] += &w.tau[q];
            }
            self.lags = d;
        }
        Ok(())
    }

    /// `Σ_{e=1}^{j−1} B_e μ_{j−e}` for both components (zero-padded stencils).
    fn apply(&self, j: usize, mu: &[Vec<f64>], out_nu: &mut DVector<f64>, out_tau: &mut DVector<f64>) {
        for e in 1..j {
            let m = DVector::from_column_slice(&mu[j - e]);
            out_nu.gemv(1.0, &self.nu[e - 1], &m, 1.0);
            out_tau.gemv(1.0, &self.tau[e - 1], &m, 1.0);
        }
    }

    /// Replaces the zero-padded stencils of the first `order − 1` pieces by
    /// their actual shortened stencils.
    fn ramp_correction(
        &self,
        problem: &Problem,
        j: usize,
        mu: &[Vec<f64>],
        out_nu: &mut DVector<f64>,
        out_tau: &mut DVector<f64>,
    ) -> Result<()> {
        for p in 1..self.order.min(j) {
            let d = j - p;
            let ramped = self.piece(problem, d, p + 1)?;
            let padded = self.piece(problem, d, self.order + 1)?;
            for q in 0..p {
                let m = DVector::from_column_slice(&mu[p - q]);
                out_nu.gemv(1.0, &ramped.nu[q], &m, 1.0);
                out_nu.gemv(-1.0, &padded.nu[q], &m, 1.0);
                out_tau.gemv(1.0, &ramped.tau[q], &m, 1.0);
                out_tau.gemv(-1.0, &padded.tau[q], &m, 1.0);
            }
        }
        Ok(())
    }
}

/// FI or PC(k) march with uniform steps from zero initial densities.
pub fn march_uniform(problem: &Problem, scheme: &TimeScheme, data: &dyn DataSource) -> Result<MarchOutcome> {
    scheme.validate()?;
    let order = match scheme.kind {
        SchemeKind::Fi => 1,
        SchemeKind::Pc { order } => order,
        SchemeKind::Sdc { .. } => {
            return Err(Error::Config("march_uniform handles only FI and PC schemes".into()));
        }
    };
    let implicit = scheme.kind == SchemeKind::Fi;
    let n = problem.n();
    let dt = scheme.dt;
    let cfg = SolveCfg {
        tol: scheme.gmres_tol,
        maxit: scheme.gmres_maxit,
    };
    let perimeter = problem.grid().perimeter();
    let weights = DVector::from_column_slice(&problem.grid().quad_weights);

    // The FI system is deflated on request. The PC ρ-equation is always
    // solved deflated: its right-hand side carries an O(1e−13) incompatible
    // component that would otherwise stall GMRES just above the tolerance.
    let deflation = if implicit {
        scheme.deflate.then(|| {
            let mut left = DVector::zeros(2 * n);
            let mut right = DVector::zeros(2 * n);
            left.rows_mut(0, n).copy_from(&problem.left_null);
            right.rows_mut(0, n).copy_from(&problem.rho0);
            Deflation { left, right }
        })
    } else {
        Some(rho_deflation(problem))
    };

    // Local blocks and system matrices by stencil length (ramped start).
    let mut locals: Vec<Option<(LocalHeatBlock, DMatrix<f64>)>> = vec![None; order + 1];
    let mut far = FarCache::new(dt, order);
    let mut hist = DensityHistory::new(n, 0.0);
    let mut report = SolveReport::default();

    for j in 1..=scheme.steps {
        let clock = Instant::now();
        let t = j as f64 * dt;
        let kj = order.min(j);
        if locals[kj].is_none() {
            let node_u: Vec<f64> = (0..=kj).map(|q| q as f64 * dt).collect();
            let block = build_local_block(&problem.heat, dt, &node_u)?;
            let mat = if implicit {
                fi_assemble(problem, &block)
            } else {
                let mut m = block.nu[0].clone();
                for i in 0..n {
                    m[(i, i)] += 0.5;
                }
                m
            };
            locals[kj] = Some((block, mat));
        }
        let (local, mat) = locals[kj].as_ref().expect("built above");

        let mut h_nu = DVector::zeros(n);
        let mut h_tau = DVector::zeros(n);
        far.extend_to(problem, j - 1)?;
        far.apply(j, &hist.mu, &mut h_nu, &mut h_tau);
        far.ramp_correction(problem, j, &hist.mu, &mut h_nu, &mut h_tau)?;
        for q in 1..=kj {
            let m = DVector::from_column_slice(&hist.mu[j - q]);
            h_nu.gemv(1.0, &local.nu[q], &m, 1.0);
            h_tau.gemv(1.0, &local.tau[q], &m, 1.0);
        }

        let g = data.data(t)?;
        let b1 = DVector::from_column_slice(&g.normal) - &h_tau;
        let b2 = -DVector::from_column_slice(&g.tangential) - &h_nu;

        let (rho, mu) = if implicit {
            let mut rhs = DVector::zeros(2 * n);
            rhs.rows_mut(0, n).copy_from(&b1);
            rhs.rows_mut(n, n).copy_from(&b2);
            report.flux_mean.push(weights.dot(&b1) / perimeter);
            let x = solve(mat, &rhs, deflation.as_ref(), cfg, &mut report)?;
            (x.rows(0, n).into_owned(), x.rows(n, n).into_owned())
        } else {
            // Predict μ_j by extrapolation through the previous levels.
            let kp = order.min(j);
            let past: Vec<f64> = (1..=kp).map(|q| (j - q) as f64 * dt).collect();
            let w = lagrange_weights(&past, t)?;
            let mut mu_pred = DVector::zeros(n);
            for (q, wq) in w.weights.iter().enumerate() {
                mu_pred.axpy(*wq, &DVector::from_column_slice(&hist.mu[j - 1 - q]), 1.0);
            }
            let rhs1 = &b1 - &local.tau[0] * &mu_pred;
            report.flux_mean.push(weights.dot(&rhs1) / perimeter);
            let rho = solve(&problem.neumann, &rhs1, deflation.as_ref(), cfg, &mut report)?;
            let rhs2 = &b2 + &problem.laplace.sl_tau * &rho;
            let mu = solve(mat, &rhs2, None, cfg, &mut report)?;
            (rho, mu)
        };
        hist.push(t, rho.as_slice().to_vec(), mu.as_slice().to_vec())?;
        hist.push_uniform_piece(order);
        report.step_seconds.push(clock.elapsed().as_secs_f64());
    }
    Ok(MarchOutcome {
        history: hist,
        report,
        t_final: scheme.t_final(),
    })
}
