//! Spectral deferred correction driven by PC(2) on the right Gauss–Radau
//! substeps of each interval `[α, β]`.
//!
//! The base sweep marches PC(2) through the stages `α = τ_0 < τ_1 < … < τ_k = β`
//! (quadratic substep pieces, whose stencils may reach back into the previous
//! interval). Each correction sweep evaluates the residuals of the boundary
//! equations for the degree-`(k−1)` stage interpolant, solves the same
//! equations for the correction `δ` with PC(2) (`δ = 0` at `α`), and adds it to
//! the stage values. In the correction solves the prediction of `δ` is zero
//! rather than extrapolated (see `Predict`).
//!
//! A finished interval enters the history as its stage interpolant. With zero
//! sweeps it enters as its quadratic substep pieces instead, so that the run is
//! exactly PC(2) on the Radau time ladder.

use std::collections::HashMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::linsys::{solve, Deflation, SolveCfg};
use super::march::rho_deflation;
use super::{DataSource, MarchOutcome, Problem, SchemeKind, SolveReport, TimeScheme};
use crate::heat_pot::{build_local_block, build_piece_block, pieces_apply, DensityHistory, HistoryPiece, LocalHeatBlock};
use crate::specfun::{lagrange_weights, radau_right_nodes};
use crate::testbed::BoundaryData;
use crate::{Error, Result};

type Pair = (DVector<f64>, DVector<f64>);

/// Predictor for `μ` at the current stage in the ρ-equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Predict {
    /// Quadratic extrapolation through the previous stages (plain PC(2)).
    Extrapolate,
    /// Zero, i.e. the previous sweep's value when solving for a correction.
    ///
    /// Extrapolating the correction is unstable here: the map from a
    /// prediction error in `μ` to the error of the corrected `μ` has spectral
    /// radius close to one, so extrapolation amplifies the sweep-to-sweep
    /// noise in `δ` instead of damping it.
    Previous,
}

/// Offsets rounded to a fixed fraction of the interval, used as cache keys
/// for blocks that recur in every interval.
fn offset_key(values: &[f64], dt: f64) -> Vec<i64> {
    values.iter().map(|v| (v / dt * 2f64.powi(40)).round() as i64).collect()
}

struct Engine<'a> {
    problem: &'a Problem,
    dt: f64,
    /// Stage fractions `θ_0 = 0, θ_1, …, θ_k = 1`.
    theta: Vec<f64>,
    cfg: SolveCfg,
    deflation: Deflation,
    substep: HashMap<(usize, usize, isize), LocalHeatBlock>,
    systems: HashMap<(usize, isize), DMatrix<f64>>,
    stage_poly: HashMap<usize, LocalHeatBlock>,
    near: HashMap<Vec<i64>, LocalHeatBlock>,
}

impl<'a> Engine<'a> {
    fn stages(&self) -> usize {
        self.theta.len() - 1
    }

    /// Local time of stage `p` relative to `α`; `p = −1` is the second-last
    /// stage of the previous interval.
    fn local_time(&self, p: isize) -> f64 {
        if p >= 0 {
            self.theta[p as usize] * self.dt
        } else {
            (self.theta[self.stages() - 1] - 1.0) * self.dt
        }
    }

    /// Stencil of substep piece `p` (`[τ_{p−1}, τ_p]`), clipped at `lo`.
    fn stencil(p: usize, lo: isize) -> Vec<isize> {
        let p = p as isize;
        (p - 2..=p).rev().filter(|&g| g >= lo).collect()
    }

    /// Block of substep piece `p` seen from stage `l ≥ p`.
    fn substep_block(&mut self, l: usize, p: usize, lo: isize) -> Result<&LocalHeatBlock> {
        if !self.substep.contains_key(&(l, p, lo)) {
            let tl = self.local_time(l as isize);
            let node_u: Vec<f64> = Self::stencil(p, lo).iter().map(|&g| tl - self.local_time(g)).collect();
            let u_a = tl - self.local_time(p as isize);
            let u_b = tl - self.local_time(p as isize - 1);
            let block = if l == p {
                build_local_block(&self.problem.heat, u_b, &node_u)?
            } else {
                build_piece_block(&self.problem.heat, u_a, u_b, &node_u)?
            };
            self.substep.insert((l, p, lo), block);
        }
        Ok(&self.substep[&(l, p, lo)])
    }

    /// `½I + A_ν0` of the local substep piece at stage `l`.
    fn system(&mut self, l: usize, lo: isize) -> Result<&DMatrix<f64>> {
        if !self.systems.contains_key(&(l, lo)) {
            let mut m = self.substep_block(l, l, lo)?.nu[0].clone();
            for i in 0..m.nrows() {
                m[(i, i)] += 0.5;
            }
            self.systems.insert((l, lo), m);
        }
        Ok(&self.systems[&(l, lo)])
    }

    /// PC(2) through the stages with the fixed right-hand sides `b1`, `b2`
    /// (indexed by stage, entry 0 unused). `known[g − lo]` holds `μ` at the
    /// stages `lo ≤ g ≤ 0`.
    fn substep_pc2(
        &mut self,
        lo: isize,
        known: Vec<DVector<f64>>,
        b1: &[DVector<f64>],
        b2: &[DVector<f64>],
        report: &mut SolveReport,
        mode: Predict,
    ) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
        let k = self.stages();
        let n = self.problem.n();
        let mut mu = known;
        let mut rho = vec![DVector::zeros(n)];
        let mut fluxes = Vec::new();
        let at = |g: isize| (g - lo) as usize;
        for l in 1..=k {
            let mut f_nu = DVector::zeros(n);
            let mut f_tau = DVector::zeros(n);
            for p in 1..=l {
                let nodes = Self::stencil(p, lo);
                let block = self.substep_block(l, p, lo)?;
                for (q, &g) in nodes.iter().enumerate() {
                    if g == l as isize {
                        continue;
                    }
                    f_nu.gemv(1.0, &block.nu[q], &mu[at(g)], 1.0);
                    f_tau.gemv(1.0, &block.tau[q], &mu[at(g)], 1.0);
                }
            }
            let mut mu_pred = DVector::zeros(n);
            if mode == Predict::Extrapolate {
                // Extrapolated current value from up to two previous stages.
                let past: Vec<isize> = (l as isize - 2..l as isize).rev().filter(|&g| g >= lo).collect();
                let times: Vec<f64> = past.iter().map(|&g| self.local_time(g)).collect();
                let w = lagrange_weights(&times, self.local_time(l as isize))?;
                for (wq, &g) in w.weights.iter().zip(&past) {
                    mu_pred.axpy(*wq, &mu[at(g)], 1.0);
                }
            }
            let a_tau0 = &self.substep_block(l, l, lo)?.tau[0];
            let rhs1 = &b1[l] - &f_tau - a_tau0 * &mu_pred;
            fluxes.push(rhs1.dot(&DVector::from_column_slice(&self.problem.grid().quad_weights)));
            let rho_l = solve(&self.problem.neumann, &rhs1, Some(&self.deflation), self.cfg, report)?;
            let rhs2 = &b2[l] - &f_nu + &self.problem.laplace.sl_tau * &rho_l;
            let cfg = self.cfg;
            let mu_l = solve(self.system(l, lo)?, &rhs2, None, cfg, report)?;
            rho.push(rho_l);
            mu.push(mu_l);
        }
        if mode == Predict::Extrapolate {
            let perimeter = self.problem.grid().perimeter();
            report.flux_mean.extend(fluxes.iter().map(|f| f / perimeter));
        }
        let mu_stages = mu.split_off(at(0));
        Ok((rho, mu_stages))
    }

    /// Local block of the stage interpolant over `[α, τ_i]`.
    fn stage_block(&mut self, i: usize) -> Result<&LocalHeatBlock> {
        if !self.stage_poly.contains_key(&i) {
            let k = self.stages();
            let ti = self.theta[i] * self.dt;
            let node_u: Vec<f64> = (1..=k).map(|q| ti - self.theta[q] * self.dt).collect();
            let block = build_local_block(&self.problem.heat, ti, &node_u)?;
            self.stage_poly.insert(i, block);
        }
        Ok(&self.stage_poly[&i])
    }

    /// `S_Hν`, `S_Hτ` at `t` of every stored piece (all end before `t`).
    fn past(&mut self, hist: &DensityHistory, t: f64) -> Result<Pair> {
        let n = self.problem.n();
        let threshold = self.problem.heat.far_threshold;
        let mut far: Vec<&HistoryPiece> = Vec::new();
        let mut nu = DVector::zeros(n);
        let mut tau = DVector::zeros(n);
        for piece in &hist.pieces {
            let u_a = t - piece.end;
            if u_a >= threshold {
                far.push(piece);
                continue;
            }
            let u_b = t - piece.start;
            let node_u: Vec<f64> = piece.nodes.iter().map(|&g| t - hist.times[g]).collect();
            let mut key = offset_key(&[u_a, u_b], self.dt);
            key.extend(offset_key(&node_u, self.dt));
            if !self.near.contains_key(&key) {
                let block = build_piece_block(&self.problem.heat, u_a, u_b, &node_u)?;
                self.near.insert(key.clone(), block);
            }
            let block = &self.near[&key];
            for (q, &g) in piece.nodes.iter().enumerate() {
                let m = DVector::from_column_slice(&hist.mu[g]);
                nu.gemv(1.0, &block.nu[q], &m, 1.0);
                tau.gemv(1.0, &block.tau[q], &m, 1.0);
            }
        }
        let [f_nu, f_tau] = pieces_apply(&self.problem.heat, hist, &far, t)?;
        nu += DVector::from_vec(f_nu);
        tau += DVector::from_vec(f_tau);
        Ok((nu, tau))
    }
}

/// SDC march (`sweeps = 0` gives PC(2) on the Radau ladder).
pub fn march_sdc(problem: &Problem, scheme: &TimeScheme, data: &dyn DataSource) -> Result<MarchOutcome> {
    scheme.validate()?;
    let SchemeKind::Sdc { stages: k, sweeps } = scheme.kind else {
        return Err(Error::Config("march_sdc handles only SDC schemes".into()));
    };
    let n = problem.n();
    let dt = scheme.dt;
    let radau = radau_right_nodes::<f64>(k)?;
    let mut theta = vec![0.0];
    theta.extend(radau.points.iter().copied());
    theta[k] = 1.0;
    let mut eng = Engine {
        problem,
        dt,
        theta,
        cfg: SolveCfg {
            tol: scheme.gmres_tol,
            maxit: scheme.gmres_maxit,
        },
        deflation: rho_deflation(problem),
        substep: HashMap::new(),
        systems: HashMap::new(),
        stage_poly: HashMap::new(),
        near: HashMap::new(),
    };
    let mut hist = DensityHistory::new(n, 0.0);
    let mut report = SolveReport::default();
    let half = DMatrix::<f64>::identity(n, n) * 0.5;

    for interval in 0..scheme.steps {
        let clock = Instant::now();
        let times: Vec<f64> = (0..=k).map(|i| (interval as f64 + eng.theta[i]) * dt).collect();
        let mut g: Vec<BoundaryData> = Vec::with_capacity(k + 1);
        let mut past: Vec<Pair> = Vec::with_capacity(k + 1);
        g.push(BoundaryData {
            normal: Vec::new(),
            tangential: Vec::new(),
        });
        past.push((DVector::zeros(0), DVector::zeros(0)));
        for &t in &times[1..] {
            g.push(data.data(t)?);
            past.push(eng.past(&hist, t)?);
        }
        let gn = |i: usize| DVector::from_column_slice(&g[i].normal);
        let gt = |i: usize| DVector::from_column_slice(&g[i].tangential);

        // Base sweep.
        let last = hist.times.len() - 1;
        let (lo, known) = if interval == 0 {
            (0, vec![DVector::from_column_slice(&hist.mu[last])])
        } else {
            (
                -1,
                vec![
                    DVector::from_column_slice(&hist.mu[last - 1]),
                    DVector::from_column_slice(&hist.mu[last]),
                ],
            )
        };
        let mut b1 = vec![DVector::zeros(0)];
        let mut b2 = vec![DVector::zeros(0)];
        for i in 1..=k {
            b1.push(gn(i) - &past[i].1);
            b2.push(-gt(i) - &past[i].0);
        }
        let (mut rho, mut mu) = eng.substep_pc2(lo, known, &b1, &b2, &mut report, Predict::Extrapolate)?;

        for _ in 0..sweeps {
            let mut r1 = vec![DVector::zeros(0)];
            let mut r2 = vec![DVector::zeros(0)];
            for i in 1..=k {
                let mut s_nu = past[i].0.clone();
                let mut s_tau = past[i].1.clone();
                let block = eng.stage_block(i)?;
                for (q, b) in (1..=k).enumerate() {
                    s_nu.gemv(1.0, &block.nu[q], &mu[b], 1.0);
                    s_tau.gemv(1.0, &block.tau[q], &mu[b], 1.0);
                }
                r1.push(gn(i) - &problem.neumann * &rho[i] - s_tau);
                r2.push(-gt(i) + &problem.laplace.sl_tau * &rho[i] - &half * &mu[i] - s_nu);
            }
            let (d_rho, d_mu) = eng.substep_pc2(0, vec![DVector::zeros(n)], &r1, &r2, &mut report, Predict::Previous)?;
            for i in 1..=k {
                rho[i] += &d_rho[i];
                mu[i] += &d_mu[i];
            }
        }

        let first = hist.times.len();
        for i in 1..=k {
            hist.push(times[i], rho[i].as_slice().to_vec(), mu[i].as_slice().to_vec())?;
            if sweeps == 0 {
                let base = first as isize - 1;
                hist.pieces.push(HistoryPiece {
                    start: times[i - 1],
                    end: times[i],
                    nodes: Engine::stencil(i, lo).iter().map(|&g| (base + g) as usize).collect(),
                });
            }
        }
        if sweeps > 0 {
            hist.pieces.push(HistoryPiece {
                start: times[0],
                end: times[k],
                nodes: (first..first + k).collect(),
            });
        }
        report.step_seconds.push(clock.elapsed().as_secs_f64());
    }
    Ok(MarchOutcome {
        history: hist,
        report,
        t_final: scheme.t_final(),
    })
}
