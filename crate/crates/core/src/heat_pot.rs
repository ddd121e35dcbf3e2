//! Single-layer heat potential `S_H`: analytic product integration over the
//! most recent time piece (local blocks), direct evaluation of the history, and
//! interior `∇⊥S_H` evaluation.
//!
//! Throughout, `u = t − t'` is the elapsed time between evaluation and source
//! time, and a density piece is a polynomial in `u` obtained from Lagrange
//! interpolation of stored density values. The time integrals reduce to
//! `J_m = ∫ u^{m−2} e^{−a/u} du` with `a = r²/4`, which have closed forms in
//! the generalized exponential integrals.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::geom::{discretize_unchecked, hilbert_weights, kress_weights, BoundaryGrid, PairGeometry, SingularRule};
use crate::laplace_pot::{proximity_flags, FieldEval};
use crate::specfun::{exp_integral_en, gauss_legendre, lagrange_monomials, lagrange_weights, Nodes1D, UNDERFLOW_ARG};
use crate::{Error, Result, Vec2};

/// Highest supported interpolation degree of a density piece.
pub const MAX_DEGREE: usize = 4;

/// Which boundary derivative of `S_H` is taken at the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Normal,
    Tangential,
}

fn exp_neg(x: f64) -> f64 {
    if x > UNDERFLOW_ARG {
        0.0
    } else {
        (-x).exp()
    }
}

fn en(m: usize, c: f64) -> f64 {
    exp_integral_en(m, c).expect("positive argument")
}

/// `J_m = ∫_0^δ u^{m−2} e^{−a/u} du` for `m = 0..=mmax`, `a > 0`, `δ > 0`.
pub fn j_integrals_from_zero(a: f64, delta: f64, mmax: usize) -> Vec<f64> {
    let c = a / delta;
    let mut out = Vec::with_capacity(mmax + 1);
    out.push(exp_neg(c) / a);
    for m in 1..=mmax {
        out.push(delta.powi(m as i32 - 1) * en(m, c));
    }
    out
}

/// `J_m` over `[u_a, u_b]` with `0 ≤ u_a < u_b`.
pub fn j_integrals(a: f64, u_a: f64, u_b: f64, mmax: usize) -> Vec<f64> {
    let hi = j_integrals_from_zero(a, u_b, mmax);
    if u_a <= 0.0 {
        return hi;
    }
    let lo = j_integrals_from_zero(a, u_a, mmax);
    let mut out: Vec<f64> = hi.iter().zip(&lo).map(|(h, l)| h - l).collect();
    // e^{−a/u_b} − e^{−a/u_a} without cancellation.
    let cb = a / u_b;
    out[0] = if cb > UNDERFLOW_ARG {
        0.0
    } else {
        -(-cb).exp() * (-(a / u_a - cb)).exp_m1() / a
    };
    out
}

/// Closed-form stage integrals `I_j = ∫_0^{τ_i} e^{−a/u} (b+u)^j / u² du`,
/// `j = 0..=4`, for the product integration at intermediate stages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageIntegrals {
    pub r: f64,
    pub tau_i: f64,
    pub b: f64,
    pub a: f64,
    pub c: f64,
    pub values: [f64; 5],
}

fn check_stage_args(r: f64, tau_i: f64, dt_sub: f64) -> Result<()> {
    if !(r > 0.0) || !(tau_i > 0.0) || !(dt_sub >= tau_i) {
        return Err(Error::Domain(format!(
            "stage integrals need r > 0 and 0 < τ_i ≤ Δt, got r={r}, τ_i={tau_i}, Δt={dt_sub}"
        )));
    }
    Ok(())
}

/// Stage integrals via the binomial expansion of `(b+u)^j` into `J_m`.
pub fn stage_integrals(r: f64, tau_i: f64, dt_sub: f64) -> Result<StageIntegrals> {
    check_stage_args(r, tau_i, dt_sub)?;
    let a = 0.25 * r * r;
    let b = dt_sub - tau_i;
    let jm = j_integrals_from_zero(a, tau_i, 4);
    let mut values = [0.0; 5];
    for (j, v) in values.iter_mut().enumerate() {
        let mut binom = 1.0;
        for m in 0..=j {
            *v += binom * b.powi((j - m) as i32) * jm[m];
            binom = binom * (j - m) as f64 / (m + 1) as f64;
        }
    }
    Ok(StageIntegrals {
        r,
        tau_i,
        b,
        a,
        c: a / tau_i,
        values,
    })
}

/// The same integrals written out term by term in `e^{−c}` and `E1(c)`.
pub fn stage_integrals_closed_form(r: f64, tau_i: f64, dt_sub: f64) -> Result<StageIntegrals> {
    check_stage_args(r, tau_i, dt_sub)?;
    let a = 0.25 * r * r;
    let b = dt_sub - tau_i;
    let t = tau_i;
    let c = a / t;
    let ec = exp_neg(c);
    let e1 = en(1, c);
    let values = [
        4.0 / (r * r) * ec,
        e1 + b / a * ec,
        (t + b * b / a) * ec - e1 * (a - 2.0 * b),
        -0.5 * ec * (t * a - t * t - 6.0 * t * b - 2.0 * b.powi(3) / a)
            + 0.5 * e1 * (a * a - 6.0 * a * b + 6.0 * b * b),
        ec / 6.0 * (2.0 * t.powi(3) - t * t * (a - 12.0 * b) + t * (a - 6.0 * b).powi(2) + 6.0 * b.powi(4) / a)
            - e1 / 6.0 * (a.powi(3) - 12.0 * a * a * b + 36.0 * a * b * b - 24.0 * b.powi(3)),
    ];
    Ok(StageIntegrals {
        r,
        tau_i,
        b,
        a,
        c,
        values,
    })
}

/// Time-integrated kernel for one source/target pair:
/// `−proj/(8π) ∫_{u_a}^{u_b} e^{−r²/4u} P(u)/u² du` with `P(u) = Σ_m coeffs[m] u^m`,
/// where `proj` is `(x−y)·ν` or `(x−y)·τ`.
pub fn time_kernel(r2: f64, proj: f64, u_a: f64, u_b: f64, coeffs: &[f64]) -> f64 {
    let jm = j_integrals(0.25 * r2, u_a, u_b, coeffs.len().saturating_sub(1));
    -proj / (8.0 * PI) * coeffs.iter().zip(&jm).map(|(c, j)| c * j).sum::<f64>()
}

/// Monomial coefficients in `u` of the Lagrange basis through the given
/// node offsets `u_q = t − t_q`.
pub fn u_coefficients(node_u: &[f64]) -> Result<Vec<Vec<f64>>> {
    if node_u.is_empty() || node_u.len() > MAX_DEGREE + 1 {
        return Err(Error::Unsupported {
            what: "interpolation node count",
            value: node_u.len(),
            min: 1,
            max: MAX_DEGREE + 1,
        });
    }
    lagrange_monomials(node_u)
}

/// Dense operators multiplying each stencil node's density, for one time
/// piece: `nu[q]` and `tau[q]` realize the normal and tangential derivative
/// contributions of node `q`.
#[derive(Debug, Clone)]
pub struct LocalHeatBlock {
    pub nu: Vec<DMatrix<f64>>,
    pub tau: Vec<DMatrix<f64>>,
}

impl LocalHeatBlock {
    fn zeros(n: usize, nodes: usize) -> Self {
        Self {
            nu: vec![DMatrix::zeros(n, n); nodes],
            tau: vec![DMatrix::zeros(n, n); nodes],
        }
    }

    pub fn component(&self, comp: Component) -> &[DMatrix<f64>] {
        match comp {
            Component::Normal => &self.nu,
            Component::Tangential => &self.tau,
        }
    }

    fn axpy(&mut self, alpha: f64, other: &LocalHeatBlock) {
        for (a, b) in self.nu.iter_mut().zip(&other.nu) {
            *a += b * alpha;
        }
        for (a, b) in self.tau.iter_mut().zip(&other.tau) {
            *a += b * alpha;
        }
    }
}

/// Grid-dependent data shared by all heat-potential blocks.
#[derive(Debug, Clone)]
pub struct HeatContext {
    pub grid: BoundaryGrid,
    pub pairs: PairGeometry,
    gauss: Nodes1D<f64>,
    hmax: f64,
    upsampled: Vec<OnceLock<Upsampled>>,
    min_upsample_slot: usize,
    /// Pieces starting at `u_a ≥ far_threshold` are resolved by the plain
    /// trapezoid rule in space.
    pub far_threshold: f64,
}

/// Trapezoid aliasing error for a Gaussian of variance `2u` sampled at
/// spacing `h` behaves like `exp(−4π²u/h²)`; this keeps it below 1e−16.
const FAR_FACTOR: f64 = 1.0;

impl HeatContext {
    pub fn new(grid: BoundaryGrid, rule: SingularRule, gauss_points: usize) -> Result<Self> {
        let SingularRule::Kress = rule;
        let hmax = grid.speeds.iter().cloned().fold(0.0, f64::max) * grid.h();
        Ok(Self {
            pairs: PairGeometry::new(&grid),
            hmax,
            upsampled: (0..UPSAMPLE_FACTORS.len()).map(|_| OnceLock::new()).collect(),
            min_upsample_slot: 0,
            grid,
            gauss: gauss_legendre(gauss_points)?,
            far_threshold: FAR_FACTOR * hmax * hmax,
        })
    }

    pub fn gauss_points(&self) -> usize {
        self.gauss.len()
    }

    /// Forces local blocks to use at least `m`-fold boundary upsampling
    /// (`m` a power of two up to 32).
    pub fn with_min_upsample(mut self, m: usize) -> Result<Self> {
        self.min_upsample_slot = UPSAMPLE_FACTORS.iter().position(|&f| f == m).ok_or(Error::Unsupported {
            what: "upsampling factor",
            value: m,
            min: 1,
            max: 32,
        })?;
        Ok(self)
    }
}

/// `−(−c)^{m−1}/(m−1)!`, the coefficient of `ln c` in `E_m(c)`.
fn log_coefficient(m: usize, c: f64) -> f64 {
    let mut v = -1.0;
    for k in 1..m {
        v *= -c / k as f64;
    }
    v
}

/// Smooth cut-off `e^{−c} Σ_{n≤12} cⁿ/n!`, equal to `1 − O(c^{13})` at the
/// origin and decaying for large `c`.
fn window(c: f64) -> f64 {
    if c > UNDERFLOW_ARG {
        return 0.0;
    }
    let mut term = 1.0;
    let mut sum = 1.0;
    for n in 1..=12 {
        term *= c / n as f64;
        sum += term;
    }
    (-c).exp() * sum
}

/// Local block for the piece `u ∈ [0, δ]` with stencil offsets `node_u`.
pub fn build_local_block(ctx: &HeatContext, delta: f64, node_u: &[f64]) -> Result<LocalHeatBlock> {
    if !(delta > 0.0) {
        return Err(Error::Domain(format!("local piece length {delta} must be > 0")));
    }
    let coeffs = u_coefficients(node_u)?;
    Ok(singular_block(ctx, delta, &coeffs))
}

/// Boundary resampled `m` times more finely, used to resolve local kernels
/// whose Gaussian width `√δ` falls below the node spacing.
#[derive(Debug, Clone)]
struct Upsampled {
    m: usize,
    fine: BoundaryGrid,
    kress: Vec<f64>,
    hilbert: Vec<f64>,
    /// Trigonometric interpolation from the base nodes to the fine nodes
    /// (`None` when `m = 1`).
    interp: Option<DMatrix<f64>>,
}

impl Upsampled {
    fn new(grid: &BoundaryGrid, m: usize) -> Self {
        let n = grid.n;
        let nf = n * m;
        let fine = discretize_unchecked(grid.spec, nf).expect("validated curve");
        let interp = (m > 1).then(|| {
            let hf = fine.h();
            // Periodic interpolation kernel (Nyquist mode split evenly).
            let kern: Vec<f64> = (0..nf)
                .map(|d| {
                    let x = d as f64 * hf;
                    let mut v = 1.0 + ((n / 2) as f64 * x).cos();
                    for k in 1..n / 2 {
                        v += 2.0 * (k as f64 * x).cos();
                    }
                    v / n as f64
                })
                .collect();
            DMatrix::from_fn(nf, n, |p, j| kern[(p + nf - m * j) % nf])
        });
        Self {
            m,
            kress: kress_weights(nf),
            hilbert: hilbert_weights(nf),
            fine,
            interp,
        }
    }
}

/// Upsampling factors available to local blocks.
const UPSAMPLE_FACTORS: [usize; 6] = [1, 2, 4, 8, 16, 32];

/// Local blocks are built on a grid whose squared spacing is at most
/// `δ / RESOLUTION`; the empirical error is below 1e−12 at this ratio.
const RESOLUTION: f64 = 25.0;

impl HeatContext {
    fn upsampled(&self, delta: f64) -> &Upsampled {
        let need = self.hmax * (RESOLUTION / delta).sqrt();
        let slot = UPSAMPLE_FACTORS
            .iter()
            .position(|&m| m as f64 >= need)
            .unwrap_or(UPSAMPLE_FACTORS.len() - 1)
            .max(self.min_upsample_slot);
        self.upsampled[slot].get_or_init(|| Upsampled::new(&self.grid, UPSAMPLE_FACTORS[slot]))
    }
}

fn singular_block(ctx: &HeatContext, delta: f64, coeffs: &[Vec<f64>]) -> LocalHeatBlock {
    let grid = &ctx.grid;
    let up = ctx.upsampled(delta);
    let fine = &up.fine;
    let m = up.m;
    let n = grid.n;
    let nf = fine.n;
    let nq = coeffs.len();
    let mmax = coeffs[0].len() - 1;
    let h = fine.h();
    // Row-wise computation over the fine sources; each row holds (nu, tau)
    // entries for every q.
    let rows: Vec<Vec<[f64; 2]>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let fi = m * i;
            let x = grid.nodes[i];
            let (nu, tau) = (grid.normals[i], grid.tangents[i]);
            let mut row = vec![[0.0; 2]; nq * nf];
            for p in 0..nf {
                let d = fi.abs_diff(p);
                let hil = up.hilbert[(fi + nf - p) % nf];
                if p == fi {
                    for (q, cq) in coeffs.iter().enumerate() {
                        row[q * nf + p] = [
                            -h * cq[0] * grid.curvature[i] * grid.speeds[i] / (4.0 * PI),
                            h * cq[0] * grid.dspeeds[i] / (4.0 * PI * grid.speeds[i]) - 0.5 * cq[0] * hil,
                        ];
                    }
                    continue;
                }
                let sp = fine.speeds[p];
                let y = fine.nodes[p];
                let (dx, dy) = (x[0] - y[0], x[1] - y[1]);
                let r2 = dx * dx + dy * dy;
                let a = 0.25 * r2;
                let c = a / delta;
                let jm = j_integrals_from_zero(a, delta, mmax);
                let w = window(c);
                let logc: Vec<f64> = (0..=mmax)
                    .map(|k| if k == 0 { 0.0 } else { delta.powi(k as i32 - 1) * w * log_coefficient(k, c) })
                    .collect();
                let half = 0.5 * (grid.params[i] - fine.params[p]);
                let ls = (4.0 * half.sin().powi(2)).ln();
                let rw = up.kress[d];
                let cot = half.cos() / half.sin();
                let fnu = -(dx * nu[0] + dy * nu[1]) * sp / (8.0 * PI);
                let ftau = -(dx * tau[0] + dy * tau[1]) * sp / (8.0 * PI);
                for (q, cq) in coeffs.iter().enumerate() {
                    let s: f64 = cq.iter().zip(&jm).map(|(c, j)| c * j).sum();
                    let l: f64 = cq.iter().zip(&logc).map(|(c, j)| c * j).sum();
                    let (k1n, k1t) = (fnu * l, ftau * l);
                    let k2n = fnu * s - k1n * ls;
                    let k2t = ftau * s + cq[0] * cot / (4.0 * PI) - k1t * ls;
                    row[q * nf + p] = [rw * k1n + h * k2n, rw * k1t + h * k2t - 0.5 * cq[0] * hil];
                }
            }
            row
        })
        .collect();
    let mut block = LocalHeatBlock::zeros(n, nq);
    for q in 0..nq {
        let rn = DMatrix::from_fn(n, nf, |i, p| rows[i][q * nf + p][0]);
        let rt = DMatrix::from_fn(n, nf, |i, p| rows[i][q * nf + p][1]);
        match &up.interp {
            Some(interp) => {
                block.nu[q] = rn * interp;
                block.tau[q] = rt * interp;
            }
            None => {
                block.nu[q] = rn;
                block.tau[q] = rt;
            }
        }
    }
    block
}

/// Graded sub-intervals of `[u_a, u_b]` with ratio at most 2 (`u_a > 0`).
fn graded_pieces(u_a: f64, u_b: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut lo = u_a;
    while lo < u_b {
        let hi = (2.0 * lo).min(u_b);
        // Avoid a sliver at the end.
        let hi = if u_b - hi < 0.25 * (hi - lo) { u_b } else { hi };
        out.push((lo, hi));
        lo = hi;
    }
    out
}

/// Block for a piece `[u_a, u_b]` of the history with stencil offsets
/// `node_u`. Pieces touching or close to `u = 0` are integrated analytically in
/// time with singular spatial quadrature; the others use graded Gauss–Legendre
/// in time and the trapezoid rule in space.
pub fn build_piece_block(ctx: &HeatContext, u_a: f64, u_b: f64, node_u: &[f64]) -> Result<LocalHeatBlock> {
    if !(u_a >= 0.0 && u_b > u_a) {
        return Err(Error::Domain(format!("invalid piece [{u_a}, {u_b}]")));
    }
    let coeffs = u_coefficients(node_u)?;
    if u_a == 0.0 {
        return Ok(singular_block(ctx, u_b, &coeffs));
    }
    if u_a < ctx.far_threshold {
        let mut block = singular_block(ctx, u_b, &coeffs);
        block.axpy(-1.0, &singular_block(ctx, u_a, &coeffs));
        return Ok(block);
    }
    Ok(far_block(ctx, u_a, u_b, node_u))
}

fn far_block(ctx: &HeatContext, u_a: f64, u_b: f64, node_u: &[f64]) -> LocalHeatBlock {
    let grid = &ctx.grid;
    let pairs = &ctx.pairs;
    let n = grid.n;
    let nq = node_u.len();
    let h = grid.h();
    let mut tnodes = Vec::new();
    for (lo, hi) in graded_pieces(u_a, u_b) {
        let g = ctx.gauss.mapped((-1.0, 1.0), lo, hi);
        for (&u, &w) in g.points.iter().zip(&g.weights) {
            let lw = lagrange_weights(node_u, u).expect("distinct nodes");
            tnodes.push((u, w, lw.weights));
        }
    }
    let rows: Vec<Vec<[f64; 2]>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![[0.0; 2]; nq * n];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let k = pairs.idx(i, j);
                let sc = -h * grid.speeds[j] / (8.0 * PI);
                for (u, w, lw) in &tnodes {
                    let e = exp_neg(0.25 * pairs.r2[k] / u);
                    if e == 0.0 {
                        continue;
                    }
                    let f = sc * w * e / (u * u);
                    for q in 0..nq {
                        row[q * n + j][0] += f * lw[q] * pairs.dnu[k];
                        row[q * n + j][1] += f * lw[q] * pairs.dtau[k];
                    }
                }
            }
            row
        })
        .collect();
    let mut block = LocalHeatBlock::zeros(n, nq);
    for (i, row) in rows.iter().enumerate() {
        for q in 0..nq {
            for j in 0..n {
                block.nu[q][(i, j)] = row[q * n + j][0];
                block.tau[q][(i, j)] = row[q * n + j][1];
            }
        }
    }
    block
}

/// One polynomial piece of a density history: `[start, end]` with the
/// interpolation stencil given as indices into the history's time list.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryPiece {
    pub start: f64,
    pub end: f64,
    pub nodes: Vec<usize>,
}

/// Time-indexed pressure- and vortex-source densities.
#[derive(Debug, Clone, Default)]
pub struct DensityHistory {
    pub times: Vec<f64>,
    pub rho: Vec<Vec<f64>>,
    pub mu: Vec<Vec<f64>>,
    pub pieces: Vec<HistoryPiece>,
}

impl DensityHistory {
    /// History starting from zero densities at `t0`.
    pub fn new(n: usize, t0: f64) -> Self {
        Self {
            times: vec![t0],
            rho: vec![vec![0.0; n]],
            mu: vec![vec![0.0; n]],
            pieces: Vec::new(),
        }
    }

    /// Appends a time level; times must increase strictly.
    pub fn push(&mut self, t: f64, rho: Vec<f64>, mu: Vec<f64>) -> Result<usize> {
        if let Some(&last) = self.times.last() {
            if !(t > last) {
                return Err(Error::Domain(format!("history time {t} not after {last}")));
            }
        }
        self.times.push(t);
        self.rho.push(rho);
        self.mu.push(mu);
        Ok(self.times.len() - 1)
    }

    /// Adds a piece between the last two levels with a backward stencil of
    /// at most `order + 1` nodes.
    pub fn push_uniform_piece(&mut self, order: usize) {
        let last = self.times.len() - 1;
        let lo = last.saturating_sub(order);
        self.pieces.push(HistoryPiece {
            start: self.times[last - 1],
            end: self.times[last],
            nodes: (lo..=last).rev().collect(),
        });
    }

    /// The vortex-source polynomial of `piece` evaluated at time `t`.
    pub fn mu_at(&self, piece: &HistoryPiece, t: f64) -> Vec<f64> {
        let nodes: Vec<f64> = piece.nodes.iter().map(|&g| self.times[g]).collect();
        let w = lagrange_weights(&nodes, t).expect("distinct history nodes");
        let n = self.mu[0].len();
        let mut out = vec![0.0; n];
        for (q, &g) in piece.nodes.iter().enumerate() {
            for (o, v) in out.iter_mut().zip(&self.mu[g]) {
                *o += w.weights[q] * v;
            }
        }
        out
    }
}

/// Direct evaluation of the boundary derivative of `S_H` at time `t` from
/// every history piece ending at or before `t − far_gap`.
///
/// Time integration uses graded Gauss–Legendre sub-intervals, space the
/// trapezoid rule; accurate when the pieces are far from `u = 0` relative to
/// the squared node spacing.
pub fn history_apply(ctx: &HeatContext, hist: &DensityHistory, t: f64, comp: Component, far_gap: f64) -> Result<Vec<f64>> {
    let pieces: Vec<&HistoryPiece> = hist.pieces.iter().filter(|p| p.end <= t - far_gap).collect();
    let [nu, tau] = pieces_apply(ctx, hist, &pieces, t)?;
    Ok(match comp {
        Component::Normal => nu,
        Component::Tangential => tau,
    })
}

/// Normal and tangential boundary derivatives of `S_H` at time `t` from the
/// given pieces (all strictly in the past), by direct quadrature as in
/// [`history_apply`].
pub fn pieces_apply(ctx: &HeatContext, hist: &DensityHistory, pieces: &[&HistoryPiece], t: f64) -> Result<[Vec<f64>; 2]> {
    let grid = &ctx.grid;
    let n = grid.n;
    let h = grid.h();
    let mut tnodes: Vec<(f64, f64, Vec<f64>)> = Vec::new();
    for piece in pieces {
        let u_a = t - piece.end;
        if !(u_a > 0.0) {
            return Err(Error::Domain("history piece touches the evaluation time".into()));
        }
        for (lo, hi) in graded_pieces(u_a, t - piece.start) {
            let g = ctx.gauss.mapped((-1.0, 1.0), lo, hi);
            for (&u, &w) in g.points.iter().zip(&g.weights) {
                let dens: Vec<f64> = hist.mu_at(piece, t - u).iter().zip(&grid.speeds).map(|(m, j)| m * j).collect();
                tnodes.push((u, w, dens));
            }
        }
    }
    let pairs = &ctx.pairs;
    let rows: Vec<[f64; 2]> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = [0.0, 0.0];
            for (u, w, dens) in &tnodes {
                let inv = 0.25 / u;
                let (mut s_nu, mut s_tau) = (0.0, 0.0);
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    let k = i * n + j;
                    let e = exp_neg(pairs.r2[k] * inv) * dens[j];
                    s_nu += pairs.dnu[k] * e;
                    s_tau += pairs.dtau[k] * e;
                }
                let f = w / (u * u);
                acc[0] += f * s_nu;
                acc[1] += f * s_tau;
            }
            [-h * acc[0] / (8.0 * PI), -h * acc[1] / (8.0 * PI)]
        })
        .collect();
    Ok([rows.iter().map(|r| r[0]).collect(), rows.iter().map(|r| r[1]).collect()])
}

/// `∇⊥S_H[μ](x, t)` at interior targets, integrating every history piece
/// exactly in time and with the trapezoid rule in space.
pub fn perp_grad_shp_eval(grid: &BoundaryGrid, hist: &DensityHistory, targets: &[Vec2], t: f64) -> Result<FieldEval> {
    let pieces: Vec<&HistoryPiece> = hist.pieces.iter().filter(|p| p.end <= t + 1e-14 * t.abs().max(1.0)).collect();
    let mut piece_data = Vec::with_capacity(pieces.len());
    for p in &pieces {
        let node_u: Vec<f64> = p.nodes.iter().map(|&g| t - hist.times[g]).collect();
        let coeffs = u_coefficients(&node_u)?;
        piece_data.push(((t - p.end).max(0.0), t - p.start, coeffs, &p.nodes));
    }
    let values = targets
        .par_iter()
        .map(|&x| {
            let mut v = [0.0, 0.0];
            for j in 0..grid.n {
                let y = grid.nodes[j];
                let (dx, dy) = (x[0] - y[0], x[1] - y[1]);
                let a = 0.25 * (dx * dx + dy * dy);
                let mut s = 0.0;
                for (u_a, u_b, coeffs, nodes) in &piece_data {
                    let jm = j_integrals(a, *u_a, *u_b, coeffs[0].len() - 1);
                    for (q, &g) in nodes.iter().enumerate() {
                        let ker: f64 = coeffs[q].iter().zip(&jm).map(|(c, j)| c * j).sum();
                        s += ker * hist.mu[g][j];
                    }
                }
                let f = s * grid.quad_weights[j] / (8.0 * PI);
                v[0] -= dy * f;
                v[1] += dx * f;
            }
            v
        })
        .collect();
    Ok(FieldEval {
        values,
        too_close: proximity_flags(grid, targets),
    })
}

/// Applies `Σ_q blocks[q]·densities[q]`.
pub fn apply_block(mats: &[DMatrix<f64>], densities: &[&[f64]]) -> Vec<f64> {
    let n = mats[0].nrows();
    let mut out = DVector::zeros(n);
    for (m, d) in mats.iter().zip(densities) {
        out.gemv(1.0, m, &DVector::from_column_slice(d), 1.0);
    }
    out.as_slice().to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{discretize, CurveSpec};

    #[test]
    fn j_difference_matches_direct() {
        let a = 0.01;
        let d = j_integrals(a, 0.02, 0.05, 3);
        let hi = j_integrals_from_zero(a, 0.05, 3);
        let lo = j_integrals_from_zero(a, 0.02, 3);
        for m in 0..4 {
            assert!((d[m] - (hi[m] - lo[m])).abs() < 1e-12 * hi[m].abs());
        }
    }

    #[test]
    fn closed_form_agrees_with_expansion() {
        for &r in &[0.01, 0.1, 1.0] {
            for &f in &[0.2, 1.0] {
                let a = stage_integrals(r, 0.1 * f, 0.1).unwrap();
                let b = stage_integrals_closed_form(r, 0.1 * f, 0.1).unwrap();
                for j in 0..5 {
                    let scale = a.values[j].abs().max(1e-300);
                    assert!((a.values[j] - b.values[j]).abs() <= 1e-9 * scale, "r={r} f={f} j={j}");
                }
            }
        }
        assert!(stage_integrals(0.0, 0.1, 0.1).is_err());
        assert!(stage_integrals(0.1, 0.0, 0.1).is_err());
    }

    #[test]
    fn window_and_log_coefficients() {
        assert!((window(1e-3) - 1.0).abs() < 1e-15);
        assert!(window(200.0) < 1e-60);
        assert_eq!(log_coefficient(1, 0.3), -1.0);
        assert!((log_coefficient(3, 0.3) + 0.045).abs() < 1e-16);
    }

    #[test]
    fn graded_pieces_cover_interval() {
        let p = graded_pieces(0.1, 3.0);
        assert_eq!(p.first().unwrap().0, 0.1);
        assert_eq!(p.last().unwrap().1, 3.0);
        assert!(p.iter().all(|(a, b)| b / a <= 2.0 + 1e-12));
    }

    #[test]
    fn local_tau_block_annihilates_constants_on_circle() {
        let g = discretize(CurveSpec::Circle { r: 0.6 }, 64).unwrap();
        let ctx = HeatContext::new(g, SingularRule::Kress, 8).unwrap();
        let b = build_local_block(&ctx, 0.05, &[0.0, 0.05]).unwrap();
        let ones = DVector::from_element(64, 1.0);
        let v = &b.tau[0] * &ones;
        assert!(v.amax() < 1e-12);
    }
}
