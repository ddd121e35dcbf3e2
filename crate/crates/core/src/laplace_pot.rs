//! Harmonic single-layer operator `S_L`, its normal and tangential boundary
//! derivatives `S_Lν`, `S_Lτ`, and interior gradient evaluation.
//!
//! The `±½` jump terms are not stored; callers add them at assembly.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::geom::{hilbert_matrix, log_singular_matrix, BoundaryGrid, PairGeometry, SingularRule};
use crate::Vec2;

/// Dense Nyström matrices of the three Laplace operators on a grid.
#[derive(Debug, Clone)]
pub struct LaplaceOps {
    pub sl: DMatrix<f64>,
    pub sl_nu: DMatrix<f64>,
    pub sl_tau: DMatrix<f64>,
}

pub fn build_laplace_ops(grid: &BoundaryGrid, pairs: &PairGeometry, rule: SingularRule) -> LaplaceOps {
    let n = grid.n;
    let h = grid.h();
    let j = &grid.speeds;

    // G_L = −(1/4π)·(ln 4sin² + ln(r²/4sin²)).
    let sl = log_singular_matrix(grid, rule, |i, k| {
        let idx = pairs.idx(i, k);
        (-j[k] / (4.0 * PI), -j[k] * pairs.log_ratio[idx] / (4.0 * PI))
    });

    let sl_nu = DMatrix::from_fn(n, n, |i, k| {
        if i == k {
            -grid.curvature[i] * j[i] / (4.0 * PI) * h
        } else {
            let idx = pairs.idx(i, k);
            -pairs.dnu[idx] / (2.0 * PI * pairs.r2[idx]) * j[k] * h
        }
    });

    // Tangential derivative: −½·H plus a smooth remainder whose diagonal limit
    // is J'/(4πJ).
    let mut sl_tau = hilbert_matrix(n) * -0.5;
    for i in 0..n {
        for k in 0..n {
            let smooth = if i == k {
                grid.dspeeds[i] / (4.0 * PI * j[i])
            } else {
                let idx = pairs.idx(i, k);
                let d = (grid.params[i] - grid.params[k]) * 0.5;
                -pairs.dtau[idx] / (2.0 * PI * pairs.r2[idx]) * j[k] + d.cos() / d.sin() / (4.0 * PI)
            };
            sl_tau[(i, k)] += h * smooth;
        }
    }
    LaplaceOps { sl, sl_nu, sl_tau }
}

/// Null vector of `½I + S_Lν` by inverse iteration, normalized to unit
/// Euclidean norm with a positive sum.
pub fn null_vector(ops: &LaplaceOps) -> DVector<f64> {
    let n = ops.sl_nu.nrows();
    let a = &ops.sl_nu + DMatrix::identity(n, n) * 0.5;
    let scale = a.norm() / (n as f64).sqrt();
    // A tiny shift keeps the factorization regular without moving the
    // eigenvector appreciably.
    let shifted = &a + DMatrix::identity(n, n) * (1e-13 * scale);
    let lu = shifted.lu();
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    for _ in 0..4 {
        match lu.solve(&v) {
            Some(w) if w.iter().all(|x| x.is_finite()) && w.norm() > 0.0 => {
                v = &w / w.norm();
            }
            _ => break,
        }
    }
    if v.sum() < 0.0 {
        v = -v;
    }
    v
}

/// Result of an interior evaluation with per-target proximity flags.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldEval {
    pub values: Vec<Vec2>,
    /// True where a target is closer than the trapezoid-accuracy threshold.
    pub too_close: Vec<bool>,
}

/// Separation, in mean node spacings, below which targets are flagged.
pub const SEPARATION_FACTOR: f64 = 5.0;

pub(crate) fn proximity_flags(grid: &BoundaryGrid, targets: &[Vec2]) -> Vec<bool> {
    let limit = SEPARATION_FACTOR * grid.mean_spacing();
    targets
        .iter()
        .map(|&p| {
            grid.nodes
                .iter()
                .map(|x| (x[0] - p[0]).hypot(x[1] - p[1]))
                .fold(f64::INFINITY, f64::min)
                < limit
        })
        .collect()
}

/// `∇S_L[density]` at interior targets with the trapezoid rule.
pub fn grad_slp_eval(grid: &BoundaryGrid, density: &[f64], targets: &[Vec2]) -> FieldEval {
    let values = targets
        .iter()
        .map(|&p| {
            let mut g = [0.0, 0.0];
            for j in 0..grid.n {
                let y = grid.nodes[j];
                let (dx, dy) = (p[0] - y[0], p[1] - y[1]);
                let f = -grid.quad_weights[j] * density[j] / (2.0 * PI * (dx * dx + dy * dy));
                g[0] += f * dx;
                g[1] += f * dy;
            }
            g
        })
        .collect();
    FieldEval {
        values,
        too_close: proximity_flags(grid, targets),
    }
}
