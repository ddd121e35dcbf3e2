//! Manufactured divergence-free velocity field, boundary data and error
//! metrics for the convergence studies.
//!
//! The field is a superposition of time-windowed heat dipoles centred at ten
//! sources on the unit circle (each is the perpendicular gradient of a
//! difference of heat kernels, hence divergence-free) plus three potential
//! flows with rapidly oscillating amplitudes.

use std::f64::consts::PI;

use crate::geom::BoundaryGrid;
use crate::{Error, Result, Vec2};

/// Configuration of the manufactured solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactSolutionCfg {
    /// Pulse spacing `h`: source `j` switches on at `(2k+1)h` and off at `(2k+2)h`.
    pub pulse: f64,
    /// Angular offset of the source ring.
    pub phase: f64,
    pub sources: usize,
    /// Switches for the dipole sum and the three potential-flow terms.
    pub terms: [bool; 4],
}

impl Default for ExactSolutionCfg {
    fn default() -> Self {
        Self {
            pulse: 0.1,
            phase: 0.0,
            sources: 10,
            terms: [true; 4],
        }
    }
}

impl ExactSolutionCfg {
    pub fn source(&self, j: usize) -> Vec2 {
        let th = 2.0 * PI * j as f64 / self.sources as f64 + self.phase;
        [th.cos(), th.sin()]
    }
}

/// `e^{−r²/4s}` for `s > 0`, zero otherwise.
fn switched_gaussian(r2: f64, s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else {
        (-r2 / (4.0 * s)).exp()
    }
}

/// Exact velocity at `x` and time `t`.
pub fn exact_velocity(x: Vec2, t: f64, cfg: &ExactSolutionCfg) -> Result<Vec2> {
    let mut u = [0.0, 0.0];
    if cfg.terms[0] {
        let kmax = if t > 0.0 { (t / (2.0 * cfg.pulse)).floor() as usize } else { 0 };
        for j in 0..cfg.sources {
            let xj = cfg.source(j);
            let (d1, d2) = (x[0] - xj[0], x[1] - xj[1]);
            let r2 = d1 * d1 + d2 * d2;
            if r2 == 0.0 {
                return Err(Error::Domain(format!("evaluation at source point {xj:?}")));
            }
            let mut amp = 0.0;
            for k in 0..=kmax {
                let on = t - (2 * k + 1) as f64 * cfg.pulse;
                let off = t - (2 * k + 2) as f64 * cfg.pulse;
                amp += switched_gaussian(r2, on) - switched_gaussian(r2, off);
            }
            u[0] += d2 / r2 * amp;
            u[1] -= d1 / r2 * amp;
        }
    }
    if cfg.terms[1] {
        let f = t * (313.0 * PI * t).cos();
        u[0] += f * x[0];
        u[1] -= f * x[1];
    }
    if cfg.terms[2] {
        let f = 0.25 * t * t * (233.0 * PI * t).cos() * x[0].exp();
        u[0] += f * x[1].cos();
        u[1] -= f * x[1].sin();
    }
    if cfg.terms[3] {
        let f = 2.0 * t * (299.0 * PI * t).sin() * x[1].exp();
        u[0] += f * x[0].cos();
        u[1] += f * x[0].sin();
    }
    Ok(u)
}

/// Normal and tangential components of the exact velocity at the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData {
    pub normal: Vec<f64>,
    pub tangential: Vec<f64>,
}

pub fn boundary_data(grid: &BoundaryGrid, t: f64, cfg: &ExactSolutionCfg) -> Result<BoundaryData> {
    let mut normal = Vec::with_capacity(grid.n);
    let mut tangential = Vec::with_capacity(grid.n);
    for i in 0..grid.n {
        let u = exact_velocity(grid.nodes[i], t, cfg)?;
        let (nu, tau) = (grid.normals[i], grid.tangents[i]);
        normal.push(u[0] * nu[0] + u[1] * nu[1]);
        tangential.push(u[0] * tau[0] + u[1] * tau[1]);
    }
    Ok(BoundaryData { normal, tangential })
}

/// Radical inverse of `i` in base `b`.
fn radical_inverse(mut i: u64, b: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= b as f64;
        r += f * (i % b) as f64;
        i /= b;
    }
    r
}

/// `count` reproducible interior sample points, drawn from a 2-D Halton
/// sequence (skip offset derived from `seed`) over the curve's bounding box and
/// kept only if at least `separation` mean node spacings from the boundary.
pub fn sample_points(grid: &BoundaryGrid, count: usize, seed: u64, separation: f64) -> Result<Vec<Vec2>> {
    let r = grid.spec.bounding_radius();
    let mut out = Vec::with_capacity(count);
    let start = 1 + (seed % 1_000_003) * 7919;
    let mut i = start;
    while out.len() < count {
        if i - start > 1_000_000 {
            return Err(Error::Config(format!(
                "could not place {count} sample points {separation} spacings from the boundary"
            )));
        }
        let p = [r * (2.0 * radical_inverse(i, 2) - 1.0), r * (2.0 * radical_inverse(i, 3) - 1.0)];
        i += 1;
        if grid.is_well_separated(p, separation) {
            out.push(p);
        }
    }
    Ok(out)
}

/// Relative ℓ² error over all components at all samples. Returns NaN when
/// both the computed and the exact field vanish.
pub fn relative_l2_error(computed: &[Vec2], exact: &[Vec2]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (c, e) in computed.iter().zip(exact) {
        num += (c[0] - e[0]).powi(2) + (c[1] - e[1]).powi(2);
        den += e[0].powi(2) + e[1].powi(2);
    }
    if den == 0.0 {
        if num == 0.0 {
            return f64::NAN;
        }
        return f64::INFINITY;
    }
    (num / den).sqrt()
}

/// Error metric configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorMetric {
    pub samples: usize,
    pub seed: u64,
    /// Minimum distance from the boundary in mean node spacings.
    pub separation: f64,
}

impl Default for ErrorMetric {
    fn default() -> Self {
        Self {
            samples: 20,
            seed: 0,
            separation: 5.0,
        }
    }
}

/// Error of a computed field with a per-point breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub error: f64,
    pub points: Vec<Vec2>,
    pub computed: Vec<Vec2>,
    pub exact: Vec<Vec2>,
}

pub fn error_report(points: Vec<Vec2>, computed: Vec<Vec2>, t: f64, cfg: &ExactSolutionCfg) -> Result<ErrorReport> {
    let exact = points
        .iter()
        .map(|&p| exact_velocity(p, t, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(ErrorReport {
        error: relative_l2_error(&computed, &exact),
        points,
        computed,
        exact,
    })
}
