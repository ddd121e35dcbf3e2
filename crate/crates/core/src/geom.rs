//! Analytic closed curves, their uniform-parameter Nyström discretization and
//! the singular-quadrature machinery shared by all boundary operators.
//!
//! Every boundary kernel is split in parameter space as
//! `K(s, σ) = c(s)·cot((s−σ)/2) + K1(s, σ)·ln(4 sin²((s−σ)/2)) + K2(s, σ)`.
//! The cotangent part is applied spectrally (a dense circulant Hilbert
//! matrix), the logarithmic part with Kress product weights, and the smooth
//! remainder with the trapezoid rule.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::{Error, Result, Vec2};

/// An analytic, positively oriented closed curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CurveSpec {
    Circle { r: f64 },
    Ellipse { a: f64, b: f64 },
    /// Polar star `R(θ) = r0·(1 + amp·cos(lobes·θ))`.
    Star { r0: f64, amp: f64, lobes: usize },
}

impl CurveSpec {
    /// Checks the parameter invariants.
    pub fn validate(&self) -> Result<()> {
        match *self {
            CurveSpec::Circle { r } if r > 0.0 && r.is_finite() => Ok(()),
            CurveSpec::Circle { r } => Err(Error::Geometry(format!("circle radius {r} must be > 0"))),
            CurveSpec::Ellipse { a, b } if a >= b && b > 0.0 && a.is_finite() => Ok(()),
            CurveSpec::Ellipse { a, b } => Err(Error::Geometry(format!(
                "ellipse needs a ≥ b > 0, got a={a}, b={b}"
            ))),
            CurveSpec::Star { r0, amp, lobes } => {
                if !(r0 > 0.0 && r0.is_finite()) {
                    return Err(Error::Geometry(format!("star r0 {r0} must be > 0")));
                }
                if lobes == 0 {
                    return Err(Error::Geometry("star needs at least one lobe".into()));
                }
                // amp·lobes < 1 keeps the radius positive and bounds the
                // lobe steepness, so the curve stays smooth and simple.
                if !(amp >= 0.0 && amp * (lobes as f64) < 1.0) {
                    return Err(Error::Geometry(format!(
                        "star amplitude {amp} with {lobes} lobes violates 0 <= amp*lobes < 1"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Position and first two parameter derivatives at `s ∈ [0, 2π)`.
    pub fn eval(&self, s: f64) -> (Vec2, Vec2, Vec2) {
        let (c, sn) = (s.cos(), s.sin());
        match *self {
            CurveSpec::Circle { r } => ([r * c, r * sn], [-r * sn, r * c], [-r * c, -r * sn]),
            CurveSpec::Ellipse { a, b } => ([a * c, b * sn], [-a * sn, b * c], [-a * c, -b * sn]),
            CurveSpec::Star { r0, amp, lobes } => {
                let l = lobes as f64;
                let rad = r0 * (1.0 + amp * (l * s).cos());
                let d1 = -r0 * amp * l * (l * s).sin();
                let d2 = -r0 * amp * l * l * (l * s).cos();
                (
                    [rad * c, rad * sn],
                    [d1 * c - rad * sn, d1 * sn + rad * c],
                    [
                        d2 * c - 2.0 * d1 * sn - rad * c,
                        d2 * sn + 2.0 * d1 * c - rad * sn,
                    ],
                )
            }
        }
    }

    /// Whether `p` lies strictly inside the curve.
    pub fn contains(&self, p: Vec2) -> bool {
        match *self {
            CurveSpec::Circle { r } => p[0].hypot(p[1]) < r,
            CurveSpec::Ellipse { a, b } => (p[0] / a).powi(2) + (p[1] / b).powi(2) < 1.0,
            CurveSpec::Star { r0, amp, lobes } => {
                let th = p[1].atan2(p[0]);
                p[0].hypot(p[1]) < r0 * (1.0 + amp * (lobes as f64 * th).cos())
            }
        }
    }

    /// Radius of a circle that encloses the curve.
    pub fn bounding_radius(&self) -> f64 {
        match *self {
            CurveSpec::Circle { r } => r,
            CurveSpec::Ellipse { a, .. } => a,
            CurveSpec::Star { r0, amp, .. } => r0 * (1.0 + amp),
        }
    }
}

impl fmt::Display for CurveSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            CurveSpec::Circle { r } => write!(f, "circle:r={r}"),
            CurveSpec::Ellipse { a, b } => write!(f, "ellipse:a={a},b={b}"),
            CurveSpec::Star { r0, amp, lobes } => write!(f, "star:r0={r0},amp={amp},lobes={lobes}"),
        }
    }
}

impl FromStr for CurveSpec {
    type Err = Error;

    /// Parses `circle:r=0.5`, `ellipse:a=0.8,b=0.4` or
    /// `star:r0=0.5,amp=0.15,lobes=6`. Missing keys take the defaults shown.
    fn from_str(text: &str) -> Result<Self> {
        let (kind, rest) = text.split_once(':').unwrap_or((text, ""));
        let mut pairs = Vec::new();
        for item in rest.split(',').filter(|s| !s.trim().is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::Geometry(format!("expected key=value, got '{item}'")))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let get = |key: &str, default: f64| -> Result<f64> {
            match pairs.iter().find(|(k, _)| k == key) {
                Some((_, v)) => v
                    .parse::<f64>()
                    .map_err(|_| Error::Geometry(format!("bad number '{v}' for {key}"))),
                None => Ok(default),
            }
        };
        let allowed: &[&str] = match kind.trim() {
            "circle" => &["r"],
            "ellipse" => &["a", "b"],
            "star" => &["r0", "amp", "lobes"],
            other => return Err(Error::Geometry(format!("unknown curve kind '{other}'"))),
        };
        if let Some((k, _)) = pairs.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
            return Err(Error::Geometry(format!("unknown key '{k}' for {kind}")));
        }
        let spec = match kind.trim() {
            "circle" => CurveSpec::Circle { r: get("r", 0.5)? },
            "ellipse" => CurveSpec::Ellipse {
                a: get("a", 0.8)?,
                b: get("b", 0.4)?,
            },
            _ => {
                let lobes = get("lobes", 6.0)?;
                if lobes.fract() != 0.0 || lobes < 1.0 {
                    return Err(Error::Geometry(format!("lobes must be a positive integer, got {lobes}")));
                }
                CurveSpec::Star {
                    r0: get("r0", 0.5)?,
                    amp: get("amp", 0.15)?,
                    lobes: lobes as usize,
                }
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Uniform-parameter discretization of a closed curve.
#[derive(Debug, Clone)]
pub struct BoundaryGrid {
    pub spec: CurveSpec,
    pub n: usize,
    pub params: Vec<f64>,
    pub nodes: Vec<Vec2>,
    /// Outward unit normals, `ν = (τ_y, −τ_x)`.
    pub normals: Vec<Vec2>,
    /// Counterclockwise unit tangents.
    pub tangents: Vec<Vec2>,
    /// Speeds `|γ'(s)|`.
    pub speeds: Vec<f64>,
    /// Derivative of the speed, `γ'·γ''/|γ'|`.
    pub dspeeds: Vec<f64>,
    /// Trapezoid arclength weights `h·|γ'|`.
    pub quad_weights: Vec<f64>,
    /// Signed curvature (positive for convex parts).
    pub curvature: Vec<f64>,
}

impl BoundaryGrid {
    /// Parameter spacing `2π/n`.
    pub fn h(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    /// Discrete perimeter.
    pub fn perimeter(&self) -> f64 {
        self.quad_weights.iter().sum()
    }

    /// Mean arclength spacing.
    pub fn mean_spacing(&self) -> f64 {
        self.perimeter() / self.n as f64
    }

    /// Approximate distance from `p` to the curve, from a dense resampling.
    pub fn distance_to_boundary(&self, p: Vec2) -> f64 {
        let m = (16 * self.n).max(4096);
        (0..m)
            .map(|i| {
                let (x, _, _) = self.spec.eval(2.0 * PI * i as f64 / m as f64);
                (x[0] - p[0]).hypot(x[1] - p[1])
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Whether `p` is inside and at least `factor` mean spacings from the curve.
    pub fn is_well_separated(&self, p: Vec2, factor: f64) -> bool {
        self.spec.contains(p) && self.distance_to_boundary(p) >= factor * self.mean_spacing()
    }
}

/// Discretizes `spec` with `n` equispaced parameter nodes (`n` even, ≥ 16).
pub fn discretize(spec: CurveSpec, n: usize) -> Result<BoundaryGrid> {
    spec.validate()?;
    if n < 16 || n % 2 != 0 {
        return Err(Error::Geometry(format!("node count {n} must be even and ≥ 16")));
    }
    discretize_unchecked(spec, n)
}

/// As [`discretize`] without the node-count restriction (tiny grids in tests).
pub fn discretize_unchecked(spec: CurveSpec, n: usize) -> Result<BoundaryGrid> {
    spec.validate()?;
    if n < 2 {
        return Err(Error::Geometry("need at least two nodes".into()));
    }
    let h = 2.0 * PI / n as f64;
    let mut g = BoundaryGrid {
        spec,
        n,
        params: Vec::with_capacity(n),
        nodes: Vec::with_capacity(n),
        normals: Vec::with_capacity(n),
        tangents: Vec::with_capacity(n),
        speeds: Vec::with_capacity(n),
        dspeeds: Vec::with_capacity(n),
        quad_weights: Vec::with_capacity(n),
        curvature: Vec::with_capacity(n),
    };
    for i in 0..n {
        let s = h * i as f64;
        let (x, d1, d2) = spec.eval(s);
        let speed = d1[0].hypot(d1[1]);
        let tau = [d1[0] / speed, d1[1] / speed];
        g.params.push(s);
        g.nodes.push(x);
        g.tangents.push(tau);
        g.normals.push([tau[1], -tau[0]]);
        g.speeds.push(speed);
        g.dspeeds.push((d1[0] * d2[0] + d1[1] * d2[1]) / speed);
        g.quad_weights.push(h * speed);
        g.curvature.push((d1[0] * d2[1] - d1[1] * d2[0]) / speed.powi(3));
    }
    Ok(g)
}

/// Singular quadrature rule for log-singular boundary kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SingularRule {
    /// Kress product-integration weights for the `ln(4 sin²)` factor;
    /// spectrally accurate for analytic curves and densities.
    #[default]
    Kress,
}

/// Kress weights `R_d`, `d = 0..n`: `Σ_j R_{|i−j|} f_j ≈ ∫ ln(4 sin²((s_i−σ)/2)) f(σ) dσ`.
pub fn kress_weights(n: usize) -> Vec<f64> {
    let nf = n as f64;
    let h = 2.0 * PI / nf;
    (0..n)
        .map(|d| {
            let sum: f64 = (1..n / 2)
                .map(|m| (m as f64 * d as f64 * h).cos() / m as f64)
                .sum();
            let sign = if d % 2 == 0 { 1.0 } else { -1.0 };
            -4.0 * PI / nf * sum - 4.0 * PI / (nf * nf) * sign
        })
        .collect()
}

/// Circulant Hilbert weights `H_d`: `Σ_j H_{i−j} f_j ≈ (1/2π) p.v.∫ cot((s_i−σ)/2) f(σ) dσ`,
/// exact for trigonometric polynomials below the Nyquist mode (which is
/// annihilated).
pub fn hilbert_weights(n: usize) -> Vec<f64> {
    let nf = n as f64;
    let h = 2.0 * PI / nf;
    (0..n)
        .map(|d| {
            (1..n / 2)
                .map(|m| (m as f64 * d as f64 * h).sin())
                .sum::<f64>()
                * 2.0
                / nf
        })
        .collect()
}

/// Dense Hilbert matrix built from [`hilbert_weights`].
pub fn hilbert_matrix(n: usize) -> DMatrix<f64> {
    let w = hilbert_weights(n);
    DMatrix::from_fn(n, n, |i, j| w[(i + n - j) % n])
}

/// Pairwise target/source geometry on a grid, row-major `n × n`.
#[derive(Debug, Clone)]
pub struct PairGeometry {
    pub n: usize,
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
    pub r2: Vec<f64>,
    /// `(x_i − y_j)·ν_i`.
    pub dnu: Vec<f64>,
    /// `(x_i − y_j)·τ_i`.
    pub dtau: Vec<f64>,
    /// `ln(r² / (4 sin²((s_i−s_j)/2)))`, with diagonal limit `ln J_i²`.
    pub log_ratio: Vec<f64>,
    /// `ln(4 sin²((s_i−s_j)/2))`; zero on the diagonal (never used there).
    pub log_sin: Vec<f64>,
}

impl PairGeometry {
    pub fn new(grid: &BoundaryGrid) -> Self {
        let n = grid.n;
        let h = grid.h();
        let mut pg = PairGeometry {
            n,
            dx: vec![0.0; n * n],
            dy: vec![0.0; n * n],
            r2: vec![0.0; n * n],
            dnu: vec![0.0; n * n],
            dtau: vec![0.0; n * n],
            log_ratio: vec![0.0; n * n],
            log_sin: vec![0.0; n * n],
        };
        for i in 0..n {
            let x = grid.nodes[i];
            let nu = grid.normals[i];
            let tau = grid.tangents[i];
            for j in 0..n {
                let k = i * n + j;
                if i == j {
                    pg.log_ratio[k] = 2.0 * grid.speeds[i].ln();
                    continue;
                }
                let y = grid.nodes[j];
                let (dx, dy) = (x[0] - y[0], x[1] - y[1]);
                let r2 = dx * dx + dy * dy;
                let d = i.abs_diff(j) as f64 * h;
                let ls = (4.0 * (0.5 * d).sin().powi(2)).ln();
                pg.dx[k] = dx;
                pg.dy[k] = dy;
                pg.r2[k] = r2;
                pg.dnu[k] = dx * nu[0] + dy * nu[1];
                pg.dtau[k] = dx * tau[0] + dy * tau[1];
                pg.log_sin[k] = ls;
                pg.log_ratio[k] = r2.ln() - ls;
            }
        }
        pg
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.n + j
    }
}

/// Assembles `A_ij = R_{|i−j|}·K1(i,j) + h·K2(i,j)` from a split kernel.
/// `kernel(i, j)` returns `(K1, K2)` including the source speed, with the
/// analytic diagonal limit of `K2` at `i == j`.
pub fn log_singular_matrix<F>(grid: &BoundaryGrid, rule: SingularRule, kernel: F) -> DMatrix<f64>
where
    F: Fn(usize, usize) -> (f64, f64),
{
    let SingularRule::Kress = rule;
    let n = grid.n;
    let r = kress_weights(n);
    let h = grid.h();
    DMatrix::from_fn(n, n, |i, j| {
        let (k1, k2) = kernel(i, j);
        r[i.abs_diff(j)] * k1 + h * k2
    })
}

/// Applies a split log-singular kernel operator to `density`.
pub fn log_singular_apply<F>(
    grid: &BoundaryGrid,
    kernel: F,
    density: &[f64],
    rule: SingularRule,
) -> Vec<f64>
where
    F: Fn(usize, usize) -> (f64, f64),
{
    let a = log_singular_matrix(grid, rule, kernel);
    let v = a * nalgebra::DVector::from_column_slice(density);
    v.as_slice().to_vec()
}

/// `amplitude_i · (1/2π) p.v.∫ cot((s_i−σ)/2) density(σ) dσ`, spectrally.
pub fn pv_cotangent_apply(grid: &BoundaryGrid, amplitude: &[f64], density: &[f64]) -> Vec<f64> {
    let n = grid.n;
    let w = hilbert_weights(n);
    (0..n)
        .map(|i| {
            amplitude[i]
                * (0..n)
                    .map(|j| w[(i + n - j) % n] * density[j])
                    .sum::<f64>()
        })
        .collect()
}
