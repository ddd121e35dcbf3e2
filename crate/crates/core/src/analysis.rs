//! Fourier analysis of the fully implicit system on a circle, dense
//! spectrum and conditioning studies, and nullspace checks.
//!
//! On a circle of radius `r` every operator is diagonalized by the modes
//! `e^{iks}`, and the system reduces to the 2×2 blocks
//! `[[½, b_k], [−(i/2)sgn k, a_k]]` (`k ≠ 0`) and `diag(0, λ0)` (`k = 0`).
//! Here `a_k`, `b_k` are computed by adaptive quadrature of their defining
//! integrals and compared with the assembled matrices.

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix, DVector, Matrix2};
use rayon::prelude::*;

use crate::geom::CurveSpec;
use crate::quad::integrate_split;
use crate::solver::march::fi_matrix;
use crate::solver::Problem;
use crate::specfun::exp_integral_e1;
use crate::{Error, Result};

type C64 = Complex<f64>;

const QUAD_TOL: f64 = 1e-13;

fn check_params(r: f64, dt: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() && dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("need r > 0 and dt > 0, got r={r}, dt={dt}")))
    }
}

/// `2∫_0^π f`, the integral over `[−π, π]` of an even integrand, with break
/// points graded towards the kernel peak at `s = 0` and spaced to follow the
/// oscillation of mode `k`.
fn even_integral<F: Fn(f64) -> f64>(f: F, r: f64, dt: f64, k: u64) -> Result<f64> {
    let width = (2.0 * dt.sqrt() / r).min(PI);
    let mut breaks = vec![0.0, PI];
    let mut b = width;
    for _ in 0..12 {
        b *= 0.25;
        breaks.push(b);
    }
    let mut b = width;
    while b < PI {
        breaks.push(b);
        b *= 2.0;
    }
    let cells = k.max(1) as usize;
    breaks.extend((1..cells).map(|m| PI * m as f64 / cells as f64));
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    Ok(2.0 * integrate_split(f, &breaks, QUAD_TOL, QUAD_TOL)?)
}

/// Gaussian and exponential-integral factors at `x = r² sin²(s/2)/Δt`.
fn kernel_factors(s: f64, r: f64, dt: f64) -> (f64, f64) {
    let half = (0.5 * s).sin();
    let x = r * r * half * half / dt;
    // x > 0 away from s = 0, which the Gauss–Kronrod rule never samples.
    let e1 = exp_integral_e1(x).unwrap_or(0.0);
    ((-x).exp(), e1)
}

/// Real symbol `a_k` of `½I + A_ν0` on the circle.
fn a_symbol(k: i64, r: f64, dt: f64) -> Result<f64> {
    let kf = k as f64;
    let gauss = even_integral(|s| kernel_factors(s, r, dt).0 * (kf * s).cos(), r, dt, k.unsigned_abs())?;
    let log = even_integral(
        |s| (1.0 - s.cos()) * kernel_factors(s, r, dt).1 * (kf * s).cos(),
        r,
        dt,
        k.unsigned_abs(),
    )?;
    Ok(0.5 - gauss / (4.0 * PI) + r * r / (8.0 * PI * dt) * log)
}

/// Imaginary part of the symbol `b_k` of `A_τ0` (the symbol is `i·β_k`).
fn b_symbol_imag(k: i64, r: f64, dt: f64) -> Result<f64> {
    if k == 0 {
        return Ok(0.0);
    }
    let kf = k as f64;
    let cot = even_integral(
        |s| kernel_factors(s, r, dt).0 * (kf * s).sin() / (0.5 * s).tan(),
        r,
        dt,
        k.unsigned_abs(),
    )?;
    let log = even_integral(
        |s| s.sin() * kernel_factors(s, r, dt).1 * (kf * s).sin(),
        r,
        dt,
        k.unsigned_abs(),
    )?;
    Ok(cot / (4.0 * PI) - r * r / (8.0 * PI * dt) * log)
}

/// `(½I + A_ν0)[1]` on a circle of radius `r` for step `dt`; positive.
pub fn lambda0(r: f64, dt: f64) -> Result<f64> {
    check_params(r, dt)?;
    a_symbol(0, r, dt)
}

/// Eigenvalues of a complex 2×2 matrix, larger magnitude first.
fn eig2(m: &Matrix2<C64>) -> [C64; 2] {
    let half_tr = (m[(0, 0)] + m[(1, 1)]) * 0.5;
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let disc = (half_tr * half_tr - det).sqrt();
    let (l1, l2) = (half_tr + disc, half_tr - disc);
    if l1.norm() >= l2.norm() {
        [l1, l2]
    } else {
        [l2, l1]
    }
}

/// Singular values of a complex 2×2 matrix, descending.
fn sing2(m: &Matrix2<C64>) -> [f64; 2] {
    let g = m.adjoint() * m;
    let p = g[(0, 0)].re;
    let q = g[(1, 1)].re;
    let c = g[(0, 1)].norm();
    let mid = 0.5 * (p + q);
    let rad = (0.25 * (p - q) * (p - q) + c * c).sqrt();
    [(mid + rad).max(0.0).sqrt(), (mid - rad).max(0.0).sqrt()]
}

/// The 2×2 Fourier block of one mode.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolBlock {
    pub k: i64,
    /// Symbol of `½I + A_ν0` (real).
    pub a: C64,
    /// Symbol of `A_τ0` (purely imaginary).
    pub b: C64,
    pub block: Matrix2<C64>,
    /// Exact eigenvalues of `block`, larger magnitude first.
    pub eigvals: [C64; 2],
    pub singvals: [f64; 2],
}

impl SymbolBlock {
    fn from_block(k: i64, a: C64, b: C64, block: Matrix2<C64>) -> Self {
        Self {
            k,
            a,
            b,
            eigvals: eig2(&block),
            singvals: sing2(&block),
            block,
        }
    }
}

/// Fourier block of mode `k` with quadrature-exact `a_k`, `b_k`.
pub fn symbol(k: i64, r: f64, dt: f64) -> Result<SymbolBlock> {
    check_params(r, dt)?;
    let zero = C64::new(0.0, 0.0);
    let a = C64::new(a_symbol(k, r, dt)?, 0.0);
    if k == 0 {
        return Ok(SymbolBlock::from_block(0, a, zero, Matrix2::new(zero, zero, zero, a)));
    }
    let b = C64::new(0.0, b_symbol_imag(k, r, dt)?);
    let sl_tau = C64::new(0.0, -0.5 * (k.signum() as f64));
    let block = Matrix2::new(C64::new(0.5, 0.0), b, sl_tau, a);
    Ok(SymbolBlock::from_block(k, a, b, block))
}

/// Large-`|k|` approximations of the symbols and block eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymbolAsymptotic {
    pub a: f64,
    /// Imaginary part of `b_k`.
    pub b_imag: f64,
    /// `1 − r²/(8Δt k²)`.
    pub eig_large: f64,
    /// `r²/(8Δt k²)`.
    pub eig_small: f64,
}

pub fn symbol_asymptotic(k: i64, r: f64, dt: f64) -> Result<SymbolAsymptotic> {
    check_params(r, dt)?;
    if k == 0 {
        return Err(Error::Domain("asymptotic symbols need k ≠ 0".into()));
    }
    let kf = k as f64;
    let sgn = kf.signum();
    let c = r * r / dt;
    let small = c / (8.0 * kf * kf);
    Ok(SymbolAsymptotic {
        a: 0.5 - c / (4.0 * kf.abs().powi(3)),
        b_imag: 0.5 * sgn - c * sgn / (4.0 * kf * kf),
        eig_large: 1.0 - small,
        eig_small: small,
    })
}

/// Modes resolved by an `n`-point grid, `−n/2 < k ≤ n/2`.
fn grid_modes(n: usize) -> impl Iterator<Item = i64> {
    let h = (n / 2) as i64;
    (1 - h)..=h
}

/// Magnitudes of the Fourier-block eigenvalues over all modes of an `n`-point
/// grid (`n` even), descending (quadrature-exact and asymptotic; `k = 0` contributes
/// `λ0` and `0` to both).
pub fn symbol_spectrum(r: f64, n: usize, dt: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let blocks: Vec<SymbolBlock> = grid_modes(n)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|k| symbol(k, r, dt))
        .collect::<Result<_>>()?;
    let mut exact = Vec::with_capacity(2 * n);
    let mut asym = Vec::with_capacity(2 * n);
    let nyquist = (n / 2) as i64;
    for blk in &blocks {
        if n % 2 == 0 && blk.k == nyquist {
            // On the grid the modes ±n/2 coincide, so the odd symbols
            // (b_k and sgn k) average to zero and the block is diagonal.
            exact.extend([0.5, blk.a.re.abs()]);
            asym.extend([0.5, symbol_asymptotic(blk.k, r, dt)?.a.abs()]);
            continue;
        }
        exact.extend(blk.eigvals.iter().map(|e| e.norm()));
        if blk.k == 0 {
            asym.extend([blk.a.re, 0.0]);
        } else {
            let s = symbol_asymptotic(blk.k, r, dt)?;
            asym.extend([s.eig_large.abs(), s.eig_small.abs()]);
        }
    }
    exact.sort_by(|x, y| y.total_cmp(x));
    asym.sort_by(|x, y| y.total_cmp(x));
    Ok((exact, asym))
}

/// One row of [`spectrum_compare`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumRow {
    pub index: usize,
    pub numeric: f64,
    pub exact: f64,
    pub asymptotic: f64,
}

/// Eigenvalue magnitudes of the assembled FI matrix on a circle against the
/// Fourier-block predictions, each sorted in decreasing order.
pub fn spectrum_compare(r: f64, n: usize, dt: f64) -> Result<Vec<SpectrumRow>> {
    check_params(r, dt)?;
    if n > 512 {
        return Err(Error::Unsupported {
            what: "grid size for dense eigenvalues",
            value: n,
            min: 16,
            max: 512,
        });
    }
    let problem = Problem::new(CurveSpec::Circle { r }, n)?;
    let mat = fi_matrix(&problem, dt)?;
    let mut numeric: Vec<f64> = mat.complex_eigenvalues().iter().map(|e| e.norm()).collect();
    numeric.sort_by(|x, y| y.total_cmp(x));
    let (exact, asym) = symbol_spectrum(r, n, dt)?;
    Ok(numeric
        .into_iter()
        .zip(exact)
        .zip(asym)
        .enumerate()
        .map(|(index, ((numeric, exact), asymptotic))| SpectrumRow {
            index,
            numeric,
            exact,
            asymptotic,
        })
        .collect())
}

/// Block entries recovered from the assembled FI matrix acting on the
/// discrete mode `e^{iks_j}` of a circle grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeAction {
    pub k: i64,
    /// `[[(½I+S_Lν), A_τ0], [−S_Lτ, ½I+A_ν0]]` projected on the mode.
    pub block: Matrix2<C64>,
    /// Largest relative component of the images orthogonal to the mode.
    pub leakage: f64,
}

/// Projects the FI matrix of `problem` (a circle) onto Fourier mode `k`.
pub fn mode_action(problem: &Problem, mat: &DMatrix<f64>, k: i64) -> ModeAction {
    let n = problem.n();
    let mode: Vec<C64> = problem
        .grid()
        .params
        .iter()
        .map(|&s| C64::from_polar(1.0, k as f64 * s))
        .collect();
    let mut block = Matrix2::zeros();
    let mut leakage: f64 = 0.0;
    for col in 0..2 {
        // Real and imaginary parts act separately on the real matrix.
        let mut image = vec![C64::new(0.0, 0.0); 2 * n];
        for part in 0..2 {
            let mut x = DVector::zeros(2 * n);
            for j in 0..n {
                x[col * n + j] = if part == 0 { mode[j].re } else { mode[j].im };
            }
            let y = mat * x;
            for (img, v) in image.iter_mut().zip(y.iter()) {
                *img += if part == 0 { C64::new(*v, 0.0) } else { C64::new(0.0, *v) };
            }
        }
        for row in 0..2 {
            let seg = &image[row * n..(row + 1) * n];
            let coeff = seg.iter().zip(&mode).map(|(y, m)| y * m.conj()).sum::<C64>() / n as f64;
            let resid = seg
                .iter()
                .zip(&mode)
                .map(|(y, m)| (y - coeff * m).norm())
                .fold(0.0, f64::max);
            leakage = leakage.max(resid);
            block[(row, col)] = coeff;
        }
    }
    ModeAction { k, block, leakage }
}

/// Condition number at one step size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionPoint {
    pub dt: f64,
    /// `σ_max / σ′_min` in the complement of the near-null direction.
    pub kappa: f64,
    pub sigma_max: f64,
    pub sigma_min: f64,
    /// Whether a singular vector aligned with `[ρ0, 0]` was found and removed
    /// (otherwise the smallest singular value was dropped).
    pub aligned: bool,
}

/// Singular values (descending) and the index of the triplet whose right
/// vector aligns with `[ρ0, 0]`.
fn svd_with_null(problem: &Problem, mat: DMatrix<f64>) -> Result<(Vec<f64>, Option<usize>, DVector<f64>)> {
    let n = problem.n();
    let svd = mat
        .try_svd(false, true, 1e-15, 10_000)
        .ok_or_else(|| Error::Domain("dense SVD did not converge".into()))?;
    let v_t = svd.v_t.as_ref().expect("requested right vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sigmas: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let mut null = DVector::zeros(2 * n);
    null.rows_mut(0, n).copy_from(&problem.rho0);
    let mut best = (0.0, None);
    for (pos, &i) in order.iter().enumerate() {
        let align = v_t.row(i).transpose().dot(&null).abs();
        if align > best.0 {
            best = (align, Some(pos));
        }
    }
    let aligned = if best.0 >= 0.99 { best.1 } else { None };
    let smallest = v_t.row(*order.last().expect("non-empty")).transpose();
    Ok((sigmas, aligned, smallest))
}

/// Condition numbers of the FI matrix on a circle for each step size.
pub fn condition_sweep(r: f64, n: usize, dts: &[f64]) -> Result<Vec<ConditionPoint>> {
    if n > 512 {
        return Err(Error::Unsupported {
            what: "grid size for dense SVD",
            value: n,
            min: 16,
            max: 512,
        });
    }
    for &dt in dts {
        check_params(r, dt)?;
    }
    let problem = Problem::new(CurveSpec::Circle { r }, n)?;
    dts.par_iter()
        .map(|&dt| {
            let (sigmas, aligned, _) = svd_with_null(&problem, fi_matrix(&problem, dt)?)?;
            let drop = aligned.unwrap_or(sigmas.len() - 1);
            let sigma_min = sigmas
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != drop)
                .map(|(_, &s)| s)
                .fold(f64::INFINITY, f64::min);
            Ok(ConditionPoint {
                dt,
                kappa: sigmas[0] / sigma_min,
                sigma_max: sigmas[0],
                sigma_min,
                aligned: aligned.is_some(),
            })
        })
        .collect()
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Domain("need at least two matching points for a slope".into()));
    }
    if x.iter().chain(y).any(|&v| !(v > 0.0)) {
        return Err(Error::Domain("log-log slope needs positive data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    Ok(sxy / sxx)
}

/// Rank and null-direction diagnostics of the FI matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullspaceReport {
    pub sigma_max: f64,
    /// `σ_min / σ_max`.
    pub sigma_min_ratio: f64,
    /// Second smallest singular value over `σ_max`.
    pub sigma2_ratio: f64,
    /// Number of singular values at most `1e−10·σ_max`.
    pub small_count: usize,
    /// `‖(½I + S_Lν)ρ0‖`.
    pub neumann_residual: f64,
    /// `‖S_Lτ ρ0‖`.
    pub sl_tau_residual: f64,
    /// Norm of the `μ` half of the right singular vector of `σ_min`.
    pub null_mu_norm: f64,
}

pub fn nullspace_check(problem: &Problem, dt: f64) -> Result<NullspaceReport> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("step {dt} must be > 0")));
    }
    let n = problem.n();
    let (sigmas, _, smallest) = svd_with_null(problem, fi_matrix(problem, dt)?)?;
    let sigma_max = sigmas[0];
    let m = sigmas.len();
    Ok(NullspaceReport {
        sigma_max,
        sigma_min_ratio: sigmas[m - 1] / sigma_max,
        sigma2_ratio: sigmas[m - 2] / sigma_max,
        small_count: sigmas.iter().filter(|&&s| s <= 1e-10 * sigma_max).count(),
        neumann_residual: (&problem.neumann * &problem.rho0).norm(),
        sl_tau_residual: (&problem.laplace.sl_tau * &problem.rho0).norm(),
        null_mu_norm: smallest.rows(n, n).norm(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda0_limits() {
        assert!((lambda0(0.6, 1e-7).unwrap() - 0.5).abs() < 1e-3);
        for r in [0.1, 0.6, 2.0] {
            for dt in [1e-4, 1e-2, 1.0] {
                assert!(lambda0(r, dt).unwrap() > 0.0, "r={r} dt={dt}");
            }
        }
        assert!(lambda0(-1.0, 0.1).is_err());
    }

    #[test]
    fn symbol_symmetries() {
        let (r, dt) = (0.6, 0.05);
        let p = symbol(5, r, dt).unwrap();
        let m = symbol(-5, r, dt).unwrap();
        assert!((p.b + m.b).norm() < 1e-13);
        assert!((p.a - m.a).norm() < 1e-13);
        assert_eq!(p.block[(0, 0)], C64::new(0.5, 0.0));
        assert_eq!(p.block[(1, 0)], C64::new(0.0, -0.5));
        let a8 = symbol(8, r, dt).unwrap().a.re;
        let a64 = symbol(64, r, dt).unwrap().a.re;
        assert!((a64 - 0.5).abs() < (a8 - 0.5).abs());
    }

    #[test]
    fn asymptotic_small_eigenvalue() {
        let s = symbol_asymptotic(32, 0.6, 0.05).unwrap();
        assert!((s.eig_small - 8.789_062_5e-4).abs() < 1e-10);
        assert!((s.eig_small + s.eig_large - 1.0).abs() < 1e-15);
        let exact = symbol(32, 0.6, 0.05).unwrap();
        assert!((exact.eigvals[1].norm() / s.eig_small - 1.0).abs() < 0.15);
    }

    #[test]
    fn eig_and_svd_of_two_by_two() {
        let one = C64::new(1.0, 0.0);
        let z = C64::new(0.0, 0.0);
        let m = Matrix2::new(C64::new(3.0, 0.0), one, z, C64::new(2.0, 0.0));
        let e = eig2(&m);
        assert!((e[0] - C64::new(3.0, 0.0)).norm() < 1e-14);
        assert!((e[1] - C64::new(2.0, 0.0)).norm() < 1e-14);
        let s = sing2(&m);
        // σ1·σ2 = |det|, σ1² + σ2² = ‖m‖_F².
        assert!((s[0] * s[1] - 6.0).abs() < 1e-12);
        assert!((s[0] * s[0] + s[1] * s[1] - 14.0).abs() < 1e-12);
    }

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.5)).collect();
        assert!((loglog_slope(&x, &y).unwrap() - 1.5).abs() < 1e-12);
    }
}
