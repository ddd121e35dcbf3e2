use csie::analysis::{
    condition_sweep, lambda0, loglog_slope, mode_action, nullspace_check, spectrum_compare, symbol, symbol_asymptotic,
};
use csie::geom::CurveSpec;
use csie::solver::march::fi_matrix;
use csie::solver::Problem;

#[test]
fn lambda0_is_positive_and_matches_quadrature() {
    for r in [0.1, 0.6, 2.0] {
        for dt in [1e-4, 1e-2, 1.0] {
            assert!(lambda0(r, dt).unwrap() > 0.0);
        }
    }
    // λ0 at k = 0 is the (2,2) entry of the k = 0 block.
    let blk = symbol(0, 0.6, 0.1).unwrap();
    assert!((blk.block[(1, 1)].re - lambda0(0.6, 0.1).unwrap()).abs() < 1e-15);
    assert_eq!(blk.eigvals[1].norm(), 0.0);
}

#[test]
fn resolved_modes_match_symbols() {
    let (r, n, dt) = (0.6, 128, 0.05);
    let problem = Problem::new(CurveSpec::Circle { r }, n).unwrap();
    let mat = fi_matrix(&problem, dt).unwrap();
    let kmax = (3 * n / 8) as i64;
    for k in -kmax..=kmax {
        let act = mode_action(&problem, &mat, k);
        let sym = symbol(k, r, dt).unwrap();
        let diff = (act.block - sym.block).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-6, "k={k}: {diff:e}");
        assert!(act.leakage < 1e-10);
    }
}

#[test]
fn asymptotic_formulas_approach_exact_symbols() {
    let (r, dt) = (0.6, 0.05);
    let mut prev = f64::INFINITY;
    for k in [8i64, 16, 32, 64] {
        let exact = symbol(k, r, dt).unwrap();
        let asym = symbol_asymptotic(k, r, dt).unwrap();
        let gap = (exact.a.re - asym.a).abs();
        assert!(gap < prev, "k={k}");
        prev = gap;
        if k >= 16 {
            let small = exact.eigvals[1].norm();
            assert!((small / asym.eig_small - 1.0).abs() < 0.15, "k={k}");
            assert!((exact.eigvals[0].norm() / asym.eig_large - 1.0).abs() < 0.15);
        }
        if k >= 8 {
            // Eigenvalues and singular values of the block nearly coincide.
            for (e, s) in exact.eigvals.iter().zip(&exact.singvals) {
                assert!((e.norm() / s - 1.0).abs() < 0.2, "k={k}");
            }
        }
    }
}

#[test]
fn spectrum_has_single_null_eigenvalue() {
    let n = 64;
    let rows = spectrum_compare(0.6, n, 0.05).unwrap();
    assert_eq!(rows.len(), 2 * n);
    let tiny = rows.iter().filter(|r| r.numeric <= 1e-12).count();
    assert_eq!(tiny, 1);
    // All but the aliased highest modes and the Nyquist block agree closely.
    let close = rows.iter().take(3 * n / 2).filter(|r| (r.numeric - r.exact).abs() < 1e-6).count();
    assert!(close >= 3 * n / 2 - 8, "{close}");
}

#[test]
fn condition_number_grows_linearly_in_dt() {
    let dts = [1e-3, 1e-2, 1e-1];
    let pts = condition_sweep(0.6, 64, &dts).unwrap();
    assert!(pts.iter().all(|p| p.aligned));
    assert!(pts.windows(2).all(|w| w[0].kappa < w[1].kappa));
    let kappas: Vec<f64> = pts.iter().map(|p| p.kappa).collect();
    let slope = loglog_slope(&dts, &kappas).unwrap();
    assert!((0.8..=1.2).contains(&slope), "{slope}");
    // Δt equal to the squared arc spacing gives an n-independent condition
    // number near the Fourier estimate 8π² ≈ 79.
    let kappa_at_h2 = |n: usize| {
        let h = 2.0 * std::f64::consts::PI * 0.6 / n as f64;
        condition_sweep(0.6, n, &[h * h]).unwrap()[0].kappa
    };
    let (k32, k64) = (kappa_at_h2(32), kappa_at_h2(64));
    assert!((k64 / k32 - 1.0).abs() < 0.2, "{k32} {k64}");
    assert!(k64 < 100.0, "{k64}");
}

#[test]
fn nullspace_is_one_dimensional() {
    for (spec, n) in [("circle:r=0.6", 64), ("ellipse", 96)] {
        let problem = Problem::new(spec.parse().unwrap(), n).unwrap();
        let rep = nullspace_check(&problem, 0.02).unwrap();
        assert_eq!(rep.small_count, 1, "{spec}");
        assert!(rep.sigma2_ratio >= 1e-4, "{spec}");
        assert!(rep.sl_tau_residual <= 1e-10, "{spec}");
        assert!(rep.null_mu_norm <= 1e-8, "{spec}");
    }
}
