mod common;

use common::{stage_integral_oracle, time_kernel_oracle};
use csie::geom::{discretize, CurveSpec, SingularRule};
use csie::heat_pot::{
    build_local_block, history_apply, stage_integrals, stage_integrals_closed_form, time_kernel, u_coefficients,
    Component, DensityHistory, HeatContext,
};
use csie::specfun::exp_integral_e1;
use std::f64::consts::PI;

#[test]
fn stage_integrals_match_quadrature() {
    for &r in &[0.02, 0.2, 1.0] {
        for &dt in &[0.01, 0.1] {
            for &frac in &[0.3, 1.0] {
                let tau = frac * dt;
                let s = stage_integrals(r, tau, dt).unwrap();
                let c = stage_integrals_closed_form(r, tau, dt).unwrap();
                for j in 0..5 {
                    let want = stage_integral_oracle(s.a, s.b, tau, j as i32);
                    let scale = want.abs().max(1e-300);
                    assert!((s.values[j] - want).abs() <= 1e-10 * scale, "r={r} dt={dt} frac={frac} j={j}");
                    assert!((c.values[j] - want).abs() <= 1e-10 * scale, "closed form r={r} dt={dt} frac={frac} j={j}");
                }
            }
        }
    }
}

/// The current-node kernel of the two-node (linear) local piece in closed form.
fn current_node_kernel(r2: f64, proj: f64, dt: f64) -> f64 {
    let x = r2 / (4.0 * dt);
    -proj / (2.0 * PI * r2) * (-x).exp() + proj / (8.0 * PI * dt) * exp_integral_e1(x).unwrap()
}

#[test]
fn two_node_kernels_have_closed_forms() {
    let grid = discretize(CurveSpec::Star { r0: 0.5, amp: 0.15, lobes: 5 }, 48).unwrap();
    let ctx = HeatContext::new(grid, SingularRule::Kress, 8).unwrap();
    let dt = 0.02;
    let coeffs = u_coefficients(&[0.0, dt]).unwrap();
    let n = ctx.grid.n;
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            let k = ctx.pairs.idx(i, j);
            let r2 = ctx.pairs.r2[k];
            for proj in [ctx.pairs.dnu[k], ctx.pairs.dtau[k]] {
                let got0 = time_kernel(r2, proj, 0.0, dt, &coeffs[0]);
                let want0 = current_node_kernel(r2, proj, dt);
                assert!((got0 - want0).abs() <= 1e-12 * want0.abs().max(1e-300), "A0 pair ({i},{j})");
                // Previous node: only the E1 term survives.
                let got1 = time_kernel(r2, proj, 0.0, dt, &coeffs[1]);
                let e1_form = -proj / (8.0 * PI * dt) * exp_integral_e1(r2 / (4.0 * dt)).unwrap();
                assert!((got1 - e1_form).abs() <= 1e-12 * e1_form.abs().max(1e-300));
                if (i + j) % 7 == 0 {
                    let oracle = time_kernel_oracle(r2, proj, dt, &coeffs[1]);
                    assert!((got1 - oracle).abs() <= 1e-10 * oracle.abs().max(1e-300), "A1 pair ({i},{j})");
                }
            }
        }
    }
}

#[test]
fn local_block_rejects_bad_input() {
    let grid = discretize(CurveSpec::Circle { r: 0.5 }, 32).unwrap();
    let ctx = HeatContext::new(grid, SingularRule::Kress, 8).unwrap();
    assert!(build_local_block(&ctx, 0.0, &[0.0, 0.1]).is_err());
    assert!(build_local_block(&ctx, 0.1, &[0.0, 0.1, 0.1]).is_err());
    assert!(build_local_block(&ctx, 0.1, &[0.0, 0.02, 0.04, 0.06, 0.08, 0.1]).is_err());
}

#[test]
fn history_apply_is_causal() {
    let grid = discretize(CurveSpec::Ellipse { a: 0.6, b: 0.4 }, 32).unwrap();
    let n = grid.n;
    let ctx = HeatContext::new(grid, SingularRule::Kress, 8).unwrap();
    let dt = 0.05;
    let mut hist = DensityHistory::new(n, 0.0);
    for l in 1..=12 {
        let mu: Vec<f64> = (0..n).map(|i| ((i * l) as f64 * 0.37).sin()).collect();
        hist.push(l as f64 * dt, vec![0.0; n], mu).unwrap();
        hist.push_uniform_piece(2);
    }
    let t = 6.0 * dt;
    let before = history_apply(&ctx, &hist, t, Component::Normal, dt).unwrap();
    let mut altered = hist.clone();
    for l in 6..=12 {
        altered.mu[l].iter_mut().for_each(|v| *v += 10.0);
    }
    let after = history_apply(&ctx, &altered, t, Component::Normal, dt).unwrap();
    assert_eq!(before, after);
    // Altering a level inside the evaluated window does change the result.
    altered.mu[3][0] += 1.0;
    let changed = history_apply(&ctx, &altered, t, Component::Normal, dt).unwrap();
    assert_ne!(before, changed);
}
