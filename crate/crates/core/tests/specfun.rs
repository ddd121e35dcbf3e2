mod common;

use common::e1_oracle;
use csie::specfun::{exp_integral_e1, exp_integral_en, gauss_legendre, lagrange_eval, lagrange_weights, radau_right_nodes};
use proptest::prelude::*;

#[test]
fn e1_matches_quadrature_on_log_grid() {
    for i in 0..=50 {
        let x = 10f64.powf(-8.0 + 0.2 * i as f64);
        let got: f64 = exp_integral_e1(x).unwrap();
        let want = e1_oracle(x);
        assert!((got - want).abs() <= 1e-13 * want, "x={x:e}: {got:e} vs {want:e}");
    }
}

#[test]
fn en_matches_quadrature() {
    for &x in &[0.05, 0.7, 3.0, 20.0] {
        for m in 2..=5usize {
            let want = common::quad(|t: f64| (-x * t).exp() / t.powi(m as i32), 1.0, 1.0 + 800.0 / x);
            let got: f64 = exp_integral_en(m, x).unwrap();
            assert!((got - want).abs() <= 1e-12 * want, "m={m} x={x}");
        }
    }
}

#[test]
fn radau_nodes_closed_forms() {
    // Nodes on [0, 1], right endpoint included.
    let two = radau_right_nodes::<f64>(2).unwrap();
    assert!((two.points[0] - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(two.points[1], 1.0);
    let three = radau_right_nodes::<f64>(3).unwrap();
    let s6 = 6f64.sqrt();
    assert!((three.points[0] - (4.0 - s6) / 10.0).abs() < 1e-14);
    assert!((three.points[1] - (4.0 + s6) / 10.0).abs() < 1e-14);
    for k in 1..=5 {
        let r = radau_right_nodes::<f64>(k).unwrap();
        // Exact for polynomials of degree 2k − 2.
        for d in 0..=(2 * k - 2) as i32 {
            let exact = 1.0 / (d + 1) as f64;
            assert!((r.integrate(|x| x.powi(d)) - exact).abs() < 1e-13, "k={k} d={d}");
        }
    }
    assert!(radau_right_nodes::<f64>(0).is_err());
}

#[test]
fn gauss_legendre_integrates_exponential() {
    let g = gauss_legendre::<f64>(12).unwrap();
    let v = g.integrate(|x| x.exp());
    assert!((v - (1f64.exp() - (-1f64).exp())).abs() < 1e-14);
}

proptest! {
    #[test]
    fn lagrange_reproduces_quadratics(a in -2.0..2.0f64, b in -2.0..2.0f64, c in -2.0..2.0f64, t in -1.0..3.0f64) {
        let nodes = [0.0, 0.5, 1.3];
        let p = |x: f64| a + b * x + c * x * x;
        let vals: Vec<f64> = nodes.iter().map(|&x| p(x)).collect();
        let got = lagrange_eval(&nodes, &vals, t).unwrap();
        prop_assert!((got - p(t)).abs() < 1e-11);
        let w = lagrange_weights(&nodes, t).unwrap();
        prop_assert!((w.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
