//! Independent quadrature oracles shared by the integration tests.

#![allow(dead_code)]

use csie::quad::{integrate, integrate_split};

/// `E1(x)` from `∫_0^∞ exp(−x e^v) dv` (the substitution `t = x e^v`
/// removes the logarithmic endpoint behaviour).
pub fn e1_oracle(x: f64) -> f64 {
    let v_max = (800.0 / x).ln().max(1.0);
    let mut breaks = vec![0.0];
    // Break where x·e^v crosses 1, 4, 16, … so every cell is smooth.
    let mut c = 1.0;
    while c < 800.0 {
        let v = (c / x).ln();
        if v > 0.0 && v < v_max {
            breaks.push(v);
        }
        c *= 4.0;
    }
    breaks.push(v_max);
    integrate_split(|v: f64| (-x * v.exp()).exp(), &breaks, 0.0, 1e-14).unwrap()
}

/// `∫_0^τ e^{−a/u} (b+u)^j / u² du` by adaptive quadrature.
pub fn stage_integral_oracle(a: f64, b: f64, tau: f64, j: i32) -> f64 {
    let f = |u: f64| if u <= 0.0 { 0.0 } else { (-a / u).exp() * (b + u).powi(j) / (u * u) };
    let mut breaks = vec![0.0];
    let mut p = a / 64.0;
    while p < tau {
        breaks.push(p);
        p *= 2.0;
    }
    breaks.push(tau);
    integrate_split(f, &breaks, 0.0, 1e-14).unwrap()
}

/// `−proj/(8π) ∫_0^δ e^{−r²/4u} ℓ(u)/u² du` for a basis polynomial
/// `ℓ(u) = Σ coeffs[m] u^m`.
pub fn time_kernel_oracle(r2: f64, proj: f64, delta: f64, coeffs: &[f64]) -> f64 {
    let a = 0.25 * r2;
    let f = |u: f64| {
        if u <= 0.0 {
            return 0.0;
        }
        let poly: f64 = coeffs.iter().rev().fold(0.0, |acc, c| acc * u + c);
        (-a / u).exp() * poly / (u * u)
    };
    let mut breaks = vec![0.0];
    let mut p = a / 64.0;
    while p < delta {
        breaks.push(p);
        p *= 2.0;
    }
    breaks.push(delta);
    -proj / (8.0 * std::f64::consts::PI) * integrate_split(f, &breaks, 0.0, 1e-14).unwrap()
}

/// Plain adaptive integral with tight tolerances.
pub fn quad(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    integrate(f, a, b, 1e-15, 1e-14).unwrap().value
}
