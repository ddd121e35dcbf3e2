//! Special functions and one-dimensional interpolation / quadrature rules.
//!
//! Everything here is a pure function of its arguments. The scalar routines
//! are generic over [`Real`]; node generation is carried out in `f64` and
//! converted, since the rules are tabulated once and reused.

use crate::{Error, Real, Result};

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Arguments above this threshold are treated as underflow.
pub const UNDERFLOW_ARG: f64 = 700.0;

/// Ordered quadrature or interpolation nodes on a reference interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Nodes1D<T> {
    pub points: Vec<T>,
    /// Empty for pure interpolation node sets.
    pub weights: Vec<T>,
}

impl<T: Real> Nodes1D<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Applies the rule to `f`; the rule must carry weights.
    pub fn integrate<F: Fn(T) -> T>(&self, f: F) -> T {
        self.points
            .iter()
            .zip(&self.weights)
            .fold(T::zero(), |acc, (&x, &w)| acc + w * f(x))
    }

    /// Affine map of the rule from `[from.0, from.1]` to `[a, b]`.
    pub fn mapped(&self, from: (T, T), a: T, b: T) -> Self {
        let scale = (b - a) / (from.1 - from.0);
        Self {
            points: self
                .points
                .iter()
                .map(|&x| a + (x - from.0) * scale)
                .collect(),
            weights: self.weights.iter().map(|&w| w * scale).collect(),
        }
    }
}

/// Weights `w_i` such that `p(t) = Σ w_i v_i` for the interpolant `p`
/// through `(nodes_i, v_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StencilWeights<T> {
    pub weights: Vec<T>,
}

impl<T: Real> StencilWeights<T> {
    pub fn apply(&self, values: &[T]) -> T {
        self.weights
            .iter()
            .zip(values)
            .fold(T::zero(), |acc, (&w, &v)| acc + w * v)
    }
}

fn cst<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("constant representable in scalar type")
}

/// Exponential integral `E1(x) = ∫_x^∞ e^{-t}/t dt` for `x > 0`.
pub fn exp_integral_e1<T: Real>(x: T) -> Result<T> {
    exp_integral_en(1, x)
}

/// Generalized exponential integral `E_n(x) = ∫_1^∞ e^{-xt} t^{-n} dt`,
/// `n ≥ 1`, `x > 0`. Series below `x = 1`, modified Lentz continued fraction
/// above.
pub fn exp_integral_en<T: Real>(n: usize, x: T) -> Result<T> {
    if n == 0 {
        return Err(Error::Unsupported {
            what: "exponential integral order",
            value: 0,
            min: 1,
            max: usize::MAX,
        });
    }
    if !(x > T::zero()) {
        return Err(Error::Domain(format!(
            "exponential integral needs x > 0, got {x:?}"
        )));
    }
    if x > cst(UNDERFLOW_ARG) {
        return Ok(T::zero());
    }
    let eps = T::epsilon();
    let max_iter = 10_000;
    let nf = cst::<T>(n as f64);
    if x > T::one() {
        let tiny = T::min_positive_value() / eps;
        let mut b = x + nf;
        let mut c = T::one() / tiny;
        let mut d = T::one() / b;
        let mut h = d;
        for i in 1..max_iter {
            let fi = cst::<T>(i as f64);
            let a = -fi * (nf - T::one() + fi);
            b = b + cst(2.0);
            d = T::one() / (a * d + b);
            c = b + a / c;
            let del = c * d;
            h = h * del;
            if (del - T::one()).abs() < eps {
                return Ok(h * (-x).exp());
            }
        }
        return Err(Error::Domain(format!(
            "continued fraction for E_{n}({x:?}) did not converge"
        )));
    }
    let gamma = cst::<T>(EULER_GAMMA);
    let mut ans = if n == 1 {
        -x.ln() - gamma
    } else {
        T::one() / (nf - T::one())
    };
    let mut fact = T::one();
    for i in 1..max_iter {
        let fi = cst::<T>(i as f64);
        fact = fact * (-x / fi);
        let del = if i != n - 1 {
            -fact / (fi - nf + T::one())
        } else {
            let psi = (1..n).fold(-gamma, |acc, ii| acc + T::one() / cst(ii as f64));
            fact * (-x.ln() + psi)
        };
        ans = ans + del;
        if del.abs() < ans.abs() * eps * cst(0.25) {
            return Ok(ans);
        }
    }
    Err(Error::Domain(format!(
        "series for E_{n}({x:?}) did not converge"
    )))
}

/// Legendre polynomial `P_n(x)` and its derivative.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let dp = if (1.0 - x * x).abs() < 1e-300 {
        0.5 * nf * (nf + 1.0) * x.powi(n as i32 + 1)
    } else {
        nf * (p0 - x * p1) / (1.0 - x * x)
    };
    (p1, dp)
}

/// Gauss–Legendre rule with `p` points on `[-1, 1]`, `1 ≤ p ≤ 64`.
pub fn gauss_legendre<T: Real>(p: usize) -> Result<Nodes1D<T>> {
    if !(1..=64).contains(&p) {
        return Err(Error::Unsupported {
            what: "Gauss-Legendre point count",
            value: p,
            min: 1,
            max: 64,
        });
    }
    let mut pts = vec![0.0f64; p];
    let mut wts = vec![0.0f64; p];
    let pf = p as f64;
    for i in 0..p.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (pf + 0.5)).cos();
        for _ in 0..100 {
            let (pn, dp) = legendre_with_derivative(p, x);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(p, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        pts[i] = -x;
        pts[p - 1 - i] = x;
        wts[i] = w;
        wts[p - 1 - i] = w;
    }
    if p % 2 == 1 {
        pts[p / 2] = 0.0;
    }
    Ok(Nodes1D {
        points: pts.into_iter().map(cst).collect(),
        weights: wts.into_iter().map(cst).collect(),
    })
}

/// Right Gauss–Radau nodes on `[0, 1]` (last node at 1), `1 ≤ k ≤ 16`.
///
/// The interior nodes are the zeros of `P_{k-1} - P_k` on `(-1, 1)`, located
/// by sign-change bracketing and refined by bisection.
pub fn radau_right_nodes<T: Real>(k: usize) -> Result<Nodes1D<T>> {
    if !(1..=16).contains(&k) {
        return Err(Error::Unsupported {
            what: "Radau stage count",
            value: k,
            min: 1,
            max: 16,
        });
    }
    let f = |x: f64| legendre_with_derivative(k - 1, x).0 - legendre_with_derivative(k, x).0;
    let mut roots = Vec::with_capacity(k);
    let samples = 8000;
    let upper = 1.0 - 1e-7;
    let mut xa = -1.0;
    let mut fa = f(xa);
    for s in 1..=samples {
        let xb = -1.0 + (upper + 1.0) * s as f64 / samples as f64;
        let fb = f(xb);
        if fa == 0.0 {
            roots.push(xa);
        } else if fa * fb < 0.0 {
            let (mut lo, mut hi, mut flo) = (xa, xb, fa);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let fm = f(mid);
                if fm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if flo * fm < 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    flo = fm;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        xa = xb;
        fa = fb;
    }
    if roots.len() != k - 1 {
        return Err(Error::Domain(format!(
            "found {} interior Radau nodes, expected {}",
            roots.len(),
            k - 1
        )));
    }
    let kf = k as f64;
    let mut points = Vec::with_capacity(k);
    let mut weights = Vec::with_capacity(k);
    for &x in &roots {
        let pk1 = legendre_with_derivative(k - 1, x).0;
        points.push(0.5 * (1.0 + x));
        weights.push(0.5 * (1.0 + x) / (kf * kf * pk1 * pk1));
    }
    points.push(1.0);
    weights.push(1.0 / (kf * kf));
    Ok(Nodes1D {
        points: points.into_iter().map(cst).collect(),
        weights: weights.into_iter().map(cst).collect(),
    })
}

fn check_distinct<T: Real>(nodes: &[T]) -> Result<()> {
    for i in 0..nodes.len() {
        for j in (i + 1)..nodes.len() {
            if nodes[i] == nodes[j] {
                return Err(Error::DuplicateNodes);
            }
        }
    }
    Ok(())
}

/// Lagrange interpolation weights at `t` for the given nodes (second
/// barycentric form). Extrapolation is allowed.
pub fn lagrange_weights<T: Real>(nodes: &[T], t: T) -> Result<StencilWeights<T>> {
    check_distinct(nodes)?;
    let n = nodes.len();
    if let Some(hit) = nodes.iter().position(|&x| x == t) {
        let mut weights = vec![T::zero(); n];
        weights[hit] = T::one();
        return Ok(StencilWeights { weights });
    }
    let bary: Vec<T> = (0..n)
        .map(|i| {
            let prod = (0..n)
                .filter(|&j| j != i)
                .fold(T::one(), |acc, j| acc * (nodes[i] - nodes[j]));
            T::one() / prod
        })
        .collect();
    let terms: Vec<T> = (0..n).map(|i| bary[i] / (t - nodes[i])).collect();
    let denom = terms.iter().fold(T::zero(), |acc, &v| acc + v);
    Ok(StencilWeights {
        weights: terms.into_iter().map(|v| v / denom).collect(),
    })
}

/// Evaluates the interpolating polynomial through `(nodes_i, values_i)` at `t`.
pub fn lagrange_eval<T: Real>(nodes: &[T], values: &[T], t: T) -> Result<T> {
    if nodes.len() != values.len() {
        return Err(Error::Domain(format!(
            "{} nodes but {} values",
            nodes.len(),
            values.len()
        )));
    }
    Ok(lagrange_weights(nodes, t)?.apply(values))
}

/// Monomial coefficients of every Lagrange basis polynomial:
/// `ℓ_q(x) = Σ_m out[q][m] x^m`.
pub fn lagrange_monomials(nodes: &[f64]) -> Result<Vec<Vec<f64>>> {
    check_distinct(nodes)?;
    let n = nodes.len();
    let mut out = Vec::with_capacity(n);
    for q in 0..n {
        let mut poly = vec![1.0];
        let mut denom = 1.0;
        for (p, &xp) in nodes.iter().enumerate() {
            if p == q {
                continue;
            }
            let mut next = vec![0.0; poly.len() + 1];
            for (m, &c) in poly.iter().enumerate() {
                next[m + 1] += c;
                next[m] -= c * xp;
            }
            poly = next;
            denom *= nodes[q] - xp;
        }
        out.push(poly.into_iter().map(|c| c / denom).collect());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn e1_reference_and_errors() {
        assert_relative_eq!(
            exp_integral_e1(1.0f64).unwrap(),
            0.219_383_934_395_520_29,
            max_relative = 1e-14
        );
        assert!(exp_integral_e1(0.0f64).is_err());
        assert!(exp_integral_e1(-1.0f64).is_err());
        assert_eq!(exp_integral_e1(701.0f64).unwrap(), 0.0);
        let x = 1e-8f64;
        let shifted = exp_integral_e1(x).unwrap() + x.ln();
        assert!((shifted + EULER_GAMMA).abs() <= 1e-8 * (1.0 + 1e-6));
        assert!((shifted + EULER_GAMMA - x).abs() < 1e-14);
        let (a, b, c) = (
            exp_integral_e1(10.0f64).unwrap(),
            exp_integral_e1(1.0f64).unwrap(),
            exp_integral_e1(0.1f64).unwrap(),
        );
        assert!(a < b && b < c);
    }

    #[test]
    fn e1_single_precision_is_usable() {
        let v: f32 = exp_integral_e1(1.0f32).unwrap();
        assert!((v - 0.219_383_93).abs() < 1e-6);
    }

    #[test]
    fn en_recurrence() {
        for &x in &[0.05, 0.7, 1.0, 3.0, 40.0] {
            for n in 1..5usize {
                let lhs = exp_integral_en(n + 1, x).unwrap();
                let rhs = ((-x as f64).exp() - x * exp_integral_en(n, x).unwrap()) / n as f64;
                assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn e1_derivative_identity() {
        // Five-point central difference; the step shrinks with x near the
        // logarithmic singularity.
        let e1 = |x: f64| exp_integral_e1(x).unwrap();
        for i in 0..50 {
            let x = 0.1 + 9.9 * i as f64 / 49.0;
            let h = 1e-3 * x.min(1.0);
            let d = (e1(x - 2.0 * h) - 8.0 * e1(x - h) + 8.0 * e1(x + h) - e1(x + 2.0 * h))
                / (12.0 * h);
            let exact = -(-x).exp() / x;
            assert!(((d - exact) / exact).abs() < 1e-10, "x = {x}");
        }
    }

    #[test]
    fn gauss_legendre_small_rules() {
        let g1 = gauss_legendre::<f64>(1).unwrap();
        assert_eq!(g1.points, vec![0.0]);
        assert_relative_eq!(g1.weights[0], 2.0);
        let g2 = gauss_legendre::<f64>(2).unwrap();
        assert_relative_eq!(g2.points[1], 1.0 / 3f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(g2.weights[0], 1.0, max_relative = 1e-15);
        let g3 = gauss_legendre::<f64>(3).unwrap();
        assert_relative_eq!(g3.integrate(|t| t.powi(4)), 0.4, max_relative = 1e-15);
        assert!(gauss_legendre::<f64>(0).is_err());
        assert!(gauss_legendre::<f64>(65).is_err());
    }

    #[test]
    fn gauss_legendre_exactness() {
        for p in [5usize, 17, 40, 64] {
            let g = gauss_legendre::<f64>(p).unwrap();
            for deg in (0..2 * p).step_by(3) {
                let exact = if deg % 2 == 0 { 2.0 / (deg as f64 + 1.0) } else { 0.0 };
                let got = g.integrate(|t| t.powi(deg as i32));
                assert!((got - exact).abs() < 1e-13, "p={p} deg={deg}");
            }
        }
    }

    #[test]
    fn radau_closed_forms() {
        let r1 = radau_right_nodes::<f64>(1).unwrap();
        assert_eq!(r1.points, vec![1.0]);
        let r2 = radau_right_nodes::<f64>(2).unwrap();
        assert_relative_eq!(r2.points[0], 1.0 / 3.0, max_relative = 1e-15);
        let r3 = radau_right_nodes::<f64>(3).unwrap();
        let s6 = 6f64.sqrt();
        assert!((r3.points[0] - (4.0 - s6) / 10.0).abs() < 1e-15);
        assert!((r3.points[1] - (4.0 + s6) / 10.0).abs() < 1e-15);
        assert_eq!(r3.points[2], 1.0);
        assert!(radau_right_nodes::<f64>(0).is_err());
        assert!(radau_right_nodes::<f64>(17).is_err());
    }

    #[test]
    fn radau_exactness_and_weights() {
        for k in 1..=16usize {
            let r = radau_right_nodes::<f64>(k).unwrap();
            let total: f64 = r.weights.iter().sum();
            assert!((total - 1.0).abs() < 1e-14, "k={k}");
            for deg in 0..=(2 * k - 2) {
                let got = r.integrate(|t| t.powi(deg as i32));
                assert!((got - 1.0 / (deg as f64 + 1.0)).abs() < 1e-13, "k={k} deg={deg}");
            }
            assert!(r.points.windows(2).all(|w| w[0] < w[1]));
            assert!(r.points[0] > 0.0);
        }
    }

    #[test]
    fn lagrange_examples() {
        assert_relative_eq!(
            lagrange_eval(&[1.0, 2.0, 3.0], &[1.0, 4.0, 9.0], 4.0).unwrap(),
            16.0,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            lagrange_eval(&[0.3, 1.1, 2.0, 5.0], &[7.0; 4], -3.0).unwrap(),
            7.0,
            max_relative = 1e-13
        );
        assert_eq!(
            lagrange_eval(&[1.0, 1.0], &[0.0, 1.0], 0.5),
            Err(Error::DuplicateNodes)
        );
        let r = radau_right_nodes::<f64>(5).unwrap();
        let nodes: Vec<f64> = r.points.iter().map(|p| 0.1 * p).collect();
        let vals: Vec<f64> = nodes.iter().map(|t| t.exp()).collect();
        assert!((lagrange_eval(&nodes, &vals, 0.05).unwrap() - 0.05f64.exp()).abs() < 1e-8);
    }

    #[test]
    fn monomial_basis_matches_barycentric() {
        let nodes = [0.0, 0.25, 0.7, 1.0, 1.6];
        let coeffs = lagrange_monomials(&nodes).unwrap();
        for &t in &[-0.4, 0.1, 0.9, 2.0] {
            let w = lagrange_weights(&nodes, t).unwrap();
            for q in 0..nodes.len() {
                let v: f64 = coeffs[q].iter().rev().fold(0.0, |acc, &c| acc * t + c);
                assert!((v - w.weights[q]).abs() < 1e-12);
            }
        }
    }
}
