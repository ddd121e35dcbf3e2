//! Unrestarted GMRES with modified Gram–Schmidt and Givens rotations.

use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GmresStatus {
    Converged,
    /// The Krylov space became invariant and the residual vanished.
    HappyBreakdown,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmresOutcome<T> {
    pub x: Vec<T>,
    pub iterations: usize,
    /// Final relative residual estimate `‖b − Ax‖/‖b‖`.
    pub residual: T,
    pub status: GmresStatus,
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Solves `A x = b` from a zero initial guess.
///
/// Stops when the relative residual drops below `tol` or after `maxit`
/// iterations (reported as [`GmresStatus::MaxIterations`], not an error). An
/// unhappy breakdown — an invariant Krylov space with a nonzero residual — is
/// returned as [`Error::Breakdown`].
pub fn gmres<T: Real, F>(apply: F, b: &[T], tol: T, maxit: usize) -> Result<GmresOutcome<T>>
where
    F: Fn(&[T]) -> Vec<T>,
{
    let n = b.len();
    let beta = norm(b);
    if beta == T::zero() {
        return Ok(GmresOutcome {
            x: vec![T::zero(); n],
            iterations: 0,
            residual: T::zero(),
            status: GmresStatus::Converged,
        });
    }
    if !beta.is_finite() {
        return Err(Error::Domain("GMRES right-hand side is not finite".into()));
    }
    let mut basis: Vec<Vec<T>> = vec![b.iter().map(|&v| v / beta).collect()];
    let mut hess: Vec<Vec<T>> = Vec::new();
    let mut cs: Vec<T> = Vec::new();
    let mut sn: Vec<T> = Vec::new();
    let mut g = vec![beta];
    let mut status = GmresStatus::MaxIterations;
    let mut rel = T::one();
    let breakdown_tol = T::epsilon() * T::from_f64(10.0).unwrap();
    let maxit = maxit.min(n.max(1));

    for k in 0..maxit {
        let mut w = apply(&basis[k]);
        let wnorm0 = norm(&w);
        let mut col = Vec::with_capacity(k + 2);
        for v in &basis {
            let hij = dot(&w, v);
            for (wi, &vi) in w.iter_mut().zip(v) {
                *wi = *wi - hij * vi;
            }
            col.push(hij);
        }
        let hnext = norm(&w);
        col.push(hnext);
        for i in 0..k {
            let t = cs[i] * col[i] + sn[i] * col[i + 1];
            col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
            col[i] = t;
        }
        let denom = col[k].hypot(col[k + 1]);
        if denom == T::zero() {
            // The new direction is mapped into the existing span with a
            // singular projected matrix: no least-squares progress possible.
            return Err(Error::Breakdown { iteration: k + 1 });
        }
        let (c, s) = (col[k] / denom, col[k + 1] / denom);
        col[k] = denom;
        col[k + 1] = T::zero();
        cs.push(c);
        sn.push(s);
        let gk = g[k];
        g[k] = c * gk;
        g.push(-s * gk);
        hess.push(col);
        rel = g[k + 1].abs() / beta;

        let invariant = hnext <= breakdown_tol * wnorm0.max(T::min_positive_value());
        if rel <= tol {
            status = GmresStatus::Converged;
        } else if invariant {
            if rel <= tol.max(T::epsilon().sqrt()) {
                status = GmresStatus::HappyBreakdown;
            } else {
                return Err(Error::Breakdown { iteration: k + 1 });
            }
        }
        if status != GmresStatus::MaxIterations {
            break;
        }
        if k + 1 < maxit {
            basis.push(w.iter().map(|&v| v / hnext).collect());
        }
    }
    let m = hess.len();
    let mut y = vec![T::zero(); m];
    for i in (0..m).rev() {
        let mut s = g[i];
        for j in (i + 1)..m {
            s = s - hess[j][i] * y[j];
        }
        y[i] = s / hess[i][i];
    }
    let mut x = vec![T::zero(); n];
    for (v, &yi) in basis.iter().zip(&y) {
        for (xi, &vi) in x.iter_mut().zip(v) {
            *xi = *xi + yi * vi;
        }
    }
    Ok(GmresOutcome {
        x,
        iterations: m,
        residual: rel,
        status,
    })
}
