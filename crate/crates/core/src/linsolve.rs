//! Matrix-free Krylov solvers with deterministic reductions.
//!
//! Dot products run serially in index order; only the operator application
//! may be parallel, and it must be element-wise deterministic.

use crate::error::{Error, Result};
use crate::real::Real;

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Outcome of a Krylov solve.
#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Conjugate gradients for a symmetric positive definite operator.
///
/// Iterates until `|b - A x| <= tol |b|`, starting from `x`.
pub fn conjugate_gradient<T: Real>(
    apply: impl Fn(&[T]) -> Vec<T>,
    b: &[T],
    x: &mut [T],
    tol: T,
    max_iters: usize,
) -> Result<SolveStats> {
    let b_norm = norm(b).max(T::min_positive_value());
    let ax = apply(x);
    let mut r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    for it in 0..=max_iters {
        let rel = rr.sqrt() / b_norm;
        if rel <= tol {
            return Ok(SolveStats {
                iterations: it,
                relative_residual: rel.to_f64_lossy(),
            });
        }
        if it == max_iters {
            break;
        }
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if pap <= T::zero() {
            return Err(Error::NoConvergence {
                solver: "conjugate gradient (operator not positive definite)",
                iters: it,
                residual: rel.to_f64_lossy(),
            });
        }
        let alpha = rr / pap;
        for i in 0..x.len() {
            x[i] = x[i] + alpha * p[i];
            r[i] = r[i] - alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..p.len() {
            p[i] = r[i] + beta * p[i];
        }
    }
    Err(Error::NoConvergence {
        solver: "conjugate gradient",
        iters: max_iters,
        residual: (rr.sqrt() / b_norm).to_f64_lossy(),
    })
}

/// Jacobi-preconditioned BiCGSTAB for general nonsingular operators.
pub fn bicgstab<T: Real>(
    apply: impl Fn(&[T]) -> Vec<T>,
    diag: &[T],
    b: &[T],
    x: &mut [T],
    tol: T,
    max_iters: usize,
) -> Result<SolveStats> {
    let n = b.len();
    let b_norm = norm(b).max(T::min_positive_value());
    let precond = |v: &[T]| -> Vec<T> { v.iter().zip(diag).map(|(&vi, &d)| vi / d).collect() };
    let ax = apply(x);
    let mut r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
    let r_hat = r.clone();
    let mut rho = T::one();
    let mut alpha = T::one();
    let mut omega = T::one();
    let mut v = vec![T::zero(); n];
    let mut p = vec![T::zero(); n];
    let mut rel = norm(&r) / b_norm;
    for it in 0..max_iters {
        if rel <= tol {
            return Ok(SolveStats {
                iterations: it,
                relative_residual: rel.to_f64_lossy(),
            });
        }
        let rho_new = dot(&r_hat, &r);
        if rho_new == T::zero() {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let p_hat = precond(&p);
        v = apply(&p_hat);
        let denom = dot(&r_hat, &v);
        if denom == T::zero() {
            break;
        }
        alpha = rho / denom;
        let s: Vec<T> = r.iter().zip(&v).map(|(&ri, &vi)| ri - alpha * vi).collect();
        if norm(&s) / b_norm <= tol {
            for i in 0..n {
                x[i] = x[i] + alpha * p_hat[i];
            }
            r = s;
            rel = norm(&r) / b_norm;
            continue;
        }
        let s_hat = precond(&s);
        let t = apply(&s_hat);
        let tt = dot(&t, &t);
        if tt == T::zero() {
            break;
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] = x[i] + alpha * p_hat[i] + omega * s_hat[i];
            r[i] = s[i] - omega * t[i];
        }
        rel = norm(&r) / b_norm;
        if omega == T::zero() {
            break;
        }
    }
    if rel <= tol {
        return Ok(SolveStats {
            iterations: max_iters,
            relative_residual: rel.to_f64_lossy(),
        });
    }
    Err(Error::NoConvergence {
        solver: "BiCGSTAB",
        iters: max_iters,
        residual: rel.to_f64_lossy(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(v: &[f64], a: f64, b: f64, c: f64) -> Vec<f64> {
        let n = v.len();
        (0..n)
            .map(|i| a * v[(i + n - 1) % n] + b * v[i] + c * v[(i + 1) % n])
            .collect()
    }

    #[test]
    fn cg_solves_periodic_helmholtz() {
        let n = 40;
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin() + 2.0).collect();
        let mut x = vec![0.0; n];
        let stats = conjugate_gradient(|v| tridiag(v, -1.0, 3.0, -1.0), &b, &mut x, 1e-13, 200).unwrap();
        let r = tridiag(&x, -1.0, 3.0, -1.0);
        for i in 0..n {
            assert!((r[i] - b[i]).abs() < 1e-11);
        }
        assert!(stats.iterations > 0);
    }

    #[test]
    fn bicgstab_solves_nonsymmetric_system() {
        let n = 50;
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).cos()).collect();
        let mut x = vec![0.0; n];
        let diag = vec![4.0; n];
        bicgstab(|v| tridiag(v, -1.5, 4.0, -0.5), &diag, &b, &mut x, 1e-13, 500).unwrap();
        let r = tridiag(&x, -1.5, 4.0, -0.5);
        for i in 0..n {
            assert!((r[i] - b[i]).abs() < 1e-11);
        }
    }

    #[test]
    fn cg_reports_non_convergence() {
        let b: Vec<f64> = (0..10).map(|i| (i * i) as f64).collect();
        let mut x = vec![0.0; 10];
        let err = conjugate_gradient(|v| tridiag(v, -1.0, 2.001, -1.0), &b, &mut x, 1e-30, 1);
        assert!(matches!(err, Err(Error::NoConvergence { .. })));
    }
}
