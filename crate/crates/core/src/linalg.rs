//! Matrix-free Krylov solvers for the symmetric grid operators.
//!
//! Vectors are full grid arrays; constrained (Dirichlet) entries are kept at
//! zero by the operator and the preconditioner, so plain dot products over
//! the whole array are dot products over the unknowns.

use ndarray::{Array2, Zip};

#[derive(Clone, Copy, Debug)]
pub struct KrylovStats {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

fn dot(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    Zip::from(a).and(b).fold(0.0, |s, x, y| s + x * y)
}

fn axpy(y: &mut Array2<f64>, a: f64, x: &Array2<f64>) {
    y.zip_mut_with(x, |yi, xi| *yi += a * xi);
}

/// Preconditioned conjugate gradients for a symmetric positive-definite
/// operator. `inv_diag` is the Jacobi preconditioner (0 on constrained
/// entries).
pub fn pcg<A>(apply: A, b: &Array2<f64>, inv_diag: &Array2<f64>, tol: f64, max_iter: usize) -> (Array2<f64>, KrylovStats)
where
    A: Fn(&Array2<f64>) -> Array2<f64>,
{
    let mut x = Array2::zeros(b.raw_dim());
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return (x, KrylovStats { iterations: 0, relative_residual: 0.0, converged: true });
    }
    let mut r = b.clone();
    let mut z = &r * inv_diag;
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut rel = 1.0;
    for it in 1..=max_iter {
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return (x, KrylovStats { iterations: it, relative_residual: rel, converged: false });
        }
        let a = rz / pap;
        axpy(&mut x, a, &p);
        axpy(&mut r, -a, &ap);
        rel = dot(&r, &r).sqrt() / bnorm;
        if rel <= tol {
            return (x, KrylovStats { iterations: it, relative_residual: rel, converged: true });
        }
        z = &r * inv_diag;
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.zip_mut_with(&z, |pi, zi| *pi = zi + beta * *pi);
    }
    (x, KrylovStats { iterations: max_iter, relative_residual: rel, converged: false })
}

/// Preconditioned MINRES for symmetric indefinite operators; the
/// preconditioner must be positive definite (here `1/|diag|`).
pub fn minres<A>(apply: A, b: &Array2<f64>, inv_diag: &Array2<f64>, tol: f64, max_iter: usize) -> (Array2<f64>, KrylovStats)
where
    A: Fn(&Array2<f64>) -> Array2<f64>,
{
    let shape = b.raw_dim();
    let mut x = Array2::zeros(shape.clone());
    let mut r1 = b.clone();
    let mut y = &r1 * inv_diag;
    let beta1 = dot(&r1, &y).sqrt();
    if beta1 == 0.0 {
        return (x, KrylovStats { iterations: 0, relative_residual: 0.0, converged: true });
    }
    let bnorm = dot(b, b).sqrt();
    let mut r2 = r1.clone();
    let (mut oldb, mut beta) = (0.0, beta1);
    let (mut dbar, mut epsln, mut phibar) = (0.0, 0.0, beta1);
    let (mut cs, mut sn) = (-1.0, 0.0);
    let mut w = Array2::<f64>::zeros(shape.clone());
    let mut w2 = Array2::<f64>::zeros(shape);
    let mut iterations = 0;
    let mut estimate_ok = false;
    for it in 1..=max_iter {
        iterations = it;
        let v = y.mapv(|e| e / beta);
        y = apply(&v);
        if it >= 2 {
            axpy(&mut y, -beta / oldb, &r1);
        }
        let alfa = dot(&v, &y);
        axpy(&mut y, -alfa / beta, &r2);
        r1 = std::mem::replace(&mut r2, y.clone());
        y = &r2 * inv_diag;
        oldb = beta;
        beta = dot(&r2, &y).max(0.0).sqrt();
        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = (gbar * gbar + beta * beta).sqrt().max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;
        let w1 = std::mem::replace(&mut w2, w.clone());
        Zip::from(&mut w).and(&v).and(&w1).and(&w2).for_each(|wi, vi, a, b| {
            *wi = (vi - oldeps * a - delta * b) / gamma;
        });
        axpy(&mut x, phi, &w);
        if phibar / beta1 <= tol || beta == 0.0 {
            estimate_ok = true;
            break;
        }
    }
    // report the true residual, not the preconditioned estimate
    let mut r = b.clone();
    axpy(&mut r, -1.0, &apply(&x));
    let rel = dot(&r, &r).sqrt() / bnorm;
    (
        x,
        KrylovStats {
            iterations,
            relative_residual: rel,
            converged: estimate_ok,
        },
    )
}
