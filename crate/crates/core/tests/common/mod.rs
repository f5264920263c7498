#![allow(dead_code)]

use cubic_surfaces::geometry::{BackgroundMetric, CubicDifferential, Domain, MetricSolution, SignCase};
use cubic_surfaces::pde::{constant_solution, solve_newton, NewtonOptions, PdeProblem};
use cubic_surfaces::Complex64;
use ndarray::Array2;

pub fn cx(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Square torus with the constant solution for `Q = c`.
pub fn torus_constant(case: SignCase, c: Complex64, n: usize) -> (MetricSolution, CubicDifferential) {
    let d = Domain::torus(cx(0.0, 1.0), n, n).unwrap();
    let u = constant_solution(c, case).unwrap();
    let sol = MetricSolution::from_u(&d, &BackgroundMetric::default(), Array2::from_elem((n, n), u)).unwrap();
    (sol, CubicDifferential::constant(c))
}

/// Newton solution on a domain, started from `u0`.
pub fn newton(p: &PdeProblem, u0: f64) -> MetricSolution {
    let start = Array2::from_elem(p.domain.shape(), u0);
    solve_newton(p, &start, &NewtonOptions::default())
        .unwrap()
        .require_converged()
        .unwrap()
        .solution
}

/// `ψ = log(√2 / (1 ∓ |z|²))`, which solves `2ψ_zz̄ + λe^{2ψ} = 0` for
/// `λ = −1` (upper sign) and `λ = 1`.
pub fn round_psi(domain: &Domain, lambda: i8) -> MetricSolution {
    let s = lambda as f64;
    let psi = domain.field(|z| (std::f64::consts::SQRT_2 / (1.0 + s * z.norm_sqr())).ln());
    MetricSolution::from_psi(domain, &BackgroundMetric::default(), psi).unwrap()
}

/// Deterministic pseudo-random numbers in [−1, 1).
pub fn noise(seed: u64, n: usize) -> Vec<f64> {
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    (0..n)
        .map(|_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
        .collect()
}
