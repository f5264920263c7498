//! The Ţiţeica/Toda equation
//!
//! ```text
//! Δ_μ u + 16ε‖Q‖²_μ e^{−2u} + 2λ e^u − 2κ = 0
//! ```
//!
//! on a flat torus or a planar Dirichlet patch, together with the local
//! form `2ψ_zz̄ + ε|Q|²e^{−4ψ} + λe^{2ψ} = 0`.
//!
//! `Δ_μ = σ⁻¹(∂x² + ∂y²)` is discretized with the 5-point stencil (the
//! mixed-derivative stencil on skew tori). Dirichlet unknowns are the
//! interior nodes; the residual at a boundary node is `u − g`.

use crate::error::{Error, Result};
use crate::geometry::{
    cubic_norm_sq, gauss_curvature, BackgroundMetric, CubicDifferential, Domain, MetricSolution, SignCase,
};
use crate::linalg::{minres, pcg, KrylovStats};
use ndarray::{Array2, Zip};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Iterates leaving `|u| ≤ U_CAP` describe a degenerate metric; the
/// solvers stop and report non-convergence instead of chasing `u → ±∞`.
const U_CAP: f64 = 30.0;

#[derive(Clone, Debug, PartialEq)]
pub enum Boundary {
    Constant(f64),
    Field(Array2<f64>),
}

#[derive(Clone, Debug)]
pub struct PdeProblem {
    pub domain: Domain,
    pub metric: BackgroundMetric,
    pub cubic: CubicDifferential,
    pub case: SignCase,
    boundary: Option<Boundary>,
    lambda_weight: f64,
    sigma: Array2<f64>,
    kappa: Array2<f64>,
    qnorm: Array2<f64>,
}

impl PdeProblem {
    /// Planar problems start with the boundary value `u = 0`.
    pub fn new(domain: Domain, metric: BackgroundMetric, cubic: CubicDifferential, case: SignCase) -> Result<Self> {
        metric.validate()?;
        cubic.check_domain(&domain)?;
        let sigma = metric.sigma_field(&domain)?;
        let mut kappa = Array2::zeros(domain.shape());
        for ((j, k), v) in kappa.indexed_iter_mut() {
            *v = gauss_curvature(&metric, domain.z(j, k))?;
        }
        let qnorm = Self::qnorm_field(&domain, &metric, &cubic)?;
        let boundary = (!domain.is_torus()).then_some(Boundary::Constant(0.0));
        Ok(PdeProblem {
            domain,
            metric,
            cubic,
            case,
            boundary,
            lambda_weight: 1.0,
            sigma,
            kappa,
            qnorm,
        })
    }

    fn qnorm_field(domain: &Domain, metric: &BackgroundMetric, q: &CubicDifferential) -> Result<Array2<f64>> {
        let mut out = Array2::zeros(domain.shape());
        for ((j, k), v) in out.indexed_iter_mut() {
            *v = cubic_norm_sq(q, metric, domain.z(j, k))?;
        }
        Ok(out)
    }

    pub fn with_boundary(mut self, b: Boundary) -> Result<Self> {
        if self.domain.is_torus() {
            return Err(Error::InvalidInput("torus problems carry no boundary data".into()));
        }
        if let Boundary::Field(f) = &b {
            if f.dim() != self.domain.shape() {
                return Err(Error::InvalidInput("boundary field has the wrong shape".into()));
            }
        }
        self.boundary = Some(b);
        Ok(self)
    }

    pub fn with_cubic(&self, cubic: CubicDifferential) -> Result<Self> {
        cubic.check_domain(&self.domain)?;
        let qnorm = Self::qnorm_field(&self.domain, &self.metric, &cubic)?;
        Ok(PdeProblem {
            cubic,
            qnorm,
            ..self.clone()
        })
    }

    /// The substituted problem solved by `v = u − log δ`: the `λ` term is
    /// weighted by `δ`, the cubic differential becomes `Q/δ`, and boundary
    /// values shift by `−log δ`.
    pub fn delta_scaled(&self, delta: f64) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::InvalidInput("δ must be positive".into()));
        }
        let mut p = self.with_cubic(self.cubic.scaled(1.0 / delta))?;
        p.lambda_weight *= delta;
        let shift = delta.ln();
        p.boundary = match p.boundary.take() {
            Some(Boundary::Constant(c)) => Some(Boundary::Constant(c - shift)),
            Some(Boundary::Field(f)) => Some(Boundary::Field(f.mapv(|v| v - shift))),
            None => None,
        };
        Ok(p)
    }

    pub fn lambda_weight(&self) -> f64 {
        self.lambda_weight
    }

    pub fn boundary(&self) -> Option<&Boundary> {
        self.boundary.as_ref()
    }

    pub fn sigma(&self) -> &Array2<f64> {
        &self.sigma
    }

    pub fn kappa(&self) -> &Array2<f64> {
        &self.kappa
    }

    /// `‖Q‖²_μ` at the nodes.
    pub fn cubic_norm_sq(&self) -> &Array2<f64> {
        &self.qnorm
    }

    pub fn boundary_value(&self, j: usize, k: usize) -> f64 {
        match &self.boundary {
            Some(Boundary::Constant(c)) => *c,
            Some(Boundary::Field(f)) => f[[j, k]],
            None => 0.0,
        }
    }

    fn is_unknown(&self, j: usize, k: usize) -> bool {
        !self.domain.is_boundary(j, k)
    }

    /// Copy of `u` with the Dirichlet values imposed.
    pub fn impose_boundary(&self, u: &Array2<f64>) -> Array2<f64> {
        let mut v = u.clone();
        for ((j, k), x) in v.indexed_iter_mut() {
            if !self.is_unknown(j, k) {
                *x = self.boundary_value(j, k);
            }
        }
        v
    }

    fn nonlinearity(&self, u: f64, q: f64) -> f64 {
        16.0 * self.case.eps() * q * (-2.0 * u).exp() + 2.0 * self.case.lam() * self.lambda_weight * u.exp()
    }

    fn nonlinearity_du(&self, u: f64, q: f64) -> f64 {
        -32.0 * self.case.eps() * q * (-2.0 * u).exp() + 2.0 * self.case.lam() * self.lambda_weight * u.exp()
    }

    fn check_field(&self, u: &Array2<f64>) -> Result<()> {
        if u.dim() != self.domain.shape() {
            return Err(Error::InvalidInput(format!(
                "field shape {:?} does not match grid {:?}",
                u.dim(),
                self.domain.shape()
            )));
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("field has non-finite values".into()));
        }
        Ok(())
    }
}

/// Nodewise `Δ_μ u + 16ε‖Q‖²e^{−2u} + 2λe^u − 2κ`; `u − g` on boundary nodes.
pub fn residual_global(u: &Array2<f64>, p: &PdeProblem) -> Array2<f64> {
    let lat = p.domain.lattice();
    let mut out = Array2::zeros(p.domain.shape());
    Zip::indexed(&mut out).par_for_each(|(j, k), r| {
        *r = if p.is_unknown(j, k) {
            lat.laplacian_at(u, j, k) / p.sigma[[j, k]] + p.nonlinearity(u[[j, k]], p.qnorm[[j, k]])
                - 2.0 * p.kappa[[j, k]]
        } else {
            u[[j, k]] - p.boundary_value(j, k)
        };
    });
    out
}

/// Nodewise `2ψ_zz̄ + ε|Q|²e^{−4ψ} + λe^{2ψ}` in the flat coordinate `z`;
/// 0 on boundary nodes.
pub fn residual_local(psi: &Array2<f64>, domain: &Domain, q: &CubicDifferential, case: SignCase) -> Array2<f64> {
    let lat = domain.lattice();
    let mut out = Array2::zeros(domain.shape());
    Zip::indexed(&mut out).par_for_each(|(j, k), r| {
        if lat.is_interior(j, k) {
            let s = psi[[j, k]];
            *r = 0.5 * lat.laplacian_at(psi, j, k)
                + case.eps() * q.eval(lat.z(j, k)).norm_sqr() * (-4.0 * s).exp()
                + case.lam() * (2.0 * s).exp();
        }
    });
    out
}

/// The general Toda form `∂z∂w log(a²) + λa² + QRa⁻⁴` with `w = z̄`
/// (`∂z∂w` acting through the real 5-point stencil); 0 on boundary nodes.
pub fn toda_residual_complex(
    a: &Array2<Complex64>,
    qf: &Array2<Complex64>,
    rf: &Array2<Complex64>,
    lambda: f64,
    domain: &Domain,
) -> Result<Array2<Complex64>> {
    if let Some(((j, k), _)) = a.indexed_iter().find(|(_, v)| v.norm() == 0.0) {
        return Err(Error::SingularInput(j, k));
    }
    let lat = domain.lattice();
    let log_a2 = a.mapv(|v| (v * v).ln());
    let mut out = Array2::zeros(domain.shape());
    for ((j, k), r) in out.indexed_iter_mut() {
        if lat.is_interior(j, k) {
            let av = a[[j, k]];
            let a2 = av * av;
            *r = lat.d_zzbar(&log_a2, j, k) + lambda * a2 + qf[[j, k]] * rf[[j, k]] / (a2 * a2);
        }
    }
    Ok(out)
}

/// `u = ⅓ log(8|c|²)`, the constant solution on a flat unit-area torus.
pub fn constant_solution(c: Complex64, case: SignCase) -> Result<f64> {
    if case.epsilon * case.lambda != -1 || c.norm() == 0.0 {
        return Err(Error::NoConstantSolution);
    }
    Ok((8.0 * c.norm_sqr()).ln() / 3.0)
}

/// Positive root of `x³ − x² − q = 0` (`q ≥ 0`), bracketed in `[1, 1 + q]`.
pub fn cubic_root_bound(q: f64) -> f64 {
    let f = |x: f64| x * x * x - x * x - q;
    let (mut lo, mut hi) = (1.0, 1.0 + q);
    let mut x = hi;
    for _ in 0..200 {
        let fx = f(x);
        if fx == 0.0 {
            return x;
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = 3.0 * x * x - 2.0 * x;
        let mut next = x - fx / d;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 4.0 * f64::EPSILON * x {
            return next;
        }
        x = next;
    }
    x
}

/// `log m` with `m` the positive root of `x³ − x² − max 8‖Q‖²_μ`.
pub fn supersolution_bound(p: &PdeProblem) -> Result<f64> {
    if p.case != SignCase::HYPERBOLIC_AFFINE {
        return Err(p.case.reject("the supersolution bound needs ε = 1, λ = −1"));
    }
    if p.metric != BackgroundMetric::PoincareDisk {
        return Err(Error::InvalidInput("the supersolution bound needs a κ = −1 background".into()));
    }
    let q = 8.0 * p.qnorm.iter().cloned().fold(0.0, f64::max);
    Ok(cubic_root_bound(q).ln())
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    pub converged: bool,
    pub iterations: usize,
    pub residual_inf: f64,
    pub tolerance: f64,
    /// `‖F‖∞` at the start of every iteration, then the final value.
    pub history: Vec<f64>,
    #[serde(skip)]
    pub solution: MetricSolution,
}

impl SolveReport {
    pub fn require_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NonConvergence {
                iterations: self.iterations,
                residual: self.residual_inf,
            })
        }
    }

    pub fn u(&self) -> &Array2<f64> {
        &self.solution.u
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub linear_tolerance: f64,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tolerance: 1e-10,
            max_iterations: 100,
            linear_tolerance: 1e-12,
            max_halvings: 30,
        }
    }
}

fn inf_norm(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0, |m, v| if v.is_nan() { f64::INFINITY } else { m.max(v.abs()) })
}

/// Applies `Δ_h + diag(d)` on the unknowns; constrained entries map to 0.
fn apply_shifted_laplacian(p: &PdeProblem, d: &Array2<f64>, x: &Array2<f64>, sign: f64) -> Array2<f64> {
    let lat = p.domain.lattice();
    let mut out = Array2::zeros(x.raw_dim());
    Zip::indexed(&mut out).par_for_each(|(j, k), o| {
        if p.is_unknown(j, k) {
            *o = sign * (lat.laplacian_at(x, j, k) + d[[j, k]] * x[[j, k]]);
        }
    });
    out
}

/// Solves `(Δ_h + diag(d)) x = b` on the unknowns. Uses CG on the negated
/// operator when `d < 0` everywhere (then it is positive definite) and
/// MINRES otherwise.
fn solve_linearized(p: &PdeProblem, d: &Array2<f64>, b: &Array2<f64>, tol: f64) -> (Array2<f64>, KrylovStats) {
    let c = p.domain.lattice().laplace_coeffs();
    let center = -2.0 * (c.cjj + c.ckk);
    let n = p.domain.shape().0 * p.domain.shape().1;
    let max_iter = 20 * n.max(100);
    let definite = d
        .indexed_iter()
        .all(|((j, k), v)| !p.is_unknown(j, k) || *v < 0.0);
    let mask = |j: usize, k: usize, v: f64| if p.is_unknown(j, k) { v } else { 0.0 };
    if definite {
        let inv = Array2::from_shape_fn(d.raw_dim(), |(j, k)| mask(j, k, 1.0 / -(center + d[[j, k]])));
        let rhs = b.mapv(|v| -v);
        pcg(|x| apply_shifted_laplacian(p, d, x, -1.0), &rhs, &inv, tol, max_iter)
    } else {
        let inv = Array2::from_shape_fn(d.raw_dim(), |(j, k)| {
            mask(j, k, 1.0 / (center + d[[j, k]]).abs().max(1e-300))
        });
        minres(|x| apply_shifted_laplacian(p, d, x, 1.0), b, &inv, tol, max_iter)
    }
}

/// Damped Newton with halving line search on `‖F‖∞`.
///
/// Non-convergence is reported through `converged = false` with the best
/// iterate; use [`SolveReport::require_converged`] to turn it into an error.
pub fn solve_newton(p: &PdeProblem, u0: &Array2<f64>, opts: &NewtonOptions) -> Result<SolveReport> {
    p.check_field(u0)?;
    let mut u = p.impose_boundary(u0);
    let mut f = residual_global(&u, p);
    let mut r = inf_norm(&f);
    let mut history = vec![r];
    let mut iterations = 0;
    let mut converged = r <= opts.tolerance;
    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        let d = Array2::from_shape_fn(u.raw_dim(), |(j, k)| {
            p.sigma[[j, k]] * p.nonlinearity_du(u[[j, k]], p.qnorm[[j, k]])
        });
        let b = Array2::from_shape_fn(u.raw_dim(), |(j, k)| {
            if p.is_unknown(j, k) {
                -p.sigma[[j, k]] * f[[j, k]]
            } else {
                0.0
            }
        });
        let (delta, _) = solve_linearized(p, &d, &b, opts.linear_tolerance);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let mut trial = u.clone();
            trial.zip_mut_with(&delta, |a, b| *a += t * b);
            let ft = residual_global(&trial, p);
            let rt = inf_norm(&ft);
            if rt.is_finite() && rt < r {
                accepted = Some((trial, ft, rt));
                break;
            }
            t *= 0.5;
        }
        let Some((un, fnew, rn)) = accepted else {
            break;
        };
        u = un;
        f = fnew;
        r = rn;
        history.push(r);
        if u.iter().any(|v| v.abs() > U_CAP) {
            break;
        }
        converged = r <= opts.tolerance;
    }
    Ok(SolveReport {
        converged,
        iterations,
        residual_inf: r,
        tolerance: opts.tolerance,
        history,
        solution: MetricSolution::from_u(&p.domain, &p.metric, u)?,
    })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MonotoneOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub linear_tolerance: f64,
}

impl Default for MonotoneOptions {
    fn default() -> Self {
        MonotoneOptions {
            tolerance: 1e-8,
            max_iterations: 5000,
            linear_tolerance: 1e-13,
        }
    }
}

/// One step of the monotone iteration, handed to observers.
pub struct MonotoneStep<'a> {
    pub iteration: usize,
    pub previous: &'a Array2<f64>,
    pub current: &'a Array2<f64>,
    pub lower: f64,
    pub upper: f64,
}

/// Constant sub- and supersolutions `(lower, upper)` for the monotone scheme.
pub fn monotone_bracket(p: &PdeProblem) -> Result<(f64, f64)> {
    if p.case != SignCase::HYPERBOLIC_AFFINE {
        return Err(p.case.reject("monotone iteration needs the maximum principle (ε = 1, λ = −1)"));
    }
    if p.lambda_weight != 1.0 {
        return Err(Error::InvalidInput("monotone iteration expects the unscaled equation".into()));
    }
    match (&p.metric, &p.cubic) {
        (BackgroundMetric::PoincareDisk, _) => Ok((0.0, supersolution_bound(p)?)),
        (BackgroundMetric::Flat { sigma }, CubicDifferential::Constant { c }) if p.domain.is_torus() => {
            // ‖Q‖² = |c|²/σ³ plays the role of |c|² on the unit-σ torus
            let uc = constant_solution(*c / sigma.powf(1.5), p.case)?;
            Ok((uc - 1.0, uc + 1.0))
        }
        _ => Err(Error::InvalidInput(
            "monotone iteration needs a flat torus or a Poincaré background".into(),
        )),
    }
}

pub fn solve_monotone(p: &PdeProblem, opts: &MonotoneOptions) -> Result<SolveReport> {
    solve_monotone_observed(p, opts, |_| {})
}

/// Sub/supersolution iteration
/// `(−Δ_h + σM) u_{k+1} = σ(G(u_k) + M u_k)` with `G = N(u) − 2κ`, started
/// from the subsolution. `M` bounds `|G'|` over the bracket, which makes
/// the iteration order preserving.
pub fn solve_monotone_observed<O>(p: &PdeProblem, opts: &MonotoneOptions, mut observer: O) -> Result<SolveReport>
where
    O: FnMut(&MonotoneStep<'_>),
{
    let (lower, upper) = monotone_bracket(p)?;
    for ((j, k), _) in p.sigma.indexed_iter() {
        if !p.is_unknown(j, k) {
            let g = p.boundary_value(j, k);
            if g < lower || g > upper {
                return Err(Error::InvalidInput(format!(
                    "boundary value {g} lies outside the bracket [{lower}, {upper}]"
                )));
            }
        }
    }
    let mut u = p.impose_boundary(&Array2::from_elem(p.domain.shape(), lower));
    let mut f = residual_global(&u, p);
    let mut r = inf_norm(&f);
    let mut history = vec![r];
    let mut iterations = 0;
    let qmax = p.qnorm.iter().cloned().fold(0.0, f64::max);
    let shift = 32.0 * qmax * (-2.0 * lower).exp() + 2.0 * upper.exp() + 1.0;
    let c = p.domain.lattice().laplace_coeffs();
    let inv = Array2::from_shape_fn(u.raw_dim(), |(j, k)| {
        if p.is_unknown(j, k) {
            1.0 / (2.0 * (c.cjj + c.ckk) + p.sigma[[j, k]] * shift)
        } else {
            0.0
        }
    });
    let d = p.sigma.mapv(|s| -s * shift);
    while r > opts.tolerance && iterations < opts.max_iterations && upper > lower {
        iterations += 1;
        let b = Array2::from_shape_fn(u.raw_dim(), |(j, k)| {
            if p.is_unknown(j, k) {
                p.sigma[[j, k]] * f[[j, k]]
            } else {
                0.0
            }
        });
        let (delta, _) = pcg(
            |x| apply_shifted_laplacian(p, &d, x, -1.0),
            &b,
            &inv,
            opts.linear_tolerance,
            20 * u.len().max(100),
        );
        let previous = u.clone();
        u.zip_mut_with(&delta, |a, b| *a += b);
        observer(&MonotoneStep {
            iteration: iterations,
            previous: &previous,
            current: &u,
            lower,
            upper,
        });
        f = residual_global(&u, p);
        let rn = inf_norm(&f);
        history.push(rn);
        let step = inf_norm(&delta);
        r = rn;
        if step == 0.0 {
            break;
        }
    }
    Ok(SolveReport {
        converged: r <= opts.tolerance,
        iterations,
        residual_inf: r,
        tolerance: opts.tolerance,
        history,
        solution: MetricSolution::from_u(&p.domain, &p.metric, u)?,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ContinuationStep {
    pub t: f64,
    pub report: SolveReport,
}

#[derive(Clone, Debug, Serialize)]
pub struct ContinuationReport {
    pub steps: Vec<ContinuationStep>,
    /// Index into the t-grid of the first failed solve.
    pub failed_at: Option<usize>,
}

impl ContinuationReport {
    pub fn last_converged(&self) -> Option<&ContinuationStep> {
        self.steps.iter().rev().find(|s| s.report.converged)
    }
}

/// Solves along `Q = t·Q₀`, seeding each Newton solve with the previous
/// solution, and stops at the first failure.
pub fn continuation_family(
    p0: &PdeProblem,
    q0: &CubicDifferential,
    t_grid: &[f64],
    opts: &NewtonOptions,
) -> Result<ContinuationReport> {
    if t_grid.is_empty() || t_grid[0] < 0.0 || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("t-grid must be non-negative and strictly increasing".into()));
    }
    let mut seed = p0.impose_boundary(&Array2::zeros(p0.domain.shape()));
    let mut steps = Vec::with_capacity(t_grid.len());
    let mut failed_at = None;
    for (i, &t) in t_grid.iter().enumerate() {
        let p = p0.with_cubic(q0.scaled(t))?;
        let report = solve_newton(&p, &seed, opts)?;
        let ok = report.converged;
        if ok {
            seed = report.solution.u.clone();
        }
        steps.push(ContinuationStep { t, report });
        if !ok {
            failed_at = Some(i);
            break;
        }
    }
    Ok(ContinuationReport { steps, failed_at })
}

/// `(3√6 sup ‖Q₀‖_μ)⁻¹`, below which the CH² family is guaranteed to
/// continue from `t = 0`.
pub fn ch2_existence_threshold(domain: &Domain, metric: &BackgroundMetric, q0: &CubicDifferential) -> Result<f64> {
    let mut sup: f64 = 0.0;
    for j in 0..domain.shape().0 {
        for k in 0..domain.shape().1 {
            sup = sup.max(cubic_norm_sq(q0, metric, domain.z(j, k))?.sqrt());
        }
    }
    Ok(1.0 / (3.0 * 6f64.sqrt() * sup))
}

/// `‖Q‖_{e^u μ} = ‖Q‖_μ e^{−3u/2}`, the norm in the solved metric.
pub fn induced_cubic_norm(p: &PdeProblem, u: &Array2<f64>) -> Array2<f64> {
    let mut out = p.qnorm.clone();
    out.zip_mut_with(u, |q, &v| *q = (*q * (-3.0 * v).exp()).sqrt());
    out
}

/// `v = u − log δ`.
pub fn scaling_shift(u: &Array2<f64>, delta: f64) -> Result<Array2<f64>> {
    if !(delta > 0.0) {
        return Err(Error::InvalidInput("δ must be positive".into()));
    }
    let s = delta.ln();
    Ok(u.mapv(|v| v - s))
}
