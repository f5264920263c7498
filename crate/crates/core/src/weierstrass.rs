//! Parabolic affine spheres from pairs of holomorphic functions, graph
//! functions sampled on grids, Monge–Ampère residuals, and the discrete
//! Legendre transform.
//!
//! With `x = ½(G + F̄)` read as a point of R² the height is
//! `⅛(|G|² − |F|²) + ¼Re(FG) − ½Re∫F dG`; [`HeightFormula`] keeps the
//! coefficients explicit so that rejected readings can be exercised.

use crate::error::{Error, Result};
use crate::frames::Mat3;
use crate::geometry::Domain;
use crate::immersion::{CVec3, ImmersionMesh, MeshTarget};
use nalgebra::{DMatrix, Matrix2, Vector2};
use ndarray::{ArrayD, Dimension, IxDyn};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// A polynomial `Σ cₖ zᵏ`, coefficients in ascending order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Poly {
    pub coeffs: Vec<Complex64>,
}

impl Poly {
    pub fn new(coeffs: Vec<Complex64>) -> Self {
        Poly { coeffs }
    }

    /// The identity `z`.
    pub fn z() -> Self {
        Poly::new(vec![0.0.into(), 1.0.into()])
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c)
    }

    pub fn derivative(&self) -> Poly {
        Poly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| c * k as f64)
                .collect(),
        )
    }

    pub fn degree(&self) -> usize {
        self.coeffs.iter().rposition(|c| *c != Complex64::new(0.0, 0.0)).unwrap_or(0)
    }
}

/// Nodes and weights of the `m`-point Gauss–Legendre rule on [−1, 1].
fn gauss_legendre(m: usize) -> Vec<(f64, f64)> {
    (0..m)
        .map(|i| {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                // three-term recurrence for P_m and its derivative
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=m {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                let pm = if m == 1 { x } else { p1 };
                let pm1 = if m == 1 { 1.0 } else { p0 };
                dp = m as f64 * (x * pm - pm1) / (x * x - 1.0);
                let dx = pm / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// Holomorphic data `(F, G)` with `|F′| < |G′|` required on the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoloPair {
    pub f: Poly,
    pub g: Poly,
}

/// `height = quadratic·(|G|² − |F|²) + ¼Re(FG) − ½·part(∫F dG)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeightFormula {
    pub quadratic: f64,
    pub imaginary_integral: bool,
}

impl HeightFormula {
    /// The reading that passes the Monge–Ampère check.
    pub const FROZEN: HeightFormula = HeightFormula {
        quadratic: 0.125,
        imaginary_integral: false,
    };
}

impl HoloPair {
    pub fn new(f: Poly, g: Poly) -> Self {
        HoloPair { f, g }
    }

    /// `|F′(z)| < |G′(z)|` at every node of `domain`.
    pub fn check_bound(&self, domain: &Domain) -> Result<()> {
        let (df, dg) = (self.f.derivative(), self.g.derivative());
        let (nx, ny) = domain.shape();
        for j in 0..nx {
            for k in 0..ny {
                let z = domain.z(j, k);
                if !(df.eval(z).norm() < dg.eval(z).norm()) {
                    return Err(Error::DerivativeBound(z));
                }
            }
        }
        Ok(())
    }

    /// `∫F dG` along a polyline, each segment by a Gauss–Legendre rule that
    /// is exact for the polynomial integrand.
    pub fn integral(&self, path: &[Complex64]) -> Complex64 {
        let dg = self.g.derivative();
        let m = (self.f.degree() + dg.degree()) / 2 + 1;
        let rule = gauss_legendre(m);
        path.windows(2)
            .map(|w| {
                let (mid, half) = ((w[0] + w[1]) * 0.5, (w[1] - w[0]) * 0.5);
                rule.iter()
                    .map(|&(t, wt)| {
                        let z = mid + half * t;
                        self.f.eval(z) * dg.eval(z) * wt
                    })
                    .sum::<Complex64>()
                    * half
            })
            .sum()
    }

    /// `x = ½(G + F̄)` as a point of R².
    pub fn chart(&self, z: Complex64) -> Vector2<f64> {
        let x = (self.g.eval(z) + self.f.eval(z).conj()) * 0.5;
        Vector2::new(x.re, x.im)
    }

    /// The surface point, given `∫F dG` from the basepoint to `z`.
    pub fn point(&self, z: Complex64, integral: Complex64, formula: HeightFormula) -> [f64; 3] {
        let (f, g) = (self.f.eval(z), self.g.eval(z));
        let x = self.chart(z);
        let part = if formula.imaginary_integral { integral.im } else { integral.re };
        let h = formula.quadratic * (g.norm_sqr() - f.norm_sqr()) + 0.25 * (f * g).re - 0.5 * part;
        [x[0], x[1], h]
    }

    /// `∂_z` of the frozen surface: `x₁_z = ¼(G′ + F′)`,
    /// `x₂_z = (G′ − F′)/(4i)`, `h_z = ⅛(G′Ḡ − F′F̄ + F′G − FG′)`.
    pub fn tangent(&self, z: Complex64) -> CVec3 {
        let (f, g) = (self.f.eval(z), self.g.eval(z));
        let (df, dg) = (self.f.derivative().eval(z), self.g.derivative().eval(z));
        let i4 = Complex64::new(0.0, 4.0);
        CVec3::new(
            (dg + df) * 0.25,
            (dg - df) / i4,
            (dg * g.conj() - df * f.conj() + df * g - f * dg) * 0.125,
        )
    }

    /// Solves `½(G(z) + F̄(z)) = x` by Newton's method from `guess`.
    pub fn invert_chart(&self, x: Vector2<f64>, guess: Complex64) -> Option<Complex64> {
        let (df, dg) = (self.f.derivative(), self.g.derivative());
        let mut z = guess;
        for _ in 0..60 {
            let r = self.chart(z) - x;
            if r.norm() < 1e-14 * (1.0 + x.norm()) {
                return Some(z);
            }
            // w_z = ½G′, w_z̄ = ½F̄′; real Jacobian of (Re w, Im w) in (Re z, Im z)
            let (a, b) = (dg.eval(z) * 0.5, df.eval(z).conj() * 0.5);
            let jac = Matrix2::new(a.re + b.re, -a.im + b.im, a.im + b.im, a.re - b.re);
            let step = jac.lu().solve(&r)?;
            z -= Complex64::new(step[0], step[1]);
            if !z.is_finite() {
                return None;
            }
        }
        ((self.chart(z) - x).norm() < 1e-10 * (1.0 + x.norm())).then_some(z)
    }
}

/// The parabolic affine sphere of `pair` over a planar domain, with `∫F dG`
/// taken along straight segments from the central node.
pub fn parabolic_from_holomorphic(pair: &HoloPair, domain: &Domain) -> Result<ImmersionMesh> {
    parabolic_with_formula(pair, domain, HeightFormula::FROZEN)
}

/// As [`parabolic_from_holomorphic`], for any reading of the height. Frames
/// are analytic for the frozen formula and finite differences otherwise.
pub fn parabolic_with_formula(pair: &HoloPair, domain: &Domain, formula: HeightFormula) -> Result<ImmersionMesh> {
    if domain.is_torus() {
        return Err(Error::InvalidInput("polynomial data are not doubly periodic".into()));
    }
    pair.check_bound(domain)?;
    let lat = domain.lattice().unwrapped();
    let base = domain.z(lat.center().0, lat.center().1);
    let c = |v: f64| Complex64::new(v, 0.0);
    let positions = ndarray::Array2::from_shape_fn(lat.shape(), |(j, k)| {
        let z = domain.z(j, k);
        let p = pair.point(z, pair.integral(&[base, z]), formula);
        CVec3::new(c(p[0]), c(p[1]), c(p[2]))
    });
    if formula != HeightFormula::FROZEN {
        return ImmersionMesh::from_positions(&lat, positions, MeshTarget::AffineSphere { lambda: 0 });
    }
    let frames = ndarray::Array2::from_shape_fn(lat.shape(), |(j, k)| {
        let t = pair.tangent(domain.z(j, k));
        Mat3::from_rows(&[t.transpose(), t.conjugate().transpose(), CVec3::new(c(0.0), c(0.0), c(1.0)).transpose()])
    });
    Ok(ImmersionMesh {
        target: MeshTarget::AffineSphere { lambda: 0 },
        lattice: lat,
        positions,
        frames,
    })
}

/// A scalar function sampled on a regular grid in R^d; NaN marks nodes
/// outside its domain.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphFunction {
    pub origin: Vec<f64>,
    pub spacing: Vec<f64>,
    pub values: ArrayD<f64>,
}

impl GraphFunction {
    pub fn new(origin: Vec<f64>, spacing: Vec<f64>, values: ArrayD<f64>) -> Result<Self> {
        let d = values.ndim();
        if d == 0 || origin.len() != d || spacing.len() != d {
            return Err(Error::InvalidInput("grid origin and spacing must match the array rank".into()));
        }
        if spacing.iter().any(|h| !(*h > 0.0)) || values.shape().iter().any(|&n| n < 3) {
            return Err(Error::InvalidInput("grid needs positive spacing and at least 3 nodes per axis".into()));
        }
        Ok(GraphFunction { origin, spacing, values })
    }

    pub fn from_fn<F: Fn(&[f64]) -> f64 + Sync>(origin: Vec<f64>, spacing: Vec<f64>, shape: &[usize], f: F) -> Result<Self> {
        let values = ArrayD::from_shape_fn(IxDyn(shape), |idx| {
            let x: Vec<f64> = (0..shape.len()).map(|a| origin[a] + idx[a] as f64 * spacing[a]).collect();
            f(&x)
        });
        Self::new(origin, spacing, values)
    }

    pub fn ndim(&self) -> usize {
        self.values.ndim()
    }

    pub fn h(&self) -> f64 {
        self.spacing.iter().cloned().fold(0.0, f64::max)
    }

    pub fn node(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().enumerate().map(|(a, &i)| self.origin[a] + i as f64 * self.spacing[a]).collect()
    }

    fn value(&self, idx: &[usize], shift: &[(usize, isize)]) -> Option<f64> {
        let mut at = idx.to_vec();
        for &(a, s) in shift {
            let i = at[a] as isize + s;
            if i < 0 || i as usize >= self.values.shape()[a] {
                return None;
            }
            at[a] = i as usize;
        }
        let v = self.values[IxDyn(&at)];
        v.is_finite().then_some(v)
    }

    /// Centered-difference Hessian, `None` unless the whole stencil is finite.
    pub fn hessian(&self, idx: &[usize]) -> Option<DMatrix<f64>> {
        let d = self.ndim();
        let c = self.value(idx, &[])?;
        let mut h = DMatrix::zeros(d, d);
        for a in 0..d {
            let ha = self.spacing[a];
            h[(a, a)] = (self.value(idx, &[(a, 1)])? - 2.0 * c + self.value(idx, &[(a, -1)])?) / (ha * ha);
            for b in 0..a {
                let v = |sa, sb| self.value(idx, &[(a, sa), (b, sb)]);
                let m = (v(1, 1)? - v(1, -1)? - v(-1, 1)? + v(-1, -1)?) / (4.0 * ha * self.spacing[b]);
                h[(a, b)] = m;
                h[(b, a)] = m;
            }
        }
        Some(h)
    }

    /// Positive definite Hessian wherever it is defined.
    pub fn check_convex(&self) -> Result<()> {
        for (idx, _) in self.values.indexed_iter() {
            let idx = idx.slice().to_vec();
            if let Some(h) = self.hessian(&idx) {
                if h.cholesky().is_none() {
                    return Err(Error::NonConvex(idx));
                }
            }
        }
        Ok(())
    }

    pub fn is_convex(&self) -> bool {
        self.check_convex().is_ok()
    }

    fn cubic_stencil(&self, x: &[f64]) -> Option<Vec<(usize, [f64; 4], [f64; 4], [f64; 4])>> {
        (0..self.ndim())
            .map(|a| {
                let n = self.values.shape()[a];
                if n < 4 {
                    return None;
                }
                let t = (x[a] - self.origin[a]) / self.spacing[a];
                if !(t >= -1e-9 && t <= (n - 1) as f64 + 1e-9) {
                    return None;
                }
                let cell = (t.floor().max(0.0) as usize).min(n - 2);
                let start = cell.saturating_sub(1).min(n - 4);
                Some((start, lagrange4(t - start as f64, 0), lagrange4(t - start as f64, 1), lagrange4(t - start as f64, 2)))
            })
            .collect()
    }

    /// Value, gradient and Hessian of the piecewise cubic (4×4 Lagrange)
    /// interpolant of a 2-D grid function.
    pub fn interpolate2(&self, x: [f64; 2]) -> Option<(f64, Vector2<f64>, Matrix2<f64>)> {
        if self.ndim() != 2 {
            return None;
        }
        let st = self.cubic_stencil(&x)?;
        let (s0, l0, d0, e0) = st[0];
        let (s1, l1, d1, e1) = st[1];
        let (h0, h1) = (self.spacing[0], self.spacing[1]);
        let (mut v, mut g, mut hs) = (0.0, Vector2::zeros(), Matrix2::zeros());
        for a in 0..4 {
            for b in 0..4 {
                let f = self.values[[s0 + a, s1 + b]];
                if !f.is_finite() {
                    return None;
                }
                v += f * l0[a] * l1[b];
                g[0] += f * d0[a] * l1[b] / h0;
                g[1] += f * l0[a] * d1[b] / h1;
                hs[(0, 0)] += f * e0[a] * l1[b] / (h0 * h0);
                hs[(1, 1)] += f * l0[a] * e1[b] / (h1 * h1);
                hs[(0, 1)] += f * d0[a] * d1[b] / (h0 * h1);
            }
        }
        hs[(1, 0)] = hs[(0, 1)];
        Some((v, g, hs))
    }
}

/// Lagrange basis on the nodes 0, 1, 2, 3 at `t`, or its first or second
/// derivative.
fn lagrange4(t: f64, order: usize) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (i, o) in out.iter_mut().enumerate() {
        let others: Vec<f64> = (0..4).filter(|&m| m != i).map(|m| m as f64).collect();
        let denom: f64 = others.iter().map(|&m| i as f64 - m).product();
        let (a, b, c) = (t - others[0], t - others[1], t - others[2]);
        *o = match order {
            0 => a * b * c,
            1 => a * b + a * c + b * c,
            _ => 2.0 * (a + b + c),
        } / denom;
    }
    out
}

/// `det Hess φ − 1` for `λ = 0`, `det Hess φ − (λ/φ)^{n+2}` otherwise, at
/// nodes with a complete finite stencil (NaN elsewhere).
pub fn monge_ampere_residual(phi: &GraphFunction, lambda: i8, n: usize) -> Result<ArrayD<f64>> {
    if !(n == 2 || n == 3) {
        return Err(Error::InvalidInput(format!("Monge–Ampère residual needs n ∈ {{2, 3}}, got {n}")));
    }
    if phi.ndim() != n {
        return Err(Error::InvalidInput(format!("graph has dimension {}, expected {n}", phi.ndim())));
    }
    if !(-1..=1).contains(&lambda) {
        return Err(Error::InvalidInput("λ must be −1, 0 or 1".into()));
    }
    let idxs: Vec<Vec<usize>> = phi.values.indexed_iter().map(|(i, _)| i.slice().to_vec()).collect();
    let vals: Vec<f64> = idxs
        .par_iter()
        .map(|idx| match phi.hessian(idx) {
            Some(h) => {
                let rhs = if lambda == 0 {
                    1.0
                } else {
                    (lambda as f64 / phi.values[IxDyn(idx)]).powi(n as i32 + 2)
                };
                h.determinant() - rhs
            }
            None => f64::NAN,
        })
        .collect();
    Ok(ArrayD::from_shape_vec(phi.values.raw_dim(), vals).expect("same shape"))
}

/// The graph of the frozen surface over the box `origin + [0, (shape−1)·h]`,
/// inverting the chart by Newton's method. Nodes whose preimage is not
/// found, or where `|F′| < |G′|` fails, are NaN.
pub fn graph_over_box(pair: &HoloPair, origin: [f64; 2], spacing: [f64; 2], shape: [usize; 2], start: Complex64) -> Result<GraphFunction> {
    let (df, dg) = (pair.f.derivative(), pair.g.derivative());
    let center = Vector2::new(
        origin[0] + 0.5 * (shape[0] - 1) as f64 * spacing[0],
        origin[1] + 0.5 * (shape[1] - 1) as f64 * spacing[1],
    );
    let z0 = pair
        .invert_chart(center, start)
        .ok_or_else(|| Error::InvalidInput("chart inversion failed at the box center".into()))?;
    let mut values = ArrayD::from_elem(IxDyn(&shape), f64::NAN);
    let (cj, ck) = ((shape[0] - 1) / 2, (shape[1] - 1) / 2);
    let node = |j: usize, k: usize| Vector2::new(origin[0] + j as f64 * spacing[0], origin[1] + k as f64 * spacing[1]);
    // continuation: out along the central row, then along each column
    let mut row = vec![None; shape[0]];
    row[cj] = pair.invert_chart(node(cj, ck), z0);
    for j in (0..cj).rev() {
        row[j] = row[j + 1].and_then(|g| pair.invert_chart(node(j, ck), g));
    }
    for j in cj + 1..shape[0] {
        row[j] = row[j - 1].and_then(|g| pair.invert_chart(node(j, ck), g));
    }
    let mut zs = vec![vec![None; shape[1]]; shape[0]];
    for j in 0..shape[0] {
        zs[j][ck] = row[j];
        for k in (0..ck).rev() {
            zs[j][k] = zs[j][k + 1].and_then(|g| pair.invert_chart(node(j, k), g));
        }
        for k in ck + 1..shape[1] {
            zs[j][k] = zs[j][k - 1].and_then(|g| pair.invert_chart(node(j, k), g));
        }
    }
    for j in 0..shape[0] {
        for k in 0..shape[1] {
            if let Some(z) = zs[j][k] {
                if df.eval(z).norm() < dg.eval(z).norm() {
                    values[[j, k]] = pair.point(z, pair.integral(&[z0, z]), HeightFormula::FROZEN)[2];
                }
            }
        }
    }
    GraphFunction::new(origin.to_vec(), spacing.to_vec(), values)
}

/// Discrete Legendre transform `s*(y) = x·y − s(x)` at `y = ∇s(x)`, on a
/// regular grid of the same shape spanning the bounding box of the gradient
/// image. `x` is found by Newton's method on the piecewise cubic
/// interpolant of `s`; dual nodes outside the image are NaN.
pub fn legendre_transform(s: &GraphFunction) -> Result<GraphFunction> {
    if s.ndim() != 2 {
        return Err(Error::Unsupported("the Legendre transform is implemented for planar grids".into()));
    }
    s.check_convex()?;
    let shape = [s.values.shape()[0], s.values.shape()[1]];
    let nodes: Vec<([f64; 2], Vector2<f64>)> = s
        .values
        .indexed_iter()
        .filter_map(|(i, _)| {
            let x = [s.origin[0] + i[0] as f64 * s.spacing[0], s.origin[1] + i[1] as f64 * s.spacing[1]];
            s.interpolate2(x).map(|(_, g, _)| (x, g))
        })
        .collect();
    if nodes.len() < 16 {
        return Err(Error::InvalidInput("too few finite nodes for a Legendre transform".into()));
    }
    let lo = [0, 1].map(|a| nodes.iter().map(|n| n.1[a]).fold(f64::INFINITY, f64::min));
    let hi = [0, 1].map(|a| nodes.iter().map(|n| n.1[a]).fold(f64::NEG_INFINITY, f64::max));
    let spacing = [0, 1].map(|a| (hi[a] - lo[a]) / (shape[a] - 1) as f64);
    if spacing.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::NonConvex(vec![0, 0]));
    }
    let vals: Vec<f64> = (0..shape[0] * shape[1])
        .into_par_iter()
        .map(|flat| {
            let (j, k) = (flat / shape[1], flat % shape[1]);
            let y = Vector2::new(lo[0] + j as f64 * spacing[0], lo[1] + k as f64 * spacing[1]);
            dual_value(s, &nodes, y)
        })
        .collect();
    let values = ArrayD::from_shape_vec(IxDyn(&shape), vals).expect("same shape");
    GraphFunction::new(lo.to_vec(), spacing.to_vec(), values)
}

fn dual_value(s: &GraphFunction, nodes: &[([f64; 2], Vector2<f64>)], y: Vector2<f64>) -> f64 {
    let start = nodes
        .iter()
        .min_by(|a, b| (a.1 - y).norm_squared().total_cmp(&(b.1 - y).norm_squared()))
        .expect("nonempty");
    let mut x = Vector2::new(start.0[0], start.0[1]);
    let scale = 1.0 + y.norm();
    let mut best = (f64::INFINITY, x);
    for _ in 0..40 {
        let Some((_, g, h)) = s.interpolate2([x[0], x[1]]) else {
            return f64::NAN;
        };
        let r = g - y;
        if r.norm() < best.0 {
            best = (r.norm(), x);
        }
        if r.norm() < 1e-14 * scale {
            break;
        }
        let Some(step) = h.lu().solve(&r) else {
            return f64::NAN;
        };
        x -= step;
    }
    // the interpolant's gradient jumps by O(h³) across cells, so an exact
    // root need not exist; s* is stationary in x, so a near root suffices
    if !(best.0 <= s.h().powi(2) * scale) {
        return f64::NAN;
    }
    let x = best.1;
    match s.interpolate2([x[0], x[1]]) {
        Some((v, _, _)) => x.dot(&y) - v,
        None => f64::NAN,
    }
}
