//! Developing maps into RP², quadric fits, holonomy reports, and the
//! semi-flat potential of a parabolic affine sphere together with its
//! Legendre mirror.

use crate::error::{Error, Result};
use crate::frames::{holonomy, ConnectionForm, Convention, Mat3, PathSpec};
use crate::immersion::{at_depth, CVec3, ImmersionMesh, MeshTarget};
use crate::lattice::Lattice;
use nalgebra::{DMatrix, Matrix3, SymmetricEigen};
use ndarray::{Array2, Zip};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

/// A point of RP²: a unit vector whose first nonzero coordinate is positive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Rp2Point {
    pub coords: [f64; 3],
}

impl Rp2Point {
    /// `None` for the zero vector (or anything non-finite).
    pub fn from_vector(v: [f64; 3]) -> Option<Self> {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return None;
        }
        let mut coords = v.map(|x| x / n);
        // below this, a coordinate is rounding noise and must not pick the sign
        let lead = coords.iter().find(|x| x.abs() > 1e-12).copied().unwrap_or(1.0);
        if lead < 0.0 {
            coords = coords.map(|x| -x);
        }
        Some(Rp2Point { coords })
    }

    /// Coordinates in the chart `x₃ = 1`.
    pub fn affine_chart(&self) -> Option<[f64; 2]> {
        let [a, b, c] = self.coords;
        (c.abs() > 1e-300).then(|| [a / c, b / c])
    }

    /// Chordal distance between the two representatives closest to each other.
    pub fn distance(&self, other: &Rp2Point) -> f64 {
        let d = |s: f64| {
            (0..3)
                .map(|i| (self.coords[i] - s * other.coords[i]).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        d(1.0).min(d(-1.0))
    }

    pub fn transformed(&self, g: &Matrix3<f64>) -> Option<Rp2Point> {
        let v = g * nalgebra::Vector3::from(self.coords);
        Rp2Point::from_vector([v[0], v[1], v[2]])
    }
}

fn real3(p: &CVec3) -> [f64; 3] {
    [p[0].re, p[1].re, p[2].re]
}

/// `dev = P(f)` at every vertex of a proper affine sphere mesh.
pub fn develop_rp2(mesh: &ImmersionMesh) -> Result<Array2<Rp2Point>> {
    match mesh.target {
        MeshTarget::AffineSphere { lambda } if lambda != 0 => {}
        _ => return Err(Error::InvalidInput("developing into RP² needs a proper affine sphere mesh".into())),
    }
    let mut out = Array2::from_elem(mesh.shape(), Rp2Point { coords: [0.0, 0.0, 1.0] });
    for ((j, k), p) in mesh.positions.indexed_iter() {
        out[[j, k]] = Rp2Point::from_vector(real3(p)).ok_or(Error::Degenerate {
            what: "vertex at the origin",
            vertex: mesh.vertex_index(j, k),
        })?;
    }
    Ok(out)
}

/// A centered quadric `fᵀSf = constant` fitted to points.
#[derive(Clone, Debug, Serialize)]
pub struct QuadricFit {
    pub s: [[f64; 3]; 3],
    pub constant: f64,
    /// `σ_min/√n` of the scaled design matrix.
    pub residual: f64,
    /// (positive, negative) eigenvalue counts of `S`, with `positive ≥ negative`.
    pub signature: (usize, usize),
}

/// Smallest right singular vector of `design` and `σ_min/√rows`; refuses
/// designs whose two smallest singular values are both negligible.
fn null_vector(design: DMatrix<f64>) -> Result<(Vec<f64>, f64)> {
    let rows = design.nrows();
    let svd = design.svd(false, true);
    let vt = svd.v_t.as_ref().expect("requested V");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let smin = svd.singular_values[order[0]];
    let next = svd.singular_values[order[1]];
    let smax = svd.singular_values[*order.last().unwrap()];
    if !(next > 1e-10 * smax) {
        return Err(Error::InvalidInput("degenerate design matrix: points do not determine a quadric".into()));
    }
    Ok((vt.row(order[0]).iter().copied().collect(), smin / (rows as f64).sqrt()))
}

fn finish(mut s: Matrix3<f64>, mut constant: f64, residual: f64) -> QuadricFit {
    let norm = (s.norm_squared() + constant * constant).sqrt();
    s /= norm;
    constant /= norm;
    let mut eig = SymmetricEigen::new(s).eigenvalues;
    let big = eig.amax();
    let count = |e: &nalgebra::Vector3<f64>| {
        (
            e.iter().filter(|&&x| x > 1e-8 * big).count(),
            e.iter().filter(|&&x| x < -1e-8 * big).count(),
        )
    };
    let (mut p, mut n) = count(&eig);
    if n > p || (n == p && constant < 0.0) {
        s = -s;
        constant = -constant;
        eig = -eig;
        (p, n) = count(&eig);
    }
    QuadricFit {
        s: [[s[(0, 0)], s[(0, 1)], s[(0, 2)]], [s[(1, 0)], s[(1, 1)], s[(1, 2)]], [s[(2, 0)], s[(2, 1)], s[(2, 2)]]],
        constant,
        residual,
        signature: (p, n),
    }
}

fn sym(v: &[f64]) -> Matrix3<f64> {
    Matrix3::new(v[0], v[3], v[4], v[3], v[1], v[5], v[4], v[5], v[2])
}

/// Least-squares quadric `fᵀSf = c` centered at the origin (the center of a
/// proper affine sphere). Points are scaled by their RMS norm before the
/// fit, so the residual is scale free.
pub fn quadric_fit(points: &[[f64; 3]]) -> Result<QuadricFit> {
    if points.len() < 9 {
        return Err(Error::InvalidInput(format!("quadric fit needs at least 9 points, got {}", points.len())));
    }
    let rms = (points.iter().map(|p| p.iter().map(|x| x * x).sum::<f64>()).sum::<f64>() / points.len() as f64).sqrt();
    if !(rms > 0.0) || !rms.is_finite() {
        return Err(Error::InvalidInput("degenerate design matrix: points at the origin".into()));
    }
    let design = DMatrix::from_fn(points.len(), 7, |r, col| {
        let g = points[r].map(|x| x / rms);
        match col {
            0 => g[0] * g[0],
            1 => g[1] * g[1],
            2 => g[2] * g[2],
            3 => 2.0 * g[0] * g[1],
            4 => 2.0 * g[0] * g[2],
            5 => 2.0 * g[1] * g[2],
            _ => -1.0,
        }
    });
    let (v, residual) = null_vector(design)?;
    Ok(finish(sym(&v) / (rms * rms), v[6], residual))
}

/// Homogeneous conic `pᵀSp = 0` through points of RP².
pub fn conic_fit(points: &[Rp2Point]) -> Result<QuadricFit> {
    if points.len() < 9 {
        return Err(Error::InvalidInput(format!("conic fit needs at least 9 points, got {}", points.len())));
    }
    let design = DMatrix::from_fn(points.len(), 6, |r, col| {
        let g = points[r].coords;
        match col {
            0 => g[0] * g[0],
            1 => g[1] * g[1],
            2 => g[2] * g[2],
            3 => 2.0 * g[0] * g[1],
            4 => 2.0 * g[0] * g[2],
            _ => 2.0 * g[1] * g[2],
        }
    });
    let (v, residual) = null_vector(design)?;
    Ok(finish(sym(&v), 0.0, residual))
}

fn to_array(m: &Mat3) -> [[Complex64; 3]; 3] {
    [0, 1, 2].map(|i| [0, 1, 2].map(|j| m[(i, j)]))
}

/// Eigenvalues in descending modulus, ties broken by increasing argument.
pub fn sorted_eigenvalues(m: &Mat3) -> Vec<Complex64> {
    let t = m.schur().unpack().1;
    let mut ev: Vec<Complex64> = (0..3).map(|i| t[(i, i)]).collect();
    let scale = ev.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    ev.sort_by(|a, b| {
        if (a.norm() - b.norm()).abs() > 1e-9 * scale {
            b.norm().total_cmp(&a.norm())
        } else {
            a.arg().total_cmp(&b.arg())
        }
    });
    ev
}

#[derive(Clone, Debug, Serialize)]
pub struct LoopHolonomy {
    pub matrix: [[Complex64; 3]; 3],
    pub eigenvalues: Vec<Complex64>,
    pub det_residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Commutator {
    pub loops: (usize, usize),
    pub norm: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct HolonomyReport {
    pub loops: Vec<LoopHolonomy>,
    pub commutators: Vec<Commutator>,
}

impl HolonomyReport {
    pub fn max_commutator(&self) -> f64 {
        self.commutators.iter().map(|c| c.norm).fold(0.0, f64::max)
    }

    pub fn max_det_residual(&self) -> f64 {
        self.loops.iter().map(|l| l.det_residual).fold(0.0, f64::max)
    }

    pub fn matrix(&self, i: usize) -> Mat3 {
        let m = &self.loops[i].matrix;
        Mat3::from_fn(|r, c| m[r][c])
    }
}

/// Holonomy of each loop, its spectrum and `|det − 1|`, and the Frobenius
/// norm of every pairwise commutator.
pub fn holonomy_report(alpha: &ConnectionForm<3>, loops: &[PathSpec]) -> Result<HolonomyReport> {
    let mats: Vec<Mat3> = loops.par_iter().map(|l| holonomy(alpha, l)).collect::<Result<_>>()?;
    let loops_out = mats
        .iter()
        .map(|m| LoopHolonomy {
            matrix: to_array(m),
            eigenvalues: sorted_eigenvalues(m),
            det_residual: (m.determinant() - 1.0).norm(),
        })
        .collect();
    let mut commutators = Vec::new();
    for i in 0..mats.len() {
        for j in i + 1..mats.len() {
            commutators.push(Commutator {
                loops: (i, j),
                norm: (mats[i] * mats[j] - mats[j] * mats[i]).norm(),
            });
        }
    }
    Ok(HolonomyReport {
        loops: loops_out,
        commutators,
    })
}

/// The linear map of the ambient space induced by a holonomy matrix, given
/// the frame `F₀` at the base point: `F₀ ↦ F₀gᵀ` for row frames (frame
/// vectors are rows) and `F₀ ↦ gF₀` for column frames.
pub fn ambient_holonomy(hol: &Mat3, f0: &Mat3, convention: Convention) -> Result<Mat3> {
    let inv = f0
        .try_inverse()
        .ok_or_else(|| Error::InvalidInput("singular base frame".into()))?;
    Ok(match convention {
        Convention::RowFrame => (inv * hol * f0).transpose(),
        Convention::ColumnFrame => f0 * hol * inv,
    })
}

/// Affine coordinates `x`, potential `φ`, mirror coordinates `y = ∇φ` and
/// the Legendre dual `φ* = x·y − φ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SemiFlatData {
    pub x: [f64; 2],
    pub phi: f64,
    pub y: [f64; 2],
    pub phi_star: f64,
}

#[derive(Clone, Debug)]
pub struct SemiFlatField {
    pub lattice: Lattice,
    pub data: Array2<SemiFlatData>,
    /// `det ∂y/∂x − 1` at nodes three or more cells from the edge, NaN
    /// elsewhere: the nested differences there stay off the boundary nodes.
    pub monge_ampere: Array2<f64>,
}

impl SemiFlatField {
    /// The mirror as a parabolic mesh `(y₁, y₂, φ*)`.
    pub fn mirror_mesh(&self) -> Result<ImmersionMesh> {
        let pos = self
            .data
            .mapv(|d| CVec3::new(d.y[0].into(), d.y[1].into(), d.phi_star.into()));
        ImmersionMesh::from_positions(&self.lattice, pos, MeshTarget::AffineSphere { lambda: 0 })
    }
}

/// Splits a parabolic affine sphere with `ξ = e₃` into `π_X f = x` and
/// `π_ξ f = φ`. Derivatives with respect to `x` are taken through the
/// mesh parametrization: `y = J⁻ᵀ∇φ` with `J = ∂x/∂(s,t)`, and
/// `det ∂y/∂x = det ∂y/∂(s,t) / det J`.
pub fn semiflat_develop(mesh: &ImmersionMesh) -> Result<SemiFlatField> {
    if mesh.target != (MeshTarget::AffineSphere { lambda: 0 }) {
        return Err(Error::InvalidInput("semi-flat data needs a parabolic affine sphere mesh".into()));
    }
    let lat = &mesh.lattice;
    let comp = |i: usize| mesh.positions.mapv(|p| p[i].re);
    let (x1, x2, phi) = (comp(0), comp(1), comp(2));
    let mut y1 = Array2::zeros(lat.shape());
    let mut y2 = Array2::zeros(lat.shape());
    let mut jac = Array2::zeros(lat.shape());
    for ((j, k), _) in x1.indexed_iter() {
        let (a, b) = lat.grad(&x1, j, k);
        let (c, d) = lat.grad(&x2, j, k);
        let (ps, pt) = lat.grad(&phi, j, k);
        let det = a * d - b * c;
        if !(det.abs() > 1e-300) {
            return Err(Error::Degenerate {
                what: "projection to the affine chart",
                vertex: mesh.vertex_index(j, k),
            });
        }
        // Jᵀ y = ∇φ with J = [[a, b], [c, d]]
        y1[[j, k]] = (d * ps - c * pt) / det;
        y2[[j, k]] = (-b * ps + a * pt) / det;
        jac[[j, k]] = det;
    }
    let mut ma = Array2::from_elem(lat.shape(), f64::NAN);
    Zip::indexed(&mut ma).par_for_each(|(j, k), m| {
        if at_depth(lat, j, k, 3) {
            let (a, b) = lat.grad(&y1, j, k);
            let (c, d) = lat.grad(&y2, j, k);
            *m = (a * d - b * c) / jac[[j, k]] - 1.0;
        }
    });
    let data = Array2::from_shape_fn(lat.shape(), |(j, k)| {
        let x = [x1[[j, k]], x2[[j, k]]];
        let y = [y1[[j, k]], y2[[j, k]]];
        let p = phi[[j, k]];
        SemiFlatData {
            x,
            phi: p,
            y,
            phi_star: x[0] * y[0] + x[1] * y[1] - p,
        }
    });
    Ok(SemiFlatField {
        lattice: *lat,
        data,
        monge_ampere: ma,
    })
}
