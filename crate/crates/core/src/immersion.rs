//! Surfaces reconstructed from solved metrics, and pointwise checks of their
//! structure equations on the reconstruction.
//!
//! Meshes live on the nodes of the solution's lattice, read without
//! wrap-around, so torus meshes cover one fundamental domain. Derivatives
//! of reconstructed data are centered differences. Checks run at nodes at
//! least two cells from the edge of the grid: next to a planar boundary the
//! frames were integrated with one-sided derivatives of `ψ`, which leaves an
//! `O(h)` kink in the second differences. Unchecked nodes hold NaN.

use crate::error::{Error, Result};
use crate::frames::{
    build_affine_augmented, build_connection, integrate_tree, CMat, FrameModel, FrameState, GroupTag, Mat3,
    SpanningTree,
};
use crate::geometry::{CubicDifferential, MetricSolution, SignCase};
use crate::lattice::Lattice;
use nalgebra::Vector3;
use ndarray::{Array2, Zip};
use num_complex::Complex64;
use serde::Serialize;

pub type CVec3 = Vector3<Complex64>;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeshTarget {
    AffineSphere { lambda: i8 },
    MinlagC2,
    MinlagCp2,
    MinlagCh2,
}

impl MeshTarget {
    pub fn embeds_in_r3(self) -> bool {
        matches!(self, MeshTarget::AffineSphere { .. })
    }

    pub fn name(self) -> &'static str {
        match self {
            MeshTarget::AffineSphere { lambda: -1 } => "hyperbolic_affine_sphere",
            MeshTarget::AffineSphere { lambda: 0 } => "parabolic_affine_sphere",
            MeshTarget::AffineSphere { .. } => "elliptic_affine_sphere",
            MeshTarget::MinlagC2 => "minlag_c2",
            MeshTarget::MinlagCp2 => "minlag_cp2",
            MeshTarget::MinlagCh2 => "minlag_ch2",
        }
    }

    /// Number of meaningful position components.
    pub fn dim(self) -> usize {
        if self == MeshTarget::MinlagC2 {
            2
        } else {
            3
        }
    }
}

/// Vertex positions and frames on a grid.
///
/// * affine spheres: real points of R³, frame rows `(f_z, f_z̄, ξ)`;
/// * C²: the third coordinate is 0, frame rows `(f_z, f_z̄, f)` padded by `e₃`;
/// * CP²/CH²: the horizontal lift `φ ∈ C³`, frame the unitary matrix `F`.
#[derive(Clone, Debug)]
pub struct ImmersionMesh {
    pub target: MeshTarget,
    pub lattice: Lattice,
    pub positions: Array2<CVec3>,
    pub frames: Array2<Mat3>,
}

impl ImmersionMesh {
    /// A mesh from positions alone; frames come from centered differences
    /// (`ξ = −λf` for proper affine spheres, `e₃` for parabolic ones).
    pub fn from_positions(lattice: &Lattice, positions: Array2<CVec3>, target: MeshTarget) -> Result<Self> {
        let lat = lattice.unwrapped();
        if positions.dim() != lat.shape() {
            return Err(Error::InvalidInput("position array does not match the lattice".into()));
        }
        let mut frames = Array2::from_elem(lat.shape(), Mat3::zeros());
        Zip::indexed(&mut frames).par_for_each(|(j, k), m| {
            let f = positions[[j, k]];
            let fz = lat.d_z(&positions, j, k);
            let fzb = lat.d_zbar(&positions, j, k);
            let third = match target {
                MeshTarget::AffineSphere { lambda: 0 } => CVec3::new(c(0.0), c(0.0), c(1.0)),
                MeshTarget::AffineSphere { lambda } => f * c(-(lambda as f64)),
                MeshTarget::MinlagC2 => f + CVec3::new(c(0.0), c(0.0), c(1.0)),
                _ => f,
            };
            *m = Mat3::from_rows(&[fz.transpose(), fzb.transpose(), third.transpose()]);
        });
        let mesh = ImmersionMesh {
            target,
            lattice: lat,
            positions,
            frames,
        };
        mesh.check_finite()?;
        Ok(mesh)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.lattice.shape()
    }

    pub fn vertex_index(&self, j: usize, k: usize) -> usize {
        j * self.lattice.ny + k
    }

    /// Grid quads, counter-clockwise in parameter space.
    pub fn faces(&self) -> Vec<[usize; 4]> {
        let (nx, ny) = self.shape();
        let mut out = Vec::with_capacity((nx - 1) * (ny - 1));
        for j in 0..nx - 1 {
            for k in 0..ny - 1 {
                out.push([
                    self.vertex_index(j, k),
                    self.vertex_index(j + 1, k),
                    self.vertex_index(j + 1, k + 1),
                    self.vertex_index(j, k + 1),
                ]);
            }
        }
        out
    }

    /// Real points for meshes in R³.
    pub fn real_positions(&self) -> Option<Vec<[f64; 3]>> {
        if !self.target.embeds_in_r3() {
            return None;
        }
        Some(self.positions.iter().map(|p| [p[0].re, p[1].re, p[2].re]).collect())
    }

    pub fn xi(&self) -> Array2<CVec3> {
        self.frames.mapv(|m| m.row(2).transpose())
    }

    fn check_finite(&self) -> Result<()> {
        for ((j, k), p) in self.positions.indexed_iter() {
            let v = self.vertex_index(j, k);
            if !p.iter().all(|x| x.is_finite()) {
                return Err(Error::Degenerate { what: "vertex position", vertex: v });
            }
            let d = self.frames[[j, k]].determinant();
            if !(d.norm() > 1e-300) || !d.is_finite() {
                return Err(Error::Degenerate { what: "frame determinant", vertex: v });
            }
        }
        Ok(())
    }
}

/// Initial data `(f₀, ξ₀, a)` at the base node, `a = f_z(z₀)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineInit {
    pub f0: [f64; 3],
    pub xi0: [f64; 3],
    pub a: [Complex64; 3],
}

impl AffineInit {
    /// `ξ₀ = e₃`, `f₀ = −λξ₀`, `a = e^{ψ₀}/√2·(1, −i, 0)`.
    pub fn canonical(psi0: f64, lambda: i8) -> Self {
        let s = psi0.exp() / std::f64::consts::SQRT_2;
        AffineInit {
            f0: [0.0, 0.0, -(lambda as f64)],
            xi0: [0.0, 0.0, 1.0],
            a: [c(s), Complex64::new(0.0, -s), c(0.0)],
        }
    }

    fn vectors(&self) -> (CVec3, CVec3, CVec3) {
        let r = |v: [f64; 3]| CVec3::new(c(v[0]), c(v[1]), c(v[2]));
        (r(self.f0), r(self.xi0), CVec3::from(self.a))
    }

    /// `det(a, ā, ξ₀) = i e^{2ψ₀}` and, for proper spheres, `f₀ = −λξ₀`.
    pub fn validate(&self, psi0: f64, lambda: i8) -> Result<()> {
        let (f0, xi0, a) = self.vectors();
        let e2 = (2.0 * psi0).exp();
        let det = Mat3::from_rows(&[a.transpose(), a.conjugate().transpose(), xi0.transpose()]).determinant();
        if (det - I * e2).norm() > 1e-12 * e2.max(1.0) {
            return Err(Error::InitCondition(format!(
                "det(a, ā, ξ₀) = {det} but i·e^(2ψ₀) = {}",
                I * e2
            )));
        }
        if lambda != 0 && (f0 + xi0 * c(lambda as f64)).norm() > 1e-12 {
            return Err(Error::InitCondition("a proper affine sphere needs f₀ = −λξ₀".into()));
        }
        Ok(())
    }
}

/// Integrates the affine structure equations over a spanning tree rooted at
/// the lattice center.
pub fn affine_sphere_immersion(
    sol: &MetricSolution,
    q: &CubicDifferential,
    lambda: i8,
    init: &AffineInit,
    tree: SpanningTree,
) -> Result<ImmersionMesh> {
    q.check_domain(&sol.domain)?;
    let base = sol.domain.lattice().center();
    init.validate(sol.psi[base], lambda)?;
    let alpha = build_affine_augmented(sol, q, lambda)?;
    let (f0, xi0, a) = init.vectors();
    let mut start = CMat::<4>::zeros();
    for i in 0..3 {
        start[(0, i)] = a[i];
        start[(1, i)] = a[i].conj();
        start[(2, i)] = xi0[i];
        start[(3, i)] = f0[i];
    }
    start[(3, 3)] = c(1.0);
    let frames4 = integrate_tree(&alpha, base, &start, tree);
    let mesh = ImmersionMesh {
        target: MeshTarget::AffineSphere { lambda },
        lattice: sol.domain.lattice().unwrapped(),
        positions: frames4.mapv(|m| CVec3::new(c(m[(3, 0)].re), c(m[(3, 1)].re), c(m[(3, 2)].re))),
        frames: frames4.mapv(|m| m.fixed_view::<3, 3>(0, 0).into_owned()),
    };
    mesh.check_finite()?;
    Ok(mesh)
}

/// Tolerances of the form `C·h^order + floor`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Tolerances {
    pub c: f64,
    pub floor: f64,
}

impl Default for Tolerances {
    /// Calibrated on the hyperboloid patch (largest measured constant ≈ 26
    /// for the `h²` checks) with a margin of about two.
    fn default() -> Self {
        Tolerances { c: 60.0, floor: 1e-10 }
    }
}

impl Tolerances {
    pub fn at(&self, h: f64, order: i32) -> f64 {
        self.c * h.powi(order) + self.floor
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Residual {
    pub name: String,
    pub max: f64,
    pub rms: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct VerificationReport {
    pub h: f64,
    pub residuals: Vec<Residual>,
}

impl VerificationReport {
    pub fn new(h: f64) -> Self {
        VerificationReport { h, residuals: Vec::new() }
    }

    pub fn push_value(&mut self, name: &str, max: f64, rms: f64, tolerance: f64) {
        self.residuals.push(Residual {
            name: name.to_string(),
            max,
            rms,
            tolerance,
            pass: max <= tolerance,
        });
    }

    /// Adds the max and rms of the finite entries of `field`.
    pub fn push(&mut self, name: &str, field: &Array2<f64>, tolerance: f64) {
        self.push_value(name, finite_max(field), finite_rms(field), tolerance);
    }

    pub fn passed(&self) -> bool {
        self.residuals.iter().all(|r| r.pass)
    }

    pub fn get(&self, name: &str) -> Option<&Residual> {
        self.residuals.iter().find(|r| r.name == name)
    }

    pub fn max(&self, name: &str) -> f64 {
        self.get(name).map_or(f64::NAN, |r| r.max)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.residuals.iter().filter(|r| !r.pass).map(|r| r.name.as_str()).collect()
    }
}

/// Maximum of `|f|` over finite entries (0 if there are none).
pub fn finite_max(f: &Array2<f64>) -> f64 {
    f.iter().filter(|v| v.is_finite()).fold(0.0, |m, v| m.max(v.abs()))
}

pub fn finite_rms(f: &Array2<f64>) -> f64 {
    let (s, n) = f
        .iter()
        .filter(|v| v.is_finite())
        .fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    if n == 0 {
        0.0
    } else {
        (s / n as f64).sqrt()
    }
}

/// Nodes at which mesh checks run.
pub fn is_checked(lat: &Lattice, j: usize, k: usize) -> bool {
    at_depth(lat, j, k, 2)
}

/// At least `d` cells from every edge of the grid.
pub fn at_depth(lat: &Lattice, j: usize, k: usize, d: usize) -> bool {
    j >= d && k >= d && j + d < lat.nx && k + d < lat.ny
}

fn checked_field<F>(lat: &Lattice, f: F) -> Array2<f64>
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    let mut out = Array2::from_elem(lat.shape(), f64::NAN);
    Zip::indexed(&mut out).par_for_each(|(j, k), o| {
        if is_checked(lat, j, k) {
            *o = f(j, k);
        }
    });
    out
}

fn det3(a: &CVec3, b: &CVec3, c: &CVec3) -> Complex64 {
    Mat3::from_rows(&[a.transpose(), b.transpose(), c.transpose()]).determinant()
}

fn check_shape(mesh: &ImmersionMesh, sol: &MetricSolution) -> Result<()> {
    if mesh.shape() != sol.domain.shape() {
        return Err(Error::InvalidInput("mesh and solution grids differ".into()));
    }
    Ok(())
}

fn psi_z(sol: &MetricSolution) -> Array2<Complex64> {
    let lat = sol.domain.lattice();
    let psi = sol.psi.mapv(c);
    let mut out = Array2::zeros(lat.shape());
    Zip::indexed(&mut out).par_for_each(|(j, k), o| *o = lat.d_z(&psi, j, k));
    out
}

/// Structure equations of an affine sphere mesh:
/// `det(f_z, f_z̄, ξ) = ie^{2ψ}`, `f_zz̄ = e^{2ψ}ξ`,
/// `f_zz = 2ψ_z f_z + Qe^{−2ψ}f_z̄`, `ξ_z = −λf_z`, the recovered cubic
/// `Q̂ = −i det(f_z, f_zz, ξ)`, and `ξ = −λf` (proper) or `ξ = e₃`.
pub fn verify_affine(
    mesh: &ImmersionMesh,
    sol: &MetricSolution,
    q: &CubicDifferential,
    lambda: i8,
    tol: &Tolerances,
) -> Result<VerificationReport> {
    check_shape(mesh, sol)?;
    if mesh.target != (MeshTarget::AffineSphere { lambda }) {
        return Err(Error::InvalidInput(format!("expected an affine sphere mesh with λ = {lambda}")));
    }
    let lat = &mesh.lattice;
    let pos = &mesh.positions;
    let xi = mesh.xi();
    let pz = psi_z(sol);
    let lam = lambda as f64;
    let domain = sol.domain;
    let e2 = |j: usize, k: usize| (2.0 * sol.psi[[j, k]]).exp();
    let h2 = tol.at(lat.h(), 2);

    let mut report = VerificationReport::new(lat.h());
    let det = checked_field(lat, |j, k| {
        let d = det3(&lat.d_z(pos, j, k), &lat.d_zbar(pos, j, k), &xi[[j, k]]);
        (d - I * e2(j, k)).norm()
    });
    report.push("det", &det, h2);
    let harmonic = checked_field(lat, |j, k| (lat.d_zzbar(pos, j, k) - xi[[j, k]] * c(e2(j, k))).norm());
    report.push("f_zzbar", &harmonic, h2);
    let structure = checked_field(lat, |j, k| {
        let qv = q.eval(domain.z(j, k)) / e2(j, k);
        let r = lat.d_zz(pos, j, k) - lat.d_z(pos, j, k) * (pz[[j, k]] * 2.0) - lat.d_zbar(pos, j, k) * qv;
        r.norm()
    });
    report.push("f_zz", &structure, h2);
    let xi_z = checked_field(lat, |j, k| (lat.d_z(&xi, j, k) + lat.d_z(pos, j, k) * c(lam)).norm());
    report.push("xi_z", &xi_z, h2);
    let cubic = checked_field(lat, |j, k| {
        let qhat = -I * det3(&lat.d_z(pos, j, k), &lat.d_zz(pos, j, k), &xi[[j, k]]);
        (qhat - q.eval(domain.z(j, k))).norm()
    });
    report.push("cubic", &cubic, h2);
    let center = Array2::from_shape_fn(lat.shape(), |(j, k)| {
        if lambda == 0 {
            (xi[[j, k]] - CVec3::new(c(0.0), c(0.0), c(1.0))).norm()
        } else {
            (xi[[j, k]] + pos[[j, k]] * c(lam)).norm()
        }
    });
    let cmax = center.iter().cloned().fold(0.0, f64::max);
    let crms = (center.iter().map(|v| v * v).sum::<f64>() / center.len() as f64).sqrt();
    report.push_value("center", cmax, crms, h2);
    Ok(report)
}

/// Blaschke metric `e^{2ψ}` and cubic `Q` read off a proper affine sphere
/// mesh by finite differences, with `ξ = −λf`.
pub fn mesh_blaschke_data(mesh: &ImmersionMesh) -> Result<(Array2<f64>, Array2<Complex64>)> {
    let lambda = match mesh.target {
        MeshTarget::AffineSphere { lambda } if lambda != 0 => lambda as f64,
        _ => return Err(Error::InvalidInput("Blaschke data needs a proper affine sphere mesh".into())),
    };
    let lat = &mesh.lattice;
    let pos = &mesh.positions;
    let mut metric = Array2::from_elem(lat.shape(), f64::NAN);
    let mut cubic = Array2::from_elem(lat.shape(), Complex64::new(f64::NAN, f64::NAN));
    Zip::indexed(&mut metric).and(&mut cubic).par_for_each(|(j, k), m, q| {
        if is_checked(lat, j, k) {
            let xi = pos[[j, k]] * c(-lambda);
            let fz = lat.d_z(pos, j, k);
            *m = (-I * det3(&fz, &lat.d_zbar(pos, j, k), &xi)).re;
            *q = -I * det3(&fz, &lat.d_zz(pos, j, k), &xi);
        }
    });
    Ok((metric, cubic))
}

/// The conormal map `N` (`⟨N, f⟩ = 1`, `⟨N, f_z⟩ = ⟨N, f_z̄⟩ = 0`) as an
/// affine sphere mesh with `ξ* = −λN`. Derivatives `N_z`, `N_z̄` come from
/// the same 3×3 system differentiated, using the stored frames.
pub fn conormal_dual(mesh: &ImmersionMesh) -> Result<ImmersionMesh> {
    let lambda = match mesh.target {
        MeshTarget::AffineSphere { lambda } if lambda != 0 => lambda,
        _ => return Err(Error::InvalidInput("the conormal dual needs a proper affine sphere mesh".into())),
    };
    let lam = c(lambda as f64);
    let mut positions = Array2::from_elem(mesh.shape(), CVec3::zeros());
    let mut frames = Array2::from_elem(mesh.shape(), Mat3::zeros());
    for ((j, k), fr) in mesh.frames.indexed_iter() {
        let f = mesh.positions[[j, k]];
        let (fz, fzb, xi) = (fr.row(0), fr.row(1), fr.row(2).transpose());
        let m = Mat3::from_rows(&[f.transpose(), fz.into_owned(), fzb.into_owned()]);
        let lu = m.lu();
        let degenerate = || Error::Degenerate {
            what: "conormal solve",
            vertex: mesh.vertex_index(j, k),
        };
        let e2 = -I * det3(&fz.transpose(), &fzb.transpose(), &xi);
        let n = lu.solve(&CVec3::new(c(1.0), c(0.0), c(0.0))).ok_or_else(degenerate)?;
        let nz = lu.solve(&CVec3::new(c(0.0), c(0.0), lam * e2)).ok_or_else(degenerate)?;
        let nzb = lu.solve(&CVec3::new(c(0.0), lam * e2, c(0.0))).ok_or_else(degenerate)?;
        let n = n.map(|v| c(v.re));
        positions[[j, k]] = n;
        frames[[j, k]] = Mat3::from_rows(&[nz.transpose(), nzb.transpose(), (n * -lam).transpose()]);
    }
    let dual = ImmersionMesh {
        target: mesh.target,
        lattice: mesh.lattice,
        positions,
        frames,
    };
    dual.check_finite()?;
    Ok(dual)
}

/// `⟨v, w⟩ = Σ vᵢ w̄ᵢ` over the first `n` components, minus the third when
/// `sign = −1`.
fn herm(v: &CVec3, w: &CVec3, sign: f64) -> Complex64 {
    v[0] * w[0].conj() + v[1] * w[1].conj() + v[2] * w[2].conj() * sign
}

/// Initial data of a C² minimal Lagrangian immersion: `p = f_z`, `q = f_z̄`,
/// `f₀` at the base node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct C2Init {
    pub p: [Complex64; 2],
    pub q: [Complex64; 2],
    pub f0: [Complex64; 2],
}

impl C2Init {
    /// `p = e^{ψ₀}(1, 0)`, `q = e^{ψ₀}(0, 1)`, `f₀ = 0`.
    pub fn canonical(psi0: f64) -> Self {
        let e = psi0.exp();
        C2Init {
            p: [c(e), c(0.0)],
            q: [c(0.0), c(e)],
            f0: [c(0.0); 2],
        }
    }

    fn vec(v: [Complex64; 2]) -> CVec3 {
        CVec3::new(v[0], v[1], c(0.0))
    }

    /// `⟨p, q⟩ = 0`, `⟨p, p⟩ = ⟨q, q⟩ = e^{2ψ₀}`.
    pub fn validate(&self, psi0: f64) -> Result<()> {
        let (p, q) = (Self::vec(self.p), Self::vec(self.q));
        let e2 = (2.0 * psi0).exp();
        let scale = 1e-12 * e2.max(1.0);
        let bad = |what: &str, v: f64| Error::InitCondition(format!("{what} off by {v:.3e}"));
        let pq = herm(&p, &q, 1.0).norm();
        if pq > scale {
            return Err(bad("⟨p, q⟩", pq));
        }
        for (name, v) in [("⟨p, p⟩", &p), ("⟨q, q⟩", &q)] {
            let d = (herm(v, v, 1.0).re - e2).abs();
            if d > scale {
                return Err(bad(name, d));
            }
        }
        Ok(())
    }
}

/// Integrates the C² structure equations (rows `f_z`, `f_z̄`, `f`).
pub fn minlag_c2_immersion(
    sol: &MetricSolution,
    q: &CubicDifferential,
    init: &C2Init,
    tree: SpanningTree,
) -> Result<ImmersionMesh> {
    q.check_domain(&sol.domain)?;
    let base = sol.domain.lattice().center();
    init.validate(sol.psi[base])?;
    let alpha = build_connection(sol, q, SignCase::MINLAG_C2, c(1.0), FrameModel::FlatC2)?;
    let mut start = Mat3::zeros();
    for i in 0..2 {
        start[(0, i)] = init.p[i];
        start[(1, i)] = init.q[i];
        start[(2, i)] = init.f0[i];
    }
    start[(2, 2)] = c(1.0);
    let frames = integrate_tree(&alpha, base, &start, tree);
    let mesh = ImmersionMesh {
        target: MeshTarget::MinlagC2,
        lattice: sol.domain.lattice().unwrapped(),
        positions: frames.mapv(|m| CVec3::new(m[(2, 0)], m[(2, 1)], c(0.0))),
        frames,
    };
    mesh.check_finite()?;
    Ok(mesh)
}

fn require(mesh: &ImmersionMesh, target: MeshTarget) -> Result<()> {
    if mesh.target != target {
        return Err(Error::InvalidInput(format!("expected a {} mesh", target.name())));
    }
    Ok(())
}

/// Real tangent vectors `(f_x, f_y) = (f_z + f_z̄, i(f_z − f_z̄))`.
fn tangents(lat: &Lattice, pos: &Array2<CVec3>, j: usize, k: usize) -> (CVec3, CVec3) {
    lat.grad(pos, j, k)
}

/// `θ = arg dz¹∧dz²(f_x, f_y)`, constant on special Lagrangian (minimal)
/// surfaces in C².
pub fn lagrangian_angle(mesh: &ImmersionMesh) -> Result<Array2<f64>> {
    require(mesh, MeshTarget::MinlagC2)?;
    let lat = &mesh.lattice;
    let mut theta = Array2::zeros(lat.shape());
    for ((j, k), t) in theta.indexed_iter_mut() {
        let (fx, fy) = tangents(lat, &mesh.positions, j, k);
        let w = fx[0] * fy[1] - fx[1] * fy[0];
        if w.norm() < 1e-14 * (fx.norm() * fy.norm()).max(1e-300) {
            return Err(Error::Degenerate {
                what: "tangent frame",
                vertex: mesh.vertex_index(j, k),
            });
        }
        *t = w.arg();
    }
    Ok(theta)
}

/// Largest circular deviation of an angle field from its value at the
/// lattice center, over checked nodes.
pub fn angle_oscillation(lat: &Lattice, theta: &Array2<f64>) -> f64 {
    finite_max(&angle_deviation(lat, theta))
}

fn angle_deviation(lat: &Lattice, theta: &Array2<f64>) -> Array2<f64> {
    let t0 = theta[lat.center()];
    checked_field(lat, |j, k| {
        let d = (theta[[j, k]] - t0).rem_euclid(std::f64::consts::TAU);
        d.min(std::f64::consts::TAU - d)
    })
}

/// Harmonicity, conformality, the Lagrangian conditions, metric, cubic and
/// Lagrangian angle of a C² mesh.
pub fn verify_minlag_c2(
    mesh: &ImmersionMesh,
    sol: &MetricSolution,
    q: &CubicDifferential,
    tol: &Tolerances,
) -> Result<VerificationReport> {
    check_shape(mesh, sol)?;
    require(mesh, MeshTarget::MinlagC2)?;
    let lat = &mesh.lattice;
    let pos = &mesh.positions;
    let h2 = tol.at(lat.h(), 2);
    let e2 = |j: usize, k: usize| (2.0 * sol.psi[[j, k]]).exp();
    let mut report = VerificationReport::new(lat.h());
    let harmonic = checked_field(lat, |j, k| lat.d_zzbar(pos, j, k).norm());
    report.push("harmonic", &harmonic, h2);
    let conformal = checked_field(lat, |j, k| herm(&lat.d_z(pos, j, k), &lat.d_zbar(pos, j, k), 1.0).norm());
    report.push("conformal", &conformal, h2);
    let lagrangian = checked_field(lat, |j, k| {
        let (a, b) = (lat.d_z(pos, j, k), lat.d_zbar(pos, j, k));
        (herm(&a, &a, 1.0) - herm(&b, &b, 1.0)).norm()
    });
    report.push("lagrangian", &lagrangian, h2);
    let omega = checked_field(lat, |j, k| {
        let (fx, fy) = tangents(lat, pos, j, k);
        herm(&fx, &fy, 1.0).im.abs()
    });
    report.push("symplectic", &omega, h2);
    let metric = checked_field(lat, |j, k| {
        let a = lat.d_z(pos, j, k);
        (herm(&a, &a, 1.0).re - e2(j, k)).abs()
    });
    report.push("metric", &metric, h2);
    let cubic = checked_field(lat, |j, k| {
        let qhat = -herm(&lat.d_zz(pos, j, k), &lat.d_zbar(pos, j, k), 1.0);
        (qhat - q.eval(sol.domain.z(j, k))).norm()
    });
    report.push("cubic", &cubic, h2);
    let theta = lagrangian_angle(mesh)?;
    report.push("angle", &angle_deviation(lat, &theta), h2);
    Ok(report)
}

#[derive(Clone, Debug)]
pub struct ShapeOperatorField {
    /// Operator norm of the shape operator along the unit normal `Jf_x/|f_x|`.
    pub measured: Array2<f64>,
    /// `2‖Q₃‖ = 2|Q|/σ^{3/2}` with `σ = 2e^{2ψ}` the induced conformal factor.
    pub expected: Array2<f64>,
}

impl ShapeOperatorField {
    pub fn max_deviation(&self) -> f64 {
        finite_max(&(&self.measured - &self.expected))
    }
}

/// Second fundamental form of a C² mesh by finite differences.
pub fn shape_operator_norm(mesh: &ImmersionMesh, q: &CubicDifferential, sol: &MetricSolution) -> Result<ShapeOperatorField> {
    check_shape(mesh, sol)?;
    require(mesh, MeshTarget::MinlagC2)?;
    let lat = &mesh.lattice;
    let pos = &mesh.positions;
    let real = |v: &CVec3, w: &CVec3| herm(v, w, 1.0).re;
    let mut measured = Array2::from_elem(lat.shape(), f64::NAN);
    let mut expected = Array2::zeros(lat.shape());
    for ((j, k), m) in measured.indexed_iter_mut() {
        let sigma = 2.0 * (2.0 * sol.psi[[j, k]]).exp();
        expected[[j, k]] = 2.0 * q.eval(sol.domain.z(j, k)).norm() / sigma.powf(1.5);
        if !is_checked(lat, j, k) {
            continue;
        }
        let (fx, fy) = tangents(lat, pos, j, k);
        let (fxx, fxy, fyy) = lat.hessian(pos, j, k);
        let nrm = fx.norm();
        if nrm < 1e-300 {
            return Err(Error::Degenerate {
                what: "normal frame",
                vertex: mesh.vertex_index(j, k),
            });
        }
        let nu = fx * (I / nrm);
        let g = nalgebra::Matrix2::new(real(&fx, &fx), real(&fx, &fy), real(&fy, &fx), real(&fy, &fy));
        let h = nalgebra::Matrix2::new(real(&fxx, &nu), real(&fxy, &nu), real(&fxy, &nu), real(&fyy, &nu));
        let ginv = g.try_inverse().ok_or(Error::Degenerate {
            what: "normal frame",
            vertex: mesh.vertex_index(j, k),
        })?;
        // eigenvalues of g⁻¹h; traceless for minimal surfaces
        let s = ginv * h;
        let tr = s.trace();
        let det = s.determinant();
        let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
        *m = (0.5 * tr).abs() + disc;
    }
    Ok(ShapeOperatorField { measured, expected })
}

/// Horizontal lift of a minimal Lagrangian surface in CP² (`ε = −1, λ = 1`)
/// or CH² (`λ = −1`), `φ = F e₃`, from column frames starting at `f0`
/// (identity by default).
pub fn minlag_projective_immersion(
    sol: &MetricSolution,
    q: &CubicDifferential,
    case: SignCase,
    f0: Option<Mat3>,
    tree: SpanningTree,
) -> Result<ImmersionMesh> {
    let target = match (case.epsilon, case.lambda) {
        (-1, 1) => MeshTarget::MinlagCp2,
        (-1, -1) => MeshTarget::MinlagCh2,
        _ => return Err(case.reject("projective minimal Lagrangian surfaces need ε = −1, λ = ±1")),
    };
    q.check_domain(&sol.domain)?;
    let start = f0.unwrap_or_else(Mat3::identity);
    let g = group_residuals_of(&start, GroupTag::for_case(case));
    if g > 1e-12 {
        return Err(Error::InitCondition(format!("initial frame is {g:.3e} away from the group")));
    }
    let alpha = build_connection(sol, q, case, c(1.0), FrameModel::MinimalLagrangian)?;
    let frames = integrate_tree(&alpha, sol.domain.lattice().center(), &start, tree);
    let mesh = ImmersionMesh {
        target,
        lattice: sol.domain.lattice().unwrapped(),
        positions: frames.mapv(|m| m.column(2).into_owned()),
        frames,
    };
    mesh.check_finite()?;
    Ok(mesh)
}

fn group_residuals_of(f: &Mat3, tag: GroupTag) -> f64 {
    crate::frames::group_residuals(&FrameState::new(*f, tag)).membership.unwrap_or(0.0)
}

#[derive(Clone, Copy, Debug)]
pub struct CpnPoint {
    pub phi: CVec3,
    /// `⟨φ, φ⟩±`, which should equal the sign.
    pub norm_sq: f64,
}

/// `φ = F e₃` with its Hermitian square norm for the form of signature
/// `(3, 0)` (`sign = 1`) or `(2, 1)` (`sign = −1`).
pub fn cpn_point(state: &FrameState, sign: i8) -> CpnPoint {
    let phi = state.f.column(2).into_owned();
    CpnPoint {
        phi,
        norm_sq: herm(&phi, &phi, sign as f64).re,
    }
}

/// Normalization, horizontality, conformality, metric and group
/// membership of a CP²/CH² mesh.
pub fn verify_projective(mesh: &ImmersionMesh, sol: &MetricSolution, tol: &Tolerances) -> Result<VerificationReport> {
    check_shape(mesh, sol)?;
    let (sign, tag) = match mesh.target {
        MeshTarget::MinlagCp2 => (1.0, GroupTag::Su3),
        MeshTarget::MinlagCh2 => (-1.0, GroupTag::Su21),
        _ => return Err(Error::InvalidInput("expected a CP² or CH² mesh".into())),
    };
    let lat = &mesh.lattice;
    let pos = &mesh.positions;
    let h2 = tol.at(lat.h(), 2);
    let mut report = VerificationReport::new(lat.h());
    let all = |f: &dyn Fn(usize, usize) -> f64| {
        let v: Vec<f64> = pos.indexed_iter().map(|((j, k), _)| f(j, k)).collect();
        let max = v.iter().cloned().fold(0.0, f64::max);
        let rms = (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
        (max, rms)
    };
    let (m, r) = all(&|j, k| (herm(&pos[[j, k]], &pos[[j, k]], sign).re - sign).abs());
    // unitarity drifts at the rate of the fourth-order transport
    report.push_value("norm", m, r, tol.at(lat.h(), 4));
    let (m, r) = all(&|j, k| group_residuals_of(&mesh.frames[[j, k]], tag));
    report.push_value("group", m, r, h2);
    let horizontal = checked_field(lat, |j, k| herm(&lat.d_z(pos, j, k), &pos[[j, k]], sign).norm());
    report.push("horizontal", &horizontal, h2);
    let conformal = checked_field(lat, |j, k| herm(&lat.d_z(pos, j, k), &lat.d_zbar(pos, j, k), sign).norm());
    report.push("conformal", &conformal, h2);
    let metric = checked_field(lat, |j, k| {
        let a = lat.d_z(pos, j, k);
        (herm(&a, &a, sign).re - (2.0 * sol.psi[[j, k]]).exp()).abs()
    });
    report.push("metric", &metric, h2);
    Ok(report)
}

/// Real frame `R ∈ SL(3, R)` of an affine sphere, in column form, from the
/// rows `(f_z, f_z̄, ξ)`: columns `(f_x, f_y)/(√2e^ψ)` and `ξ`, multiplied
/// by the constant gauge so that `group_residuals` can test reality.
pub fn sphere_frame(rows: &Mat3, psi: f64) -> Mat3 {
    let s = c(1.0 / (std::f64::consts::SQRT_2 * psi.exp()));
    let d = Mat3::from_diagonal(&CVec3::new(s, s, c(1.0)));
    (d * rows).transpose()
}
