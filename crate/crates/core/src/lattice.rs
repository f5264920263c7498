//! Node lattices and the finite-difference stencils shared by every module.
//!
//! A lattice is the affine image of the index grid `(j, k)`:
//! `z = origin + j·step_j + k·step_k`. Rectangular patches use orthogonal
//! steps; a torus with non-rectangular modulus uses skew steps, and the
//! physical derivatives are recovered from the index derivatives through the
//! inverse Jacobian.

use nalgebra::SMatrix;
use ndarray::Array2;
use num_complex::Complex64;
use std::ops::{Add, Sub};

/// Values that can be differenced on a grid.
pub trait FieldValue: Clone + Send + Sync + Add<Output = Self> + Sub<Output = Self> {
    fn scale(&self, s: f64) -> Self;
}

/// Complex-linear values; needed for `∂_z` and `∂_z̄`.
pub trait ComplexValue: FieldValue {
    fn scale_c(&self, c: Complex64) -> Self;
}

impl FieldValue for f64 {
    fn scale(&self, s: f64) -> Self {
        self * s
    }
}

impl FieldValue for Complex64 {
    fn scale(&self, s: f64) -> Self {
        self * s
    }
}

impl ComplexValue for Complex64 {
    fn scale_c(&self, c: Complex64) -> Self {
        self * c
    }
}

impl<const R: usize, const C: usize> FieldValue for SMatrix<Complex64, R, C> {
    fn scale(&self, s: f64) -> Self {
        self * Complex64::new(s, 0.0)
    }
}

impl<const R: usize, const C: usize> ComplexValue for SMatrix<Complex64, R, C> {
    fn scale_c(&self, c: Complex64) -> Self {
        self * c
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lattice {
    pub nx: usize,
    pub ny: usize,
    pub origin: Complex64,
    pub step_j: Complex64,
    pub step_k: Complex64,
    pub periodic: bool,
}

/// Coefficients of the discrete Laplacian in index space:
/// `Δ = cjj ∂jj + 2 cjk ∂jk + ckk ∂kk`.
#[derive(Clone, Copy, Debug)]
pub struct LaplaceCoeffs {
    pub cjj: f64,
    pub cjk: f64,
    pub ckk: f64,
}

impl Lattice {
    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn z(&self, j: usize, k: usize) -> Complex64 {
        self.origin + self.step_j * j as f64 + self.step_k * k as f64
    }

    pub fn nodes(&self) -> Array2<Complex64> {
        Array2::from_shape_fn((self.nx, self.ny), |(j, k)| self.z(j, k))
    }

    pub fn is_boundary(&self, j: usize, k: usize) -> bool {
        !self.periodic && (j == 0 || k == 0 || j + 1 == self.nx || k + 1 == self.ny)
    }

    /// Nodes at which centered second differences are available.
    pub fn is_interior(&self, j: usize, k: usize) -> bool {
        !self.is_boundary(j, k)
    }

    /// The same node geometry without wrap-around; used for data that is
    /// only single-valued on the fundamental domain (reconstructed meshes).
    pub fn unwrapped(&self) -> Lattice {
        Lattice {
            periodic: false,
            ..*self
        }
    }

    /// Largest physical edge length.
    pub fn h(&self) -> f64 {
        self.step_j.norm().max(self.step_k.norm())
    }

    pub fn center(&self) -> (usize, usize) {
        (self.nx / 2, self.ny / 2)
    }

    /// Rows of `L` map `(∂x, ∂y)` to `(∂j, ∂k)`; this returns `L⁻¹`.
    pub fn inverse_jacobian(&self) -> [[f64; 2]; 2] {
        let (a, b) = (self.step_j.re, self.step_j.im);
        let (c, d) = (self.step_k.re, self.step_k.im);
        let det = a * d - b * c;
        [[d / det, -b / det], [-c / det, a / det]]
    }

    pub fn laplace_coeffs(&self) -> LaplaceCoeffs {
        // M = L⁻ᵀ L⁻¹ restricted to the index Hessian
        let li = self.inverse_jacobian();
        let m = |a: usize, b: usize| li[0][a] * li[0][b] + li[1][a] * li[1][b];
        LaplaceCoeffs {
            cjj: m(0, 0),
            cjk: m(0, 1),
            ckk: m(1, 1),
        }
    }

    /// Fractional index coordinates `(p, q)` of a point.
    pub fn index_coords(&self, z: Complex64) -> (f64, f64) {
        let w = z - self.origin;
        let li = self.inverse_jacobian();
        // (p, q) solves w = p·step_j + q·step_k; L⁻ᵀ applied to (Re w, Im w)
        (
            li[0][0] * w.re + li[1][0] * w.im,
            li[0][1] * w.re + li[1][1] * w.im,
        )
    }

    fn wrap(n: usize, i: isize) -> usize {
        i.rem_euclid(n as isize) as usize
    }

    fn at<T: Clone>(&self, f: &Array2<T>, j: usize, k: usize, dj: isize, dk: isize) -> T {
        let jj = Self::wrap(self.nx, j as isize + dj);
        let kk = Self::wrap(self.ny, k as isize + dk);
        f[[jj, kk]].clone()
    }

    fn d1<T: FieldValue>(&self, f: &Array2<T>, j: usize, k: usize, axis: usize) -> T {
        let (n, i) = if axis == 0 { (self.nx, j) } else { (self.ny, k) };
        let s = |d: isize| {
            if axis == 0 {
                self.at(f, j, k, d, 0)
            } else {
                self.at(f, j, k, 0, d)
            }
        };
        if self.periodic || (i > 0 && i + 1 < n) {
            (s(1) - s(-1)).scale(0.5)
        } else if i == 0 {
            (s(1).scale(4.0) - s(0).scale(3.0) - s(2)).scale(0.5)
        } else {
            (s(0).scale(3.0) - s(-1).scale(4.0) + s(-2)).scale(0.5)
        }
    }

    /// Physical gradient `(∂x f, ∂y f)`; centered in the interior and
    /// second-order one-sided on planar boundaries.
    pub fn grad<T: FieldValue>(&self, f: &Array2<T>, j: usize, k: usize) -> (T, T) {
        let fj = self.d1(f, j, k, 0);
        let fk = self.d1(f, j, k, 1);
        let li = self.inverse_jacobian();
        (
            fj.scale(li[0][0]) + fk.scale(li[0][1]),
            fj.scale(li[1][0]) + fk.scale(li[1][1]),
        )
    }

    /// Physical Hessian `(f_xx, f_xy, f_yy)` by centered differences.
    /// Only meaningful where [`Lattice::is_interior`] holds.
    pub fn hessian<T: FieldValue>(&self, f: &Array2<T>, j: usize, k: usize) -> (T, T, T) {
        let c = f[[j, k]].clone();
        let hjj = self.at(f, j, k, 1, 0) - c.scale(2.0) + self.at(f, j, k, -1, 0);
        let hkk = self.at(f, j, k, 0, 1) - c.scale(2.0) + self.at(f, j, k, 0, -1);
        let hjk = (self.at(f, j, k, 1, 1) - self.at(f, j, k, 1, -1) - self.at(f, j, k, -1, 1)
            + self.at(f, j, k, -1, -1))
        .scale(0.25);
        let li = self.inverse_jacobian();
        let comb = |a: usize, b: usize| {
            hjj.scale(li[a][0] * li[b][0])
                + hjk.scale(li[a][0] * li[b][1] + li[a][1] * li[b][0])
                + hkk.scale(li[a][1] * li[b][1])
        };
        (comb(0, 0), comb(0, 1), comb(1, 1))
    }

    /// `f_xx + f_yy` at an interior node.
    pub fn laplacian_at(&self, f: &Array2<f64>, j: usize, k: usize) -> f64 {
        let c = self.laplace_coeffs();
        let u = f[[j, k]];
        let mut s = c.cjj * (self.at(f, j, k, 1, 0) - 2.0 * u + self.at(f, j, k, -1, 0))
            + c.ckk * (self.at(f, j, k, 0, 1) - 2.0 * u + self.at(f, j, k, 0, -1));
        if c.cjk != 0.0 {
            s += 0.5
                * c.cjk
                * (self.at(f, j, k, 1, 1) - self.at(f, j, k, 1, -1) - self.at(f, j, k, -1, 1)
                    + self.at(f, j, k, -1, -1));
        }
        s
    }

    /// Laplacian over the whole grid; boundary nodes of planar lattices get 0.
    pub fn laplacian(&self, f: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.nx, self.ny));
        ndarray::Zip::indexed(&mut out).par_for_each(|(j, k), o| {
            if self.is_interior(j, k) {
                *o = self.laplacian_at(f, j, k);
            }
        });
        out
    }

    pub fn d_z<T: ComplexValue>(&self, f: &Array2<T>, j: usize, k: usize) -> T {
        let (fx, fy) = self.grad(f, j, k);
        (fx - fy.scale_c(Complex64::i())).scale(0.5)
    }

    pub fn d_zbar<T: ComplexValue>(&self, f: &Array2<T>, j: usize, k: usize) -> T {
        let (fx, fy) = self.grad(f, j, k);
        (fx + fy.scale_c(Complex64::i())).scale(0.5)
    }

    /// `f_zz = ¼(f_xx − f_yy − 2i f_xy)`.
    pub fn d_zz<T: ComplexValue>(&self, f: &Array2<T>, j: usize, k: usize) -> T {
        let (xx, xy, yy) = self.hessian(f, j, k);
        (xx - yy - xy.scale_c(Complex64::new(0.0, 2.0))).scale(0.25)
    }

    /// `f_zz̄ = ¼(f_xx + f_yy)`.
    pub fn d_zzbar<T: FieldValue>(&self, f: &Array2<T>, j: usize, k: usize) -> T {
        let (xx, _, yy) = self.hessian(f, j, k);
        (xx + yy).scale(0.25)
    }

    /// Maximum of `|f|` over interior nodes.
    pub fn interior_max(&self, f: &Array2<f64>) -> f64 {
        f.indexed_iter()
            .filter(|((j, k), _)| self.is_interior(*j, *k))
            .fold(0.0, |m, (_, v)| m.max(v.abs()))
    }

    /// Root-mean-square of `f` over interior nodes.
    pub fn interior_rms(&self, f: &Array2<f64>) -> f64 {
        let (s, n) = f
            .indexed_iter()
            .filter(|((j, k), _)| self.is_interior(*j, *k))
            .fold((0.0, 0usize), |(s, n), (_, v)| (s + v * v, n + 1));
        if n == 0 {
            0.0
        } else {
            (s / n as f64).sqrt()
        }
    }
}
