//! Sign cases, domains, background metrics and cubic differentials.

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt;

/// The six geometries selected by `(ε, λ)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryTag {
    HyperbolicAffine,
    ParabolicAffine,
    EllipticAffine,
    MinlagCh2,
    MinlagC2,
    MinlagCp2,
}

impl GeometryTag {
    pub const ALL: [GeometryTag; 6] = [
        GeometryTag::HyperbolicAffine,
        GeometryTag::ParabolicAffine,
        GeometryTag::EllipticAffine,
        GeometryTag::MinlagCh2,
        GeometryTag::MinlagC2,
        GeometryTag::MinlagCp2,
    ];

    pub fn sign_case(self) -> SignCase {
        let (e, l) = match self {
            GeometryTag::HyperbolicAffine => (1, -1),
            GeometryTag::ParabolicAffine => (1, 0),
            GeometryTag::EllipticAffine => (1, 1),
            GeometryTag::MinlagCh2 => (-1, -1),
            GeometryTag::MinlagC2 => (-1, 0),
            GeometryTag::MinlagCp2 => (-1, 1),
        };
        SignCase {
            epsilon: e,
            lambda: l,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GeometryTag::HyperbolicAffine => "hyperbolic_affine",
            GeometryTag::ParabolicAffine => "parabolic_affine",
            GeometryTag::EllipticAffine => "elliptic_affine",
            GeometryTag::MinlagCh2 => "minlag_ch2",
            GeometryTag::MinlagC2 => "minlag_c2",
            GeometryTag::MinlagCp2 => "minlag_cp2",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == s)
    }
}

impl fmt::Display for GeometryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SignCase {
    pub epsilon: i8,
    pub lambda: i8,
}

impl SignCase {
    pub const HYPERBOLIC_AFFINE: SignCase = SignCase { epsilon: 1, lambda: -1 };
    pub const PARABOLIC_AFFINE: SignCase = SignCase { epsilon: 1, lambda: 0 };
    pub const ELLIPTIC_AFFINE: SignCase = SignCase { epsilon: 1, lambda: 1 };
    pub const MINLAG_CH2: SignCase = SignCase { epsilon: -1, lambda: -1 };
    pub const MINLAG_C2: SignCase = SignCase { epsilon: -1, lambda: 0 };
    pub const MINLAG_CP2: SignCase = SignCase { epsilon: -1, lambda: 1 };

    /// The four cases with `λ = ±1`, which carry a spectral family.
    pub const TODA: [SignCase; 4] = [
        SignCase::HYPERBOLIC_AFFINE,
        SignCase::ELLIPTIC_AFFINE,
        SignCase::MINLAG_CH2,
        SignCase::MINLAG_CP2,
    ];

    pub fn new(epsilon: i8, lambda: i8) -> Result<Self> {
        if !matches!(epsilon, -1 | 1) || !matches!(lambda, -1..=1) {
            return Err(Error::InvalidSignCase {
                epsilon,
                lambda,
                reason: "ε must be ±1 and λ in {−1, 0, 1}",
            });
        }
        Ok(SignCase { epsilon, lambda })
    }

    pub fn tag(self) -> GeometryTag {
        match (self.epsilon, self.lambda) {
            (1, -1) => GeometryTag::HyperbolicAffine,
            (1, 0) => GeometryTag::ParabolicAffine,
            (1, 1) => GeometryTag::EllipticAffine,
            (-1, -1) => GeometryTag::MinlagCh2,
            (-1, 0) => GeometryTag::MinlagC2,
            _ => GeometryTag::MinlagCp2,
        }
    }

    pub fn eps(self) -> f64 {
        self.epsilon as f64
    }

    pub fn lam(self) -> f64 {
        self.lambda as f64
    }

    pub(crate) fn reject(self, reason: &'static str) -> Error {
        Error::InvalidSignCase {
            epsilon: self.epsilon,
            lambda: self.lambda,
            reason,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainKind {
    Torus { tau: Complex64 },
    Rectangle { width: f64, height: f64 },
    DiskPatch { radius: f64 },
}

/// A domain together with its node lattice.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Domain {
    pub kind: DomainKind,
    lattice: Lattice,
}

impl Domain {
    fn check_counts(n: usize, m: usize) -> Result<()> {
        if n < 8 || m < 8 {
            return Err(Error::InvalidDomain(format!("grid {n}×{m} is below the 8×8 minimum")));
        }
        Ok(())
    }

    /// Flat torus `C / (Z + τZ)` with nodes `z = j/n + (k/m)τ`.
    pub fn torus(tau: Complex64, n: usize, m: usize) -> Result<Self> {
        Self::check_counts(n, m)?;
        if !(tau.im > 0.0) || !tau.re.is_finite() {
            return Err(Error::InvalidDomain("torus modulus needs Im τ > 0".into()));
        }
        Ok(Domain {
            kind: DomainKind::Torus { tau },
            lattice: Lattice {
                nx: n,
                ny: m,
                origin: Complex64::new(0.0, 0.0),
                step_j: Complex64::new(1.0 / n as f64, 0.0),
                step_k: tau / m as f64,
                periodic: true,
            },
        })
    }

    /// Rectangle centered at the origin, nodes on the boundary included.
    pub fn rectangle(width: f64, height: f64, n: usize, m: usize) -> Result<Self> {
        Self::check_counts(n, m)?;
        if !(width > 0.0 && height > 0.0) {
            return Err(Error::InvalidDomain("rectangle sides must be positive".into()));
        }
        Ok(Self::planar(DomainKind::Rectangle { width, height }, width, height, n, m))
    }

    /// The square inscribed in the disk `|z| < r`, so every node lies in
    /// the Poincaré disk. Odd node counts put `z = 0` on a node.
    pub fn disk_patch(radius: f64, n: usize, m: usize) -> Result<Self> {
        Self::check_counts(n, m)?;
        if !(radius > 0.0 && radius < 1.0) {
            return Err(Error::InvalidDomain("disk patch radius must lie in (0, 1)".into()));
        }
        let side = radius * std::f64::consts::SQRT_2;
        Ok(Self::planar(DomainKind::DiskPatch { radius }, side, side, n, m))
    }

    fn planar(kind: DomainKind, w: f64, h: f64, n: usize, m: usize) -> Self {
        Domain {
            kind,
            lattice: Lattice {
                nx: n,
                ny: m,
                origin: Complex64::new(-w / 2.0, -h / 2.0),
                step_j: Complex64::new(w / (n - 1) as f64, 0.0),
                step_k: Complex64::new(0.0, h / (m - 1) as f64),
                periodic: false,
            },
        }
    }

    /// Same domain at a different resolution.
    pub fn resampled(&self, n: usize, m: usize) -> Result<Self> {
        match self.kind {
            DomainKind::Torus { tau } => Self::torus(tau, n, m),
            DomainKind::Rectangle { width, height } => Self::rectangle(width, height, n, m),
            DomainKind::DiskPatch { radius } => Self::disk_patch(radius, n, m),
        }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn is_torus(&self) -> bool {
        matches!(self.kind, DomainKind::Torus { .. })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.lattice.shape()
    }

    pub fn spacing(&self) -> (f64, f64) {
        (self.lattice.step_j.norm(), self.lattice.step_k.norm())
    }

    pub fn h(&self) -> f64 {
        self.lattice.h()
    }

    pub fn z(&self, j: usize, k: usize) -> Complex64 {
        self.lattice.z(j, k)
    }

    pub fn is_boundary(&self, j: usize, k: usize) -> bool {
        self.lattice.is_boundary(j, k)
    }

    pub fn boundary_mask(&self) -> Array2<bool> {
        Array2::from_shape_fn(self.shape(), |(j, k)| self.is_boundary(j, k))
    }

    pub fn field<F: Fn(Complex64) -> f64>(&self, f: F) -> Array2<f64> {
        Array2::from_shape_fn(self.shape(), |(j, k)| f(self.z(j, k)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackgroundMetric {
    Flat { sigma: f64 },
    PoincareDisk,
}

impl Default for BackgroundMetric {
    fn default() -> Self {
        BackgroundMetric::Flat { sigma: 1.0 }
    }
}

impl BackgroundMetric {
    pub fn sigma(&self, z: Complex64) -> Result<f64> {
        match *self {
            BackgroundMetric::Flat { sigma } => Ok(sigma),
            BackgroundMetric::PoincareDisk => {
                let r2 = z.norm_sqr();
                if r2 >= 1.0 {
                    return Err(Error::OutOfDomain(z));
                }
                Ok(4.0 / ((1.0 - r2) * (1.0 - r2)))
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            BackgroundMetric::Flat { sigma } if !(sigma > 0.0 && sigma.is_finite()) => {
                Err(Error::InvalidInput("flat conformal factor must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn sigma_field(&self, domain: &Domain) -> Result<Array2<f64>> {
        let l = domain.lattice();
        let mut out = Array2::zeros(l.shape());
        for ((j, k), v) in out.indexed_iter_mut() {
            *v = self.sigma(l.z(j, k))?;
        }
        Ok(out)
    }
}

/// `‖Q‖²_μ = |Q|²/σ³`.
pub fn cubic_norm_sq(q: &CubicDifferential, mu: &BackgroundMetric, z: Complex64) -> Result<f64> {
    let s = mu.sigma(z)?;
    Ok(q.eval(z).norm_sqr() / (s * s * s))
}

/// `κ = −(2/σ) ∂z∂z̄ log σ`, in closed form for the built-in metrics.
pub fn gauss_curvature(mu: &BackgroundMetric, z: Complex64) -> Result<f64> {
    match mu {
        BackgroundMetric::Flat { .. } => Ok(0.0),
        BackgroundMetric::PoincareDisk => {
            let s = mu.sigma(z)?;
            let w = 1.0 - z.norm_sqr();
            // ∂z∂z̄ log(4/(1−|z|²)²) = 2/(1−|z|²)²
            Ok(-(2.0 / s) * (2.0 / (w * w)))
        }
    }
}

/// Curvature of the sampled metric by the 5-point stencil,
/// `κ_h = −(1/(2σ)) Δ_h log σ`; boundary nodes are left at 0.
pub fn discrete_gauss_curvature(mu: &BackgroundMetric, domain: &Domain) -> Result<Array2<f64>> {
    let sigma = mu.sigma_field(domain)?;
    let logs = sigma.mapv(f64::ln);
    let lap = domain.lattice().laplacian(&logs);
    Ok(Array2::from_shape_fn(domain.shape(), |(j, k)| {
        if domain.is_boundary(j, k) {
            0.0
        } else {
            -lap[[j, k]] / (2.0 * sigma[[j, k]])
        }
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CubicDifferential {
    Constant { c: Complex64 },
    /// Coefficients in increasing degree.
    Polynomial { coeffs: Vec<Complex64> },
}

impl CubicDifferential {
    pub fn constant(c: Complex64) -> Self {
        CubicDifferential::Constant { c }
    }

    pub fn zero() -> Self {
        Self::constant(Complex64::new(0.0, 0.0))
    }

    pub fn polynomial(coeffs: Vec<Complex64>) -> Self {
        CubicDifferential::Polynomial { coeffs }
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        match self {
            CubicDifferential::Constant { c } => *c,
            CubicDifferential::Polynomial { coeffs } => horner(coeffs, z),
        }
    }

    pub fn scaled(&self, t: f64) -> Self {
        match self {
            CubicDifferential::Constant { c } => Self::constant(c * t),
            CubicDifferential::Polynomial { coeffs } => {
                Self::polynomial(coeffs.iter().map(|c| c * t).collect())
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            CubicDifferential::Constant { c } => c.norm() == 0.0,
            CubicDifferential::Polynomial { coeffs } => coeffs.iter().all(|c| c.norm() == 0.0),
        }
    }

    pub fn field(&self, domain: &Domain) -> Array2<Complex64> {
        Array2::from_shape_fn(domain.shape(), |(j, k)| self.eval(domain.z(j, k)))
    }

    /// `Q` is only well defined on a torus when it is constant.
    pub fn check_domain(&self, domain: &Domain) -> Result<()> {
        if domain.is_torus() && !matches!(self, CubicDifferential::Constant { .. }) {
            return Err(Error::InvalidInput(
                "only constant cubic differentials are admitted on a torus".into(),
            ));
        }
        Ok(())
    }
}

pub(crate) fn horner(coeffs: &[Complex64], z: Complex64) -> Complex64 {
    coeffs
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c)
}

/// A solved metric: `h = e^u μ = 2e^{2ψ}|dz|²`.
#[derive(Clone, Debug)]
pub struct MetricSolution {
    pub domain: Domain,
    pub u: Array2<f64>,
    pub psi: Array2<f64>,
}

impl MetricSolution {
    pub fn from_u(domain: &Domain, mu: &BackgroundMetric, u: Array2<f64>) -> Result<Self> {
        let sigma = mu.sigma_field(domain)?;
        let psi = local_weight(&u, &sigma);
        Ok(MetricSolution {
            domain: *domain,
            u,
            psi,
        })
    }

    pub fn from_psi(domain: &Domain, mu: &BackgroundMetric, psi: Array2<f64>) -> Result<Self> {
        let sigma = mu.sigma_field(domain)?;
        let u = global_weight(&psi, &sigma);
        Ok(MetricSolution {
            domain: *domain,
            u,
            psi,
        })
    }

    pub fn psi_at(&self, (j, k): (usize, usize)) -> f64 {
        self.psi[[j, k]]
    }
}

/// `ψ = ½(u + log σ − log 2)`.
pub fn local_weight(u: &Array2<f64>, sigma: &Array2<f64>) -> Array2<f64> {
    let mut psi = u.clone();
    psi.zip_mut_with(sigma, |p, &s| *p = 0.5 * (*p + s.ln() - std::f64::consts::LN_2));
    psi
}

/// Inverse of [`local_weight`]: `u = 2ψ − log σ + log 2`.
pub fn global_weight(psi: &Array2<f64>, sigma: &Array2<f64>) -> Array2<f64> {
    let mut u = psi.clone();
    u.zip_mut_with(sigma, |p, &s| *p = 2.0 * *p - s.ln() + std::f64::consts::LN_2);
    u
}
