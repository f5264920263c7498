//! Flat connections `α = A dz + B dz̄`, their curvature and reality
//! conditions, and frame integration along paths.
//!
//! Two conventions are in use and kept explicit:
//! * row frames: `dF = α F`, frame vectors are the rows of `F`
//!   (affine structure equations, C² minimal Lagrangian);
//! * column frames: `F⁻¹ dF = α`, frame vectors are the columns
//!   (the ζ-family of the Toda equations, CP²/CH² minimal Lagrangian).

use crate::error::{Error, Result};
use crate::geometry::{CubicDifferential, Domain, MetricSolution, SignCase};
use crate::lattice::Lattice;
use nalgebra::{Matrix3, SMatrix};
use ndarray::{Array2, Zip};
use num_complex::Complex64;
use serde::Serialize;

pub type CMat<const N: usize> = SMatrix<Complex64, N, N>;
pub type Mat3 = Matrix3<Complex64>;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    RowFrame,
    ColumnFrame,
}

/// Which linear system a connection encodes. Each model has a fixed
/// convention.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameModel {
    /// The spectral family of the four `λ = ±1` cases (column frames).
    TodaLoop,
    /// Affine structure equations on the rows `(f_z, f_z̄, ξ)`.
    AffineStructure,
    /// Unitary frames of minimal Lagrangian surfaces in CP²/CH² (columns).
    MinimalLagrangian,
    /// Rows `(f_z, f_z̄, f)` of a minimal Lagrangian surface in C².
    FlatC2,
    /// Anything assembled by hand.
    Custom,
}

impl FrameModel {
    pub fn convention(self) -> Convention {
        match self {
            FrameModel::TodaLoop | FrameModel::MinimalLagrangian => Convention::ColumnFrame,
            _ => Convention::RowFrame,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ConnectionForm<const N: usize = 3> {
    pub a: Array2<CMat<N>>,
    pub b: Array2<CMat<N>>,
    pub convention: Convention,
    pub zeta: Complex64,
    pub model: FrameModel,
    pub domain: Domain,
}

impl<const N: usize> ConnectionForm<N> {
    pub fn constant(domain: &Domain, a: CMat<N>, b: CMat<N>, convention: Convention) -> Self {
        ConnectionForm {
            a: Array2::from_elem(domain.shape(), a),
            b: Array2::from_elem(domain.shape(), b),
            convention,
            zeta: c(1.0),
            model: FrameModel::Custom,
            domain: *domain,
        }
    }

    pub fn zero(domain: &Domain, convention: Convention) -> Self {
        Self::constant(domain, CMat::<N>::zeros(), CMat::<N>::zeros(), convention)
    }

    pub fn lattice(&self) -> &Lattice {
        self.domain.lattice()
    }

    /// `α(v) = A v + B v̄` for a tangent vector `v` written as a complex number.
    pub fn eval(&self, j: usize, k: usize, v: Complex64) -> CMat<N> {
        self.a[[j, k]] * v + self.b[[j, k]] * v.conj()
    }

    /// `(A, B)ᵀ` with the opposite convention; integrating it produces the
    /// transposed frames.
    pub fn transposed(&self) -> Self {
        ConnectionForm {
            a: self.a.mapv(|m| m.transpose()),
            b: self.b.mapv(|m| m.transpose()),
            convention: match self.convention {
                Convention::RowFrame => Convention::ColumnFrame,
                Convention::ColumnFrame => Convention::RowFrame,
            },
            zeta: self.zeta,
            model: FrameModel::Custom,
            domain: self.domain,
        }
    }

    /// Bilinear interpolation of `(A, B)` at an arbitrary point.
    pub fn interpolate(&self, z: Complex64) -> Result<(CMat<N>, CMat<N>)> {
        let lat = self.lattice();
        let (p, q) = lat.index_coords(z);
        let (j0, tj, j1) = cell(p, lat.nx, lat.periodic).ok_or(Error::PathExitsDomain(z))?;
        let (k0, tk, k1) = cell(q, lat.ny, lat.periodic).ok_or(Error::PathExitsDomain(z))?;
        let mix = |f: &Array2<CMat<N>>| {
            f[[j0, k0]] * c((1.0 - tj) * (1.0 - tk))
                + f[[j1, k0]] * c(tj * (1.0 - tk))
                + f[[j0, k1]] * c((1.0 - tj) * tk)
                + f[[j1, k1]] * c(tj * tk)
        };
        Ok((mix(&self.a), mix(&self.b)))
    }
}

/// Cell containing fractional index `p`: `(lower node, weight, upper node)`.
fn cell(p: f64, n: usize, periodic: bool) -> Option<(usize, f64, usize)> {
    const SLACK: f64 = 1e-9;
    if periodic {
        let w = p.rem_euclid(n as f64);
        let i0 = (w.floor() as usize).min(n - 1);
        return Some((i0, w - i0 as f64, (i0 + 1) % n));
    }
    let top = (n - 1) as f64;
    if !(p >= -SLACK && p <= top + SLACK) {
        return None;
    }
    let p = p.clamp(0.0, top);
    let i0 = (p.floor() as usize).min(n - 2);
    Some((i0, p - i0 as f64, i0 + 1))
}

fn complex_field(f: &Array2<f64>) -> Array2<Complex64> {
    f.mapv(c)
}

fn psi_derivatives(sol: &MetricSolution) -> (Array2<Complex64>, Array2<Complex64>) {
    let lat = sol.domain.lattice();
    let psi = complex_field(&sol.psi);
    let mut dz = Array2::zeros(lat.shape());
    let mut dzb = Array2::zeros(lat.shape());
    Zip::indexed(&mut dz).and(&mut dzb).par_for_each(|(j, k), a, b| {
        *a = lat.d_z(&psi, j, k);
        *b = lat.d_zbar(&psi, j, k);
    });
    (dz, dzb)
}

/// Builds `α` for the requested model; `ψ` derivatives come from centered
/// differences of the sampled field.
pub fn build_connection(
    sol: &MetricSolution,
    q: &CubicDifferential,
    case: SignCase,
    zeta: Complex64,
    model: FrameModel,
) -> Result<ConnectionForm<3>> {
    let lam = case.lam();
    let eps = case.eps();
    let spectral = model == FrameModel::TodaLoop;
    if !spectral && zeta != c(1.0) {
        return Err(case.reject("the spectral parameter only enters the four Toda cases"));
    }
    match model {
        FrameModel::TodaLoop if case.lambda == 0 => {
            return Err(case.reject("the spectral family needs λ = ±1"))
        }
        FrameModel::TodaLoop => {}
        FrameModel::AffineStructure if case.epsilon != 1 => {
            return Err(case.reject("affine structure equations need ε = 1"))
        }
        FrameModel::MinimalLagrangian if case.epsilon != -1 || case.lambda == 0 => {
            return Err(case.reject("CP²/CH² frames need ε = −1, λ = ±1"))
        }
        FrameModel::FlatC2 if case != SignCase::MINLAG_C2 => {
            return Err(case.reject("C² frames need ε = −1, λ = 0"))
        }
        FrameModel::Custom => {
            return Err(Error::InvalidInput("custom connections are assembled directly".into()))
        }
        _ => {}
    }
    if zeta.norm() == 0.0 || !zeta.is_finite() {
        return Err(Error::InvalidInput("ζ must be a finite nonzero number".into()));
    }
    let domain = sol.domain;
    let (pz, pzb) = psi_derivatives(sol);
    let mut a = Array2::from_elem(domain.shape(), Mat3::zeros());
    let mut b = a.clone();
    let zi = zeta.inv();
    Zip::indexed(&mut a).and(&mut b).par_for_each(|(j, k), am, bm| {
        let z = domain.z(j, k);
        let qv = q.eval(z);
        let s = sol.psi[[j, k]];
        let e = c(s.exp());
        let e2 = c((2.0 * s).exp());
        let em2 = c((-2.0 * s).exp());
        let (dz, dzb) = (pz[[j, k]], pzb[[j, k]]);
        let o = Complex64::new(0.0, 0.0);
        let (ma, mb) = match model {
            FrameModel::TodaLoop => (
                Mat3::new(dz, o, -zeta * lam * e, zeta * qv * em2, -dz, o, o, -zeta * lam * e, o),
                Mat3::new(-dzb, zi * eps * qv.conj() * em2, o, o, dzb, zi * e, zi * e, o, o),
            ),
            FrameModel::AffineStructure => (
                Mat3::new(dz * 2.0, qv * em2, o, o, o, e2, c(-lam), o, o),
                Mat3::new(o, o, e2, qv.conj() * em2, dzb * 2.0, o, o, c(-lam), o),
            ),
            FrameModel::MinimalLagrangian => (
                Mat3::new(dz, o, e, qv * em2, -dz, o, o, -lam * e, o),
                Mat3::new(-dzb, -qv.conj() * em2, o, o, dzb, e, -lam * e, o, o),
            ),
            FrameModel::FlatC2 => (
                Mat3::new(dz * 2.0, -qv * em2, o, o, o, o, c(1.0), o, o),
                Mat3::new(o, o, o, qv.conj() * em2, dzb * 2.0, o, o, c(1.0), o),
            ),
            FrameModel::Custom => unreachable!(),
        };
        *am = ma;
        *bm = mb;
    });
    Ok(ConnectionForm {
        a,
        b,
        convention: model.convention(),
        zeta,
        model,
        domain,
    })
}

/// The affine structure system augmented by the position row:
/// rows `(f_z, f_z̄, ξ, f)` with `f_z`, `f_z̄` the first two rows.
pub fn build_affine_augmented(sol: &MetricSolution, q: &CubicDifferential, lambda: i8) -> Result<ConnectionForm<4>> {
    let case = SignCase::new(1, lambda)?;
    let base = build_connection(sol, q, case, c(1.0), FrameModel::AffineStructure)?;
    let grow = |m: &Mat3, pos: usize| {
        let mut g = CMat::<4>::zeros();
        g.fixed_view_mut::<3, 3>(0, 0).copy_from(m);
        g[(3, pos)] = c(1.0);
        g
    };
    Ok(ConnectionForm {
        a: base.a.mapv(|m| grow(&m, 0)),
        b: base.b.mapv(|m| grow(&m, 1)),
        convention: Convention::RowFrame,
        zeta: c(1.0),
        model: FrameModel::AffineStructure,
        domain: base.domain,
    })
}

impl ConnectionForm<3> {
    /// Re-evaluates a Toda-loop connection at another spectral parameter:
    /// diagonal entries are ζ-independent, off-diagonal entries of `A`
    /// scale with `ζ` and those of `B` with `ζ⁻¹`.
    pub fn at_zeta(&self, zeta: Complex64) -> Result<Self> {
        if self.model != FrameModel::TodaLoop {
            return Err(Error::InvalidInput("only the Toda loop carries a spectral parameter".into()));
        }
        let ra = zeta / self.zeta;
        let rb = self.zeta / zeta;
        let rescale = |m: &Mat3, r: Complex64| {
            Mat3::from_fn(|i, j| if i == j { m[(i, j)] } else { m[(i, j)] * r })
        };
        Ok(ConnectionForm {
            a: self.a.mapv(|m| rescale(&m, ra)),
            b: self.b.mapv(|m| rescale(&m, rb)),
            zeta,
            ..self.clone()
        })
    }
}

/// Frobenius norm of `∂z̄A − ∂zB ± [A, B]` (sign per convention).
///
/// On planar domains `A` already holds one-sided `ψ` derivatives on the
/// boundary, and differencing those again is only first-order accurate, so
/// nodes within two cells of the boundary are reported as 0.
pub fn curvature_residual<const N: usize>(alpha: &ConnectionForm<N>) -> Array2<f64> {
    let lat = alpha.lattice();
    let sign = match alpha.convention {
        Convention::RowFrame => 1.0,
        Convention::ColumnFrame => -1.0,
    };
    let deep = |j: usize, k: usize| lat.periodic || (j >= 2 && k >= 2 && j + 2 < lat.nx && k + 2 < lat.ny);
    let mut out = Array2::zeros(lat.shape());
    Zip::indexed(&mut out).par_for_each(|(j, k), r| {
        if deep(j, k) {
            let (a, b) = (alpha.a[[j, k]], alpha.b[[j, k]]);
            let curv = lat.d_zbar(&alpha.a, j, k) - lat.d_z(&alpha.b, j, k) + (a * b - b * a) * c(sign);
            *r = curv.norm();
        }
    });
    out
}

/// The involution pairs `(ι, ρ)` of the four real forms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RealForm {
    /// `X(−ζ̄⁻¹) = −X(ζ)†`; hyperbolic affine spheres.
    A,
    /// `X(−ζ̄⁻¹) = −X(ζ)★`; elliptic affine spheres.
    B,
    /// `X(ζ̄⁻¹) = −X(ζ)★`; minimal Lagrangian in CH².
    C,
    /// `X(ζ̄⁻¹) = −X(ζ)†`; minimal Lagrangian in CP².
    D,
}

impl RealForm {
    pub const ALL: [RealForm; 4] = [RealForm::A, RealForm::B, RealForm::C, RealForm::D];

    pub fn for_case(case: SignCase) -> Result<Self> {
        match (case.epsilon, case.lambda) {
            (1, -1) => Ok(RealForm::A),
            (1, 1) => Ok(RealForm::B),
            (-1, -1) => Ok(RealForm::C),
            (-1, 1) => Ok(RealForm::D),
            _ => Err(case.reject("reality conditions exist only for λ = ±1")),
        }
    }

    pub fn iota(self, zeta: Complex64) -> Complex64 {
        let r = zeta.conj().inv();
        match self {
            RealForm::A | RealForm::B => -r,
            RealForm::C | RealForm::D => r,
        }
    }

    pub fn rho(self, x: &Mat3) -> Mat3 {
        let h = x.adjoint();
        match self {
            RealForm::A | RealForm::D => -h,
            RealForm::B | RealForm::C => {
                let eta = eta();
                -(eta * h * eta)
            }
        }
    }
}

/// `η = diag(1, 1, −1)`.
pub fn eta() -> Mat3 {
    Mat3::from_diagonal(&nalgebra::Vector3::new(c(1.0), c(1.0), c(-1.0)))
}

/// `max ‖X(ι(ζ)) − ρ(X(ζ))‖` over samples, nodes and the real tangent
/// vectors `∂x`, `∂y`.
pub fn reality_residual(alpha: &ConnectionForm<3>, form: RealForm, zetas: &[Complex64]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &z in zetas {
        let x = alpha.at_zeta(z)?;
        let y = alpha.at_zeta(form.iota(z))?;
        let w = Zip::indexed(&x.a).par_fold(
            || 0.0f64,
            |m, (j, k), _| {
                [c(1.0), I].iter().fold(m, |m, &v| {
                    m.max((y.eval(j, k, v) - form.rho(&x.eval(j, k, v))).norm())
                })
            },
            |a, b| a.max(b),
        );
        worst = worst.max(w);
    }
    Ok(worst)
}

pub fn reality_check(alpha: &ConnectionForm<3>, case: SignCase, zetas: &[Complex64]) -> Result<f64> {
    reality_residual(alpha, RealForm::for_case(case)?, zetas)
}

/// `max ‖X(−ζ) − ν(X(ζ))‖` for the outer automorphism `ν(X) = −T Xᵀ T⁻¹`,
/// `T` the transposition of the first two basis vectors.
pub fn twisted_symmetry_residual(alpha: &ConnectionForm<3>, zetas: &[Complex64]) -> Result<f64> {
    let t = Mat3::new(
        c(0.0), c(1.0), c(0.0),
        c(1.0), c(0.0), c(0.0),
        c(0.0), c(0.0), c(1.0),
    );
    let mut worst: f64 = 0.0;
    for &z in zetas {
        let x = alpha.at_zeta(z)?;
        let y = alpha.at_zeta(-z)?;
        for ((j, k), _) in x.a.indexed_iter() {
            for v in [c(1.0), I] {
                let nu = -(t * x.eval(j, k, v).transpose() * t);
                worst = worst.max((y.eval(j, k, v) - nu).norm());
            }
        }
    }
    Ok(worst)
}

/// A polyline whose consecutive points lie within one grid cell.
#[derive(Clone, Debug, PartialEq)]
pub struct PathSpec {
    pub points: Vec<Complex64>,
    pub closed: bool,
}

impl PathSpec {
    pub fn new(lattice: &Lattice, points: Vec<Complex64>, closed: bool) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidInput("a path needs at least two points".into()));
        }
        for w in points.windows(2) {
            let (p0, q0) = lattice.index_coords(w[0]);
            let (p1, q1) = lattice.index_coords(w[1]);
            if (p1 - p0).abs() > 1.0 + 1e-9 || (q1 - q0).abs() > 1.0 + 1e-9 {
                return Err(Error::InvalidInput(format!(
                    "path points {} and {} are more than one cell apart",
                    w[0], w[1]
                )));
            }
        }
        if closed {
            let (p0, q0) = lattice.index_coords(points[0]);
            let (p1, q1) = lattice.index_coords(*points.last().unwrap());
            let (dp, dq) = (p1 - p0, q1 - q0);
            let ok = if lattice.periodic {
                let off = |d: f64, n: usize| {
                    let r = d / n as f64;
                    (r - r.round()).abs() * n as f64
                };
                off(dp, lattice.nx) < 1e-9 && off(dq, lattice.ny) < 1e-9
            } else {
                dp.abs() < 1e-9 && dq.abs() < 1e-9
            };
            if !ok {
                return Err(Error::PathNotClosed);
            }
        }
        Ok(PathSpec { points, closed })
    }

    /// Straight segments between `vertices`, subdivided to cell size.
    pub fn polyline(lattice: &Lattice, vertices: &[Complex64], closed: bool) -> Result<Self> {
        let mut pts = vec![*vertices.first().ok_or_else(|| Error::InvalidInput("empty path".into()))?];
        for w in vertices.windows(2) {
            let (p0, q0) = lattice.index_coords(w[0]);
            let (p1, q1) = lattice.index_coords(w[1]);
            let n = ((p1 - p0).abs().max((q1 - q0).abs()) - 1e-9).ceil().max(1.0) as usize;
            for i in 1..=n {
                pts.push(w[0] + (w[1] - w[0]) * (i as f64 / n as f64));
            }
        }
        Self::new(lattice, pts, closed)
    }

    /// Loop from node `base` along the lattice period `1` (`which = 0`) or
    /// `τ` (`which = 1`).
    pub fn torus_generator(domain: &Domain, which: usize, base: (usize, usize)) -> Result<Self> {
        let crate::geometry::DomainKind::Torus { tau } = domain.kind else {
            return Err(Error::InvalidInput("generator loops need a torus".into()));
        };
        let z0 = domain.z(base.0, base.1);
        let period = if which == 0 { c(1.0) } else { tau };
        Self::polyline(domain.lattice(), &[z0, z0 + period], true)
    }

    /// Boundary of the grid cell with lower corner `(j, k)`.
    pub fn cell_loop(lattice: &Lattice, j: usize, k: usize) -> Result<Self> {
        let z = |a: usize, b: usize| lattice.z(a, b);
        Self::new(
            lattice,
            vec![z(j, k), z(j + 1, k), z(j + 1, k + 1), z(j, k + 1), z(j, k)],
            true,
        )
    }

    /// The same path traversed backwards.
    pub fn reversed(&self) -> Self {
        let mut points = self.points.clone();
        points.reverse();
        PathSpec {
            points,
            closed: self.closed,
        }
    }
}

fn derivative<const N: usize>(f: &CMat<N>, x: &CMat<N>, conv: Convention) -> CMat<N> {
    match conv {
        Convention::RowFrame => x * f,
        Convention::ColumnFrame => f * x,
    }
}

/// One classical RK4 step for `F' = X(t)F` (or `F X(t)`), given `X` at the
/// start, midpoint and end of the step.
fn rk4_step<const N: usize>(f: &CMat<N>, x0: &CMat<N>, xm: &CMat<N>, x1: &CMat<N>, h: f64, conv: Convention) -> CMat<N> {
    let hc = c(h);
    let k1 = derivative(f, x0, conv);
    let k2 = derivative(&(f + k1 * (hc * 0.5)), xm, conv);
    let k3 = derivative(&(f + k2 * (hc * 0.5)), xm, conv);
    let k4 = derivative(&(f + k3 * hc), x1, conv);
    f + (k1 + k2 * c(2.0) + k3 * c(2.0) + k4) * (hc / 6.0)
}

/// Transports `f0` along `path`, with RK4 steps of at most half a cell and
/// `α` bilinearly interpolated.
pub fn integrate_frame<const N: usize>(alpha: &ConnectionForm<N>, path: &PathSpec, f0: &CMat<N>) -> Result<CMat<N>> {
    let lat = alpha.lattice();
    let mut f = *f0;
    for w in path.points.windows(2) {
        let (p0, q0) = lat.index_coords(w[0]);
        let (p1, q1) = lat.index_coords(w[1]);
        let steps = (2.0 * (p1 - p0).abs().max((q1 - q0).abs())).ceil().max(2.0) as usize;
        let dz = w[1] - w[0];
        let gen = |t: f64| -> Result<CMat<N>> {
            let (a, b) = alpha.interpolate(w[0] + dz * t)?;
            Ok(a * dz + b * dz.conj())
        };
        let h = 1.0 / steps as f64;
        let mut x0 = gen(0.0)?;
        for s in 0..steps {
            let t = s as f64 * h;
            let xm = gen(t + 0.5 * h)?;
            let x1 = gen(t + h)?;
            f = rk4_step(&f, &x0, &xm, &x1, h, alpha.convention);
            x0 = x1;
        }
    }
    Ok(f)
}

/// `hol(γ)`: the inverse of parallel transport around a closed loop, which
/// with `F₀ = I` is the transported frame itself.
pub fn holonomy<const N: usize>(alpha: &ConnectionForm<N>, loop_: &PathSpec) -> Result<CMat<N>> {
    if !loop_.closed {
        return Err(Error::PathNotClosed);
    }
    integrate_frame(alpha, loop_, &CMat::<N>::identity())
}

/// Order in which a spanning tree of the grid is walked from the base node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SpanningTree {
    /// Along the base row (varying `j`), then along every column.
    RowFirst,
    /// Along the base column (varying `k`), then along every row.
    ColumnFirst,
}

/// Frames at every node, integrated edge by edge over a spanning tree (no
/// wrap-around on tori). Each edge takes two RK4 steps with `α` linear
/// along the edge.
///
/// On planar grids the tree spans the interior nodes only and every
/// boundary node hangs off its nearest interior node by one edge: `α` holds
/// one-sided derivatives on the boundary, and walking along a boundary line
/// would accumulate their larger error into a kink across the first row.
pub fn integrate_tree<const N: usize>(
    alpha: &ConnectionForm<N>,
    base: (usize, usize),
    f0: &CMat<N>,
    tree: SpanningTree,
) -> Array2<CMat<N>> {
    let lat = alpha.lattice();
    let (nx, ny) = lat.shape();
    let mut frames = Array2::from_elem((nx, ny), CMat::<N>::zeros());
    let start_node = base;
    frames[base] = *f0;
    let edge = |f: &CMat<N>, from: (usize, usize), to: (usize, usize)| {
        let dz = lat.z(to.0, to.1) - lat.z(from.0, from.1);
        let x0 = alpha.eval(from.0, from.1, dz);
        let x1 = alpha.eval(to.0, to.1, dz);
        let xm = (x0 + x1) * c(0.5);
        let xq = (x0 * c(0.75) + x1 * c(0.25), x0 * c(0.25) + x1 * c(0.75));
        let f = rk4_step(f, &x0, &xq.0, &xm, 0.5, alpha.convention);
        rk4_step(&f, &xm, &xq.1, &x1, 0.5, alpha.convention)
    };
    let inset = usize::from(!lat.periodic && nx > 2 && ny > 2);
    let (jr, kr) = (inset..nx - inset, inset..ny - inset);
    let base = (base.0.clamp(jr.start, jr.end - 1), base.1.clamp(kr.start, kr.end - 1));
    let mut frames = frames;
    if base != start_node {
        frames[base] = edge(&frames[start_node], start_node, base);
    }
    // walks a line of nodes outward from `start` in both directions
    let sweep = |frames: &mut Array2<CMat<N>>, start: (usize, usize), along_j: bool| {
        let range = if along_j { jr.clone() } else { kr.clone() };
        let s = if along_j { start.0 } else { start.1 };
        let node = |i: usize| if along_j { (i, start.1) } else { (start.0, i) };
        for i in s + 1..range.end {
            let f = edge(&frames[node(i - 1)], node(i - 1), node(i));
            frames[node(i)] = f;
        }
        for i in (range.start..s).rev() {
            let f = edge(&frames[node(i + 1)], node(i + 1), node(i));
            frames[node(i)] = f;
        }
    };
    match tree {
        SpanningTree::RowFirst => {
            sweep(&mut frames, base, true);
            for j in jr.clone() {
                sweep(&mut frames, (j, base.1), false);
            }
        }
        SpanningTree::ColumnFirst => {
            sweep(&mut frames, base, false);
            for k in kr.clone() {
                sweep(&mut frames, (base.0, k), true);
            }
        }
    }
    if inset == 1 {
        for j in 0..nx {
            for k in 0..ny {
                if lat.is_boundary(j, k) && (j, k) != start_node {
                    let from = (j.clamp(1, nx - 2), k.clamp(1, ny - 2));
                    frames[[j, k]] = edge(&frames[from], from, (j, k));
                }
            }
        }
    }
    frames
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupTag {
    Sl3rConjugate,
    Su3,
    Su21,
    Unconstrained,
}

impl GroupTag {
    pub fn for_case(case: SignCase) -> Self {
        match (case.epsilon, case.lambda) {
            (_, 0) => GroupTag::Unconstrained,
            (1, _) => GroupTag::Sl3rConjugate,
            (-1, 1) => GroupTag::Su3,
            _ => GroupTag::Su21,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct FrameState {
    pub f: Mat3,
    pub group: GroupTag,
    /// Determinant of the initial frame.
    pub det0: Complex64,
}

impl FrameState {
    pub fn new(f: Mat3, group: GroupTag) -> Self {
        FrameState {
            f,
            group,
            det0: f.determinant(),
        }
    }

    pub fn identity(group: GroupTag) -> Self {
        Self::new(Mat3::identity(), group)
    }

    pub fn transported(&self, alpha: &ConnectionForm<3>, path: &PathSpec) -> Result<Self> {
        Ok(FrameState {
            f: integrate_frame(alpha, path, &self.f)?,
            ..*self
        })
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct GroupResiduals {
    pub group: GroupTag,
    pub det_drift: f64,
    /// Distance from the group, when the tag names one.
    pub membership: Option<f64>,
}

/// The constant gauge relating the affine sphere frame to a real one.
pub fn sphere_gauge() -> Mat3 {
    let h = c(0.5);
    Mat3::new(h, h, c(0.0), -I * 0.5, I * 0.5, c(0.0), c(0.0), c(0.0), c(1.0))
}

pub fn group_residuals(state: &FrameState) -> GroupResiduals {
    let f = &state.f;
    let membership = match state.group {
        GroupTag::Su3 => Some((f.adjoint() * f - Mat3::identity()).norm()),
        GroupTag::Su21 => {
            let e = eta();
            Some((f.adjoint() * e * f - e).norm())
        }
        GroupTag::Sl3rConjugate => {
            let inv = sphere_gauge().try_inverse().expect("gauge matrix is invertible");
            Some((f * inv).map(|v| v.im).norm())
        }
        GroupTag::Unconstrained => None,
    };
    GroupResiduals {
        group: state.group,
        det_drift: (f.determinant() - state.det0).norm(),
        membership,
    }
}
