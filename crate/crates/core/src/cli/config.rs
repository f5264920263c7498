//! Run configuration: versioned JSON, complex numbers as `[re, im]`.

use crate::error::{Error, Result};
use crate::frames::SpanningTree;
use crate::geometry::{BackgroundMetric, CubicDifferential, Domain, GeometryTag, SignCase};
use crate::immersion::Tolerances;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// One of the six geometry names, e.g. `hyperbolic_affine`.
    pub case: String,
    pub domain: DomainSpec,
    #[serde(default)]
    pub metric: BackgroundMetric,
    #[serde(default = "zero_cubic")]
    pub cubic: CubicDifferential,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub immersion: ImmersionSpec,
    #[serde(default)]
    pub checks: CheckSpec,
    #[serde(default)]
    pub weierstrass: Option<WeierstrassSpec>,
    #[serde(default)]
    pub outputs: OutputSpec,
}

fn zero_cubic() -> CubicDifferential {
    CubicDifferential::zero()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    Torus {
        #[serde(default = "square_tau")]
        tau: Complex64,
        n: usize,
        #[serde(default)]
        m: Option<usize>,
    },
    Rectangle {
        width: f64,
        height: f64,
        n: usize,
        #[serde(default)]
        m: Option<usize>,
    },
    DiskPatch {
        radius: f64,
        n: usize,
        #[serde(default)]
        m: Option<usize>,
    },
}

fn square_tau() -> Complex64 {
    Complex64::new(0.0, 1.0)
}

impl DomainSpec {
    pub fn build(&self) -> Result<Domain> {
        match *self {
            DomainSpec::Torus { tau, n, m } => Domain::torus(tau, n, m.unwrap_or(n)),
            DomainSpec::Rectangle { width, height, n, m } => Domain::rectangle(width, height, n, m.unwrap_or(n)),
            DomainSpec::DiskPatch { radius, n, m } => Domain::disk_patch(radius, n, m.unwrap_or(n)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    Newton,
    Monotone,
    Continuation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSpec {
    pub method: SolverMethod,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Constant initial guess for Newton.
    pub initial: f64,
    /// Non-convergence exits with status 3 when set.
    pub require_convergence: bool,
    /// Continuation parameters for `Q = t·Q₀`.
    pub t_grid: Vec<f64>,
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec {
            method: SolverMethod::Newton,
            tolerance: 1e-10,
            max_iterations: 100,
            initial: 0.0,
            require_convergence: true,
            t_grid: (0..=10).map(|i| i as f64 / 10.0).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeSpec {
    RowFirst,
    ColumnFirst,
}

impl From<TreeSpec> for SpanningTree {
    fn from(t: TreeSpec) -> Self {
        match t {
            TreeSpec::RowFirst => SpanningTree::RowFirst,
            TreeSpec::ColumnFirst => SpanningTree::ColumnFirst,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImmersionSpec {
    pub tree: TreeSpec,
}

impl Default for ImmersionSpec {
    fn default() -> Self {
        ImmersionSpec { tree: TreeSpec::RowFirst }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckSpec {
    /// `C` in the tolerances `C·h^p + floor`.
    pub c: f64,
    pub floor: f64,
    /// Spectral parameters at which the Toda loop is checked.
    pub zetas: Vec<Complex64>,
}

impl Default for CheckSpec {
    fn default() -> Self {
        let t = Tolerances::default();
        CheckSpec {
            c: t.c,
            floor: t.floor,
            zetas: vec![Complex64::new(1.0, 0.0)],
        }
    }
}

impl CheckSpec {
    pub fn tolerances(&self) -> Tolerances {
        Tolerances {
            c: self.c,
            floor: self.floor,
        }
    }
}

/// Holomorphic data for the `weierstrass` stage; the graph is sampled on
/// `[−half_width, half_width]²` with `n` nodes per side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeierstrassSpec {
    pub f: Vec<Complex64>,
    pub g: Vec<Complex64>,
    pub half_width: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    /// `.obj` or `.json`; defaults by target when absent.
    pub mesh: Option<String>,
    pub report: String,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            mesh: None,
            report: "report.json".into(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn sign_case(&self) -> Result<SignCase> {
        GeometryTag::from_name(&self.case)
            .map(GeometryTag::sign_case)
            .ok_or_else(|| Error::Config(format!("unknown case {:?}", self.case)))
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| Error::Config(e.to_string());
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.sign_case()?;
        let d = self.domain.build().map_err(cfg)?;
        self.metric.validate().map_err(cfg)?;
        self.metric.sigma_field(&d).map_err(cfg)?;
        self.cubic.check_domain(&d).map_err(cfg)?;
        let s = &self.solver;
        if !(s.tolerance > 0.0) || s.max_iterations == 0 {
            return Err(Error::Config("solver tolerance and iteration cap must be positive".into()));
        }
        if s.method == SolverMethod::Continuation
            && (s.t_grid.is_empty() || s.t_grid.windows(2).any(|w| w[1] <= w[0]) || s.t_grid[0] < 0.0)
        {
            return Err(Error::Config("t_grid must be non-negative and strictly increasing".into()));
        }
        if !(self.checks.c > 0.0 && self.checks.floor >= 0.0) || self.checks.zetas.iter().any(|z| z.norm() == 0.0) {
            return Err(Error::Config("checks need C > 0, floor ≥ 0 and nonzero ζ".into()));
        }
        if let Some(w) = &self.weierstrass {
            if !(w.half_width > 0.0) || w.n < 8 {
                return Err(Error::Config("weierstrass box needs half_width > 0 and n ≥ 8".into()));
            }
        }
        if let Some(m) = &self.outputs.mesh {
            if !(m.ends_with(".obj") || m.ends_with(".json")) {
                return Err(Error::Config(format!("mesh output {m:?} must end in .obj or .json")));
            }
        }
        Ok(())
    }
}
